import pytest

from covertmail import attack_forge as af
from covertmail import crypto_mock as cm
from covertmail import html_css as hc
from covertmail import mime_core as mc
from covertmail.attack_forge import (
    AudioElement,
    CanvasElement,
    CidReference,
    DocumentUrlPrefix,
    ForgeSpec,
    HtmlComment,
    Iframe,
    MediaWidth,
    NewlinePadding,
    ProprietaryClient,
    SupportsFeature,
)
from covertmail.mime_core import PartiallyEncrypted, Scheme

JOHNNY = "johnny@good.com"
SECRET = b"Secret message, for Johnny's eye only..."

SPEC = ForgeSpec("eve@evil.com", JOHNNY, "Hello Johnny, I'm interested in your work.", seed=7)

ALL_METHODS = [
    NewlinePadding(50),
    Iframe(),
    HtmlComment(),
    AudioElement(),
    CanvasElement(),
    CidReference(),
]

ALL_CONDITIONS = [
    MediaWidth(834, 835),
    SupportsFeature("backdrop-filter", "blur(2px)"),
    DocumentUrlPrefix("imap://general@good.com"),
    ProprietaryClient("wlm"),
    ProprietaryClient("mso"),
    ProprietaryClient("owa"),
    ProprietaryClient("moz"),
]


def smime(secret=SECRET):
    return cm.encrypt(secret, [JOHNNY], Scheme.SMIME_ENVELOPED)


def pgp(secret=SECRET):
    return cm.encrypt(secret, [JOHNNY], Scheme.PGP_MIME)


def test_iframe_forgery_matches_attack_shape():
    msg = af.forge_decryption_oracle(SPEC, [smime()], Iframe())
    assert msg.header("from") == "eve@evil.com"
    assert msg.header("to") == JOHNNY
    assert msg.content_type.full == "multipart/mixed"
    decoy, ct = msg.children
    assert decoy.content_type.full == "text/html"
    text = decoy.text
    assert text.rstrip().endswith('<iframe height="1" frameborder="0">')
    assert "</iframe>" not in text
    assert ct.content_type.full == "application/pkcs7-mime"


def test_comment_audio_canvas_openers():
    for method, opener in [
        (HtmlComment(), "<!--"),
        (AudioElement(), "<audio>"),
        (CanvasElement(), "<canvas>"),
    ]:
        msg = af.forge_decryption_oracle(SPEC, [smime()], method)
        assert msg.children[0].text.rstrip().endswith(opener)


def test_newline_padding_plain_decoy():
    msg = af.forge_decryption_oracle(SPEC, [smime()], NewlinePadding(40))
    decoy = msg.children[0]
    assert decoy.content_type.full == "text/plain"
    assert decoy.text.count("\r\n") >= 40


def test_cid_forgery_structure():
    msg = af.forge_decryption_oracle(SPEC, [pgp()], CidReference())
    assert msg.content_type.full == "multipart/related"
    decoy, ct = msg.children
    assert af.CID_STYLE_LINE in decoy.text
    assert '<img src="cid:target_0">' in decoy.text
    assert ct.header("content-id") == "<target_0>"
    out = mc.serialize_message(msg)
    assert b"Content-ID: <target_0>" in out
    assert b"--PGPMIME" in out


def test_cid_forgery_numbers_many_ciphertexts():
    msg = af.forge_decryption_oracle(SPEC, [pgp(b"a"), pgp(b"b"), pgp(b"c")], CidReference())
    decoy = msg.children[0]
    for i in range(3):
        assert f'<img src="cid:target_{i}">' in decoy.text
        assert msg.children[i + 1].header("content-id") == f"<target_{i}>"


def test_inline_armor_text_accepted():
    armor = cm.encrypt(SECRET, [JOHNNY], Scheme.PGP_INLINE).text
    msg = af.forge_decryption_oracle(SPEC, [armor], NewlinePadding(5))
    part = msg.children[1]
    assert part.content_type.full == "text/plain"
    assert "BEGIN PGP MESSAGE" in part.text


def test_zero_ciphertexts_rejected():
    with pytest.raises(af.IncompatibleMethod):
        af.forge_decryption_oracle(SPEC, [], CidReference())


def test_non_ciphertext_rejected():
    with pytest.raises(af.InvalidCiphertext):
        af.forge_decryption_oracle(SPEC, [mc.leaf("text/plain", "not encrypted")], Iframe())
    with pytest.raises(af.InvalidCiphertext):
        af.forge_decryption_oracle(SPEC, ["no armor here"], Iframe())


def test_every_forgery_is_partially_encrypted_and_round_trips():
    envs = [smime(b"s-one"), pgp(b"s-two")]
    for method in ALL_METHODS:
        msg = af.forge_decryption_oracle(SPEC, envs, method)
        assert isinstance(mc.classify_structure(msg), PartiallyEncrypted)
        raw = mc.serialize_message(msg)
        assert mc.parse_message(raw) == msg


def test_batch_forgery_sizes():
    envs = [smime(f"secret-{i}".encode() + b"x" * 1024) for i in range(100)]
    msg = af.forge_decryption_oracle(SPEC, envs, Iframe())
    assert len(msg.children) == 101
    assert len(mc.serialize_message(msg)) < 25 * 1024 * 1024


def test_forgery_deterministic_given_seed():
    msg1 = af.forge_decryption_oracle(SPEC, [smime()], Iframe())
    msg2 = af.forge_decryption_oracle(SPEC, [smime()], Iframe())
    assert mc.serialize_message(msg1) == mc.serialize_message(msg2)


def test_closing_part_helper():
    assert af.closing_part(Iframe()).text == "</iframe>"
    assert af.closing_part(NewlinePadding(5)) is None


def test_append_closer_option():
    msg = af.forge_decryption_oracle(SPEC, [smime()], Iframe(), append_closer=True)
    assert len(msg.children) == 3
    assert msg.children[-1].text == "</iframe>"
    default = af.forge_decryption_oracle(SPEC, [smime()], Iframe())
    assert len(default.children) == 2


def test_spec_address_validation():
    with pytest.raises(af.ForgeError):
        ForgeSpec("not-an-address", JOHNNY)
    with pytest.raises(af.ForgeError):
        MediaWidth(900, 800)
    with pytest.raises(af.ForgeError):
        ProprietaryClient("unknown")
    with pytest.raises(af.ForgeError):
        NewlinePadding(0)


# -- signing oracle ------------------------------------------------------------


def test_media_width_signing_stylesheet_shape():
    msg = af.forge_signing_oracle(SPEC, "What's up Johnny?", "I hereby declare war.", MediaWidth(834, 835))
    assert msg.content_type.full == "text/html"
    body = msg.text
    assert "@media (max-device-width: 834px)" in body
    assert "@media (min-device-width: 835px)" in body
    assert "visibility: visible !important; position: absolute; top: 8px; left: 8px;" in body
    assert '<div class="covert" style="visibility: hidden">I hereby declare war.</div>' in body
    assert "* {visibility: hidden;}" in body


def test_document_url_prefix_css():
    msg = af.forge_signing_oracle(SPEC, "a", "b", DocumentUrlPrefix("imap://general@good.com"))
    assert '@-moz-document url-prefix("imap://general@good.com")' in msg.text


def test_supports_css():
    msg = af.forge_signing_oracle(SPEC, "a", "b", SupportsFeature("p1", "v1"))
    assert "@supports (p1: v1)" in msg.text


def test_proprietary_wrappers():
    mso = af.forge_signing_oracle(SPEC, "a", "b", ProprietaryClient("mso")).text
    assert "<!--[if mso]>" in mso and "<![endif]-->" in mso
    wlm = af.forge_signing_oracle(SPEC, "a", "b", ProprietaryClient("wlm")).text
    assert "<!--[if IE]>" in wlm
    owa = af.forge_signing_oracle(SPEC, "a", "b", ProprietaryClient("owa")).text
    assert ".ExternalClass .covert, [owa] .covert" in owa
    moz = af.forge_signing_oracle(SPEC, "a", "b", ProprietaryClient("moz")).text
    assert ".moz-text-html .covert" in moz


def test_empty_covert_rejected():
    with pytest.raises(af.EmptyCovertText):
        af.forge_signing_oracle(SPEC, "visible", "", MediaWidth())


def test_signing_forgeries_render_both_sides():
    for condition in ALL_CONDITIONS:
        msg = af.forge_signing_oracle(SPEC, "What's up Johnny?", "I hereby declare war.", condition)
        dom = hc.parse_html(msg.text)
        sheet = hc.collect_styles(dom)
        if isinstance(condition, MediaWidth):
            hide_side = hc.DeviceProfile(device_width_px=condition.hide_below_px)
            show_side = hc.DeviceProfile(device_width_px=condition.show_from_px)
        elif isinstance(condition, SupportsFeature):
            hide_side = hc.DeviceProfile()
            show_side = hc.DeviceProfile(
                supported_features=frozenset({(condition.property, condition.value)})
            )
        elif isinstance(condition, DocumentUrlPrefix):
            hide_side = hc.DeviceProfile(document_url="imap://johnny@good.com/INBOX")
            show_side = hc.DeviceProfile(document_url=condition.url + "/INBOX")
        else:
            hide_side = hc.DeviceProfile()
            show_side = hc.DeviceProfile(client_tokens=frozenset({condition.token}))
        assert hc.visible_text(dom, sheet, hide_side) == "What's up Johnny?"
        assert hc.visible_text(dom, sheet, show_side) == "I hereby declare war."


# -- blinding declarations ---------------------------------------------------------


def test_blinding_declaration_exact_values():
    assert af.blinding_declaration("display", "hide") == "display: none;"
    assert af.blinding_declaration("opacity", "show") == "opacity: 1;"
    assert (
        af.blinding_declaration("position", "hide")
        == "position: absolute; top: -9999px; left: -9999px;"
    )
    assert (
        af.blinding_declaration("clip-path", "hide")
        == "clip-path: polygon(0px 0px, 0px 0px, 0px 0px, 0px 0px);"
    )


def test_unknown_blinding_property():
    with pytest.raises(af.UnknownProperty):
        af.blinding_declaration("z-index", "hide")


def test_all_fourteen_declarations_parse_back():
    for prop in af.BLINDING_PROPERTIES:
        for mode in ("show", "hide"):
            decl = af.blinding_declaration(prop, mode)
            sheet = hc.parse_css("x {" + decl + "}")
            (_, rule), = list(sheet)
            assert any(d.property == prop for d in rule.declarations)
            assert not sheet.warnings
