import pytest

from covertmail import attack_forge as af
from covertmail import client_sim as cs
from covertmail import crypto_mock as cm
from covertmail import guard
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
from covertmail.mime_core import Scheme

JOHNNY = "johnny@good.com"
EVE = "eve@evil.com"
KEYRING = frozenset({JOHNNY})
SECRETS = [b"guard secret alpha", b"guard secret beta"]

SPEC = ForgeSpec(EVE, JOHNNY, "Hello Johnny, quick question for you.", seed=11)

ALL_METHODS = [
    NewlinePadding(30),
    Iframe(),
    HtmlComment(),
    AudioElement(),
    CanvasElement(),
    CidReference(),
]

ALL_CONDITIONS = [
    MediaWidth(834, 835),
    MediaWidth(389, 390),
    SupportsFeature("backdrop-filter", "blur(2px)"),
    DocumentUrlPrefix("imap://general@good.com"),
    ProprietaryClient("wlm"),
    ProprietaryClient("mso"),
    ProprietaryClient("owa"),
    ProprietaryClient("moz"),
]


def envelopes(scheme=Scheme.SMIME_ENVELOPED):
    return [cm.encrypt(s, [JOHNNY, EVE], scheme) for s in SECRETS]


def forged_decryption_corpus():
    msgs = []
    for method in ALL_METHODS:
        msgs.append((method, af.forge_decryption_oracle(SPEC, envelopes(), method)))
    return msgs


def forged_signing_corpus():
    return [
        (cond, af.forge_signing_oracle(SPEC, "What's up Johnny?", "I hereby declare war.", cond))
        for cond in ALL_CONDITIONS
    ]


def benign_corpus():
    msgs = []
    for i in range(8):
        msgs.append(mc.leaf("text/plain", f"ordinary message {i}\nwith two lines",
                            headers=(("From", "a@b.org"), ("To", "c@d.org"))))
    for i in range(6):
        msgs.append(
            mc.leaf(
                "text/html",
                '<style>p {color: navy; font-size: 14px}</style>'
                f"<p>styled but honest newsletter {i}</p>",
                headers=(("From", "news@letter.org"),),
            )
        )
    msgs.append(
        mc.multipart(
            "mixed",
            [mc.leaf("text/plain", "cover letter"), mc.leaf("text/html", "<b>attachment</b>")],
            "benign0",
        )
    )
    for i, scheme in enumerate(Scheme):
        msgs.append(cm.encrypt(f"fully sealed {i}".encode(), [JOHNNY], scheme))
    msgs.append(cm.sign(mc.leaf("text/plain", "signed honest text"), JOHNNY))
    msgs.append(
        mc.multipart(
            "related",
            [
                mc.leaf("text/html", '<img src="cid:logo"> inline logo mail'),
                mc.leaf("image/png", b"\x89PNG fake bytes", headers=(("Content-ID", "<logo>"),)),
            ],
            "benign1",
        )
    )
    assert len(msgs) >= 20
    return msgs


def kinds(findings):
    return {f.kind for f in findings}


# -- analyze -----------------------------------------------------------------


def test_iframe_attack_findings():
    msg = af.forge_decryption_oracle(SPEC, envelopes(), Iframe())
    found = kinds(guard.analyze(msg))
    assert {"PartialEncryption", "HiddenContainerBeforeCiphertext"} <= found


def test_cid_attack_findings():
    msg = af.forge_decryption_oracle(SPEC, envelopes(Scheme.PGP_MIME), CidReference())
    found = guard.analyze(msg)
    assert {"PartialEncryption", "CiphertextBehindCid"} <= kinds(found)
    # the cid forgery also ships a blinding style line
    assert "BlindingCss" in kinds(found)


def test_signing_attack_findings():
    msg = af.forge_signing_oracle(SPEC, "a", "b", MediaWidth(834, 835))
    found = guard.analyze(msg)
    conditional = [f for f in found if f.kind == "ConditionalCss"]
    assert len(conditional) == 2  # one per media block
    assert "BlindingCss" in kinds(found)


def test_proprietary_findings():
    for token in ("wlm", "mso", "owa", "moz"):
        msg = af.forge_signing_oracle(SPEC, "a", "b", ProprietaryClient(token))
        assert "ProprietaryConditional" in kinds(guard.analyze(msg)), token


def test_multiple_inline_armors_finding():
    armor = cm.encrypt(b"x", [JOHNNY], Scheme.PGP_INLINE).text
    msg = mc.leaf("text/plain", armor + "\n\n" + armor)
    assert "MultipleInlineArmors" in kinds(guard.analyze(msg))


def test_severity_assignments():
    msg = af.forge_decryption_oracle(SPEC, envelopes(), Iframe())
    for f in guard.analyze(msg):
        if f.kind in ("PartialEncryption", "CiphertextBehindCid", "HiddenContainerBeforeCiphertext"):
            assert f.severity == "high"


def test_analyze_deterministic_order():
    msg = af.forge_decryption_oracle(SPEC, envelopes(Scheme.PGP_MIME), CidReference())
    once = guard.analyze(msg)
    again = guard.analyze(msg)
    assert once == again
    keys = [(f.path.indices, f.kind) for f in once]
    assert keys == sorted(keys, key=lambda k: (k[0], k[1]))


def test_evidence_capped_at_200_chars():
    f = guard.Finding("BlindingCss", mc.ROOT, "x" * 500)
    assert len(f.evidence) == 200


def test_benign_corpus_no_high_findings():
    for msg in benign_corpus():
        found = guard.analyze(msg)
        assert not guard.has_high_findings(found), mc.serialize_message(msg)[:120]


def test_full_forge_matrix_always_flagged():
    for method, msg in forged_decryption_corpus():
        found = guard.analyze(msg)
        assert any(f.severity in ("high", "medium") for f in found), method
    for cond, msg in forged_signing_corpus():
        found = guard.analyze(msg)
        assert any(f.severity in ("high", "medium") for f in found), cond


def test_style_retained_in_reply_detected():
    attack = af.forge_signing_oracle(SPEC, "What's up Johnny?", "I hereby declare war.", MediaWidth())
    reply = cs.reply(attack, cs.load_profile("mobile-keepstyle"), KEYRING, "fine")
    assert "StyleRetainedInReply" in kinds(guard.analyze(reply))


# -- enforce_all_or_nothing ------------------------------------------------------


def test_enforce_rejects_every_decryption_forgery():
    for method, msg in forged_decryption_corpus():
        decision = guard.enforce_all_or_nothing(msg)
        assert not decision.accept, method
        assert decision.reasons
        assert all(r.kind == "PartialEncryption" for r in decision.reasons)


def test_enforce_accepts_clean_and_root_encrypted():
    assert guard.enforce_all_or_nothing(mc.leaf("text/plain", "hi")).accept
    for scheme in Scheme:
        env = cm.encrypt(b"sealed", [JOHNNY], scheme)
        assert guard.enforce_all_or_nothing(env).accept, scheme


def test_enforce_inline_armor_span_rule():
    armor = cm.encrypt(b"x", [JOHNNY], Scheme.PGP_INLINE).text
    assert guard.enforce_all_or_nothing(mc.leaf("text/plain", armor)).accept
    decoyed = mc.leaf("text/plain", "read this first\n" + armor)
    assert not guard.enforce_all_or_nothing(decoyed).accept


def test_enforce_audit_mode_accepts_but_reports():
    msg = af.forge_decryption_oracle(SPEC, envelopes(), Iframe())
    decision = guard.enforce_all_or_nothing(msg, guard.Policy(strict=False))
    assert decision.accept and decision.reasons


def test_policy_file_loading(tmp_path):
    strict = tmp_path / "strict.policy"
    strict.write_text("mode=strict\n")
    audit = tmp_path / "audit.policy"
    audit.write_text("# comment\nmode=audit\n")
    assert guard.load_policy(strict).strict
    assert not guard.load_policy(audit).strict
    bad = tmp_path / "bad.policy"
    bad.write_text("mode=yolo\n")
    with pytest.raises(ValueError):
        guard.load_policy(bad)


# -- sanitize_for_reply ------------------------------------------------------------


def test_sanitize_iframe_attack_omits_secret():
    msg = af.forge_decryption_oracle(SPEC, envelopes(), Iframe())
    out = guard.sanitize_for_reply(msg, KEYRING)
    assert guard.UNDECRYPTED_MARKER in out
    assert "Hello Johnny" in out
    for secret in SECRETS:
        assert secret.decode() not in out


def test_sanitize_surfaces_covert_text():
    msg = af.forge_signing_oracle(SPEC, "What's up Johnny?", "I hereby declare war.", MediaWidth())
    out = guard.sanitize_for_reply(msg, KEYRING)
    assert "What's up Johnny?" in out
    assert "I hereby declare war." in out
    assert "@media" not in out  # styles are gone


def test_sanitize_plain_text_unchanged():
    msg = mc.leaf("text/plain", "two lines\nof text")
    assert guard.sanitize_for_reply(msg, KEYRING) == "two lines\nof text"


def test_sanitize_decrypts_encrypted_root():
    env = cm.encrypt(b"sealed body", [JOHNNY], Scheme.SMIME_ENVELOPED)
    assert "sealed body" in guard.sanitize_for_reply(env, KEYRING)


def test_sanitize_root_without_key_gets_marker():
    env = cm.encrypt(b"sealed body", [JOHNNY], Scheme.SMIME_ENVELOPED)
    out = guard.sanitize_for_reply(env, frozenset({"other@key"}))
    assert guard.UNDECRYPTED_MARKER in out
    assert "sealed body" not in out


def test_sanitize_inline_decoy_armor():
    armor = cm.encrypt(b"inline sealed", [JOHNNY], Scheme.PGP_INLINE).text
    msg = mc.leaf("text/plain", "decoy line\n" + armor)
    out = guard.sanitize_for_reply(msg, KEYRING)
    assert "decoy line" in out
    assert guard.UNDECRYPTED_MARKER in out
    assert "inline sealed" not in out


def test_sanitizer_safety_over_full_matrix():
    for method, msg in forged_decryption_corpus():
        out = guard.sanitize_for_reply(msg, KEYRING).encode()
        for secret in SECRETS:
            assert secret not in out, method


def test_sanitizer_visibility_over_signing_matrix():
    for cond, msg in forged_signing_corpus():
        out = guard.sanitize_for_reply(msg, KEYRING)
        assert "I hereby declare war." in out, cond


def test_compliant_profile_quotes_sanitized_text():
    msg = af.forge_decryption_oracle(SPEC, envelopes(), Iframe())
    report = cs.leak_check(msg, SECRETS, cs.load_profile("compliant"), KEYRING)
    assert report.verdict is cs.Verdict.NO_LEAK


# -- check_signature_coverage ---------------------------------------------------------


def test_signature_coverage_accepts_root_signed():
    signed = cm.sign(mc.leaf("text/plain", "covered"), JOHNNY)
    assert guard.check_signature_coverage(signed).accept


def test_signature_coverage_rejects_unsigned():
    decision = guard.check_signature_coverage(mc.leaf("text/plain", "nope"))
    assert not decision.accept
    assert decision.reasons[0].kind == "SignatureNotCoveringRoot"


def test_signature_coverage_rejects_nested_resign():
    victim_signed = cm.sign(mc.leaf("text/plain", "victim words"), JOHNNY)
    wrapper = mc.multipart(
        "mixed", [mc.leaf("text/html", "eve's framing"), victim_signed], "wrap0"
    )
    attacker_signed = cm.sign(wrapper, EVE)
    decision = guard.check_signature_coverage(attacker_signed)
    assert not decision.accept
    assert any("nested" in r.evidence for r in decision.reasons)


def test_signature_coverage_rejects_first_subpart_only():
    inner_signed = cm.sign(mc.leaf("text/plain", "inner"), JOHNNY)
    msg = mc.multipart("mixed", [inner_signed, mc.leaf("text/plain", "tail")], "w1")
    assert not guard.check_signature_coverage(msg).accept


def test_signature_coverage_rejects_tampered():
    signed = cm.sign(mc.leaf("text/plain", "original"), JOHNNY)
    tampered = mc.MimeEntity(
        signed.headers,
        mc.Multipart((mc.leaf("text/plain", "changed"), signed.children[1])),
    )
    decision = guard.check_signature_coverage(tampered)
    assert not decision.accept
    assert "digest-mismatch" in decision.reasons[0].evidence
