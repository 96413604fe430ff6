"""Acceptance gate: one test per shipped-behavior criterion.

Each test prints a single pass line when it completes; pytest reports any
failure. Budgets (runtime, message size) are asserted inside the tests.
"""
import random
import time

import pytest

from covertmail import attack_forge as af
from covertmail import client_sim as cs
from covertmail import crypto_mock as cm
from covertmail import guard
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
from covertmail.client_sim import Verdict
from covertmail.mime_core import Scheme

JOHNNY = "johnny@good.com"
EVE = "eve@evil.com"
KEYRING = frozenset({JOHNNY})
SPEC = ForgeSpec(EVE, JOHNNY, "Hello Johnny, I'm interested in your work. Could you explain...", seed=42)

ALL_METHODS = [
    NewlinePadding(60),
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
    MediaWidth(389, 390),
    ProprietaryClient("wlm"),
    ProprietaryClient("mso"),
    ProprietaryClient("owa"),
    ProprietaryClient("moz"),
]

VISIBLE = "What's up Johnny?"
COVERT = "I hereby declare war."


def ok(label):
    print(f"[acceptance] {label}: PASS")


@pytest.fixture(scope="module")
def profiles():
    return {name: cs.load_profile(name) for name in cs.list_profiles()}


@pytest.fixture(scope="module")
def forgery_corpus():
    """Every decryption forgery (method x 2 secrets) and signing forgery."""
    secrets = [b"corpus secret one 7f3a", b"corpus secret two 9c1d"]
    envelopes = [cm.encrypt(s, [JOHNNY, EVE], Scheme.SMIME_ENVELOPED) for s in secrets]
    decryption = [
        (method, af.forge_decryption_oracle(SPEC, envelopes, method)) for method in ALL_METHODS
    ]
    signing = [
        (cond, af.forge_signing_oracle(SPEC, VISIBLE, COVERT, cond)) for cond in ALL_CONDITIONS
    ]
    return secrets, decryption, signing


def benign_corpus():
    msgs = []
    for i in range(9):
        msgs.append(
            mc.leaf(
                "text/plain",
                f"plain message number {i}\nsecond line",
                headers=(("From", "friend@example.org"), ("To", JOHNNY)),
            )
        )
    for i in range(6):
        msgs.append(
            mc.leaf(
                "text/html",
                f"<style>p {{color: #223344; font-size: 14px}}</style><p>newsletter {i}</p>",
            )
        )
    msgs.append(
        mc.multipart(
            "mixed",
            [mc.leaf("text/plain", "body"), mc.leaf("application/pdf", b"%PDF fake")],
            "bb0",
        )
    )
    msgs.append(
        mc.multipart(
            "related",
            [
                mc.leaf("text/html", '<img src="cid:logo"> see the logo'),
                mc.leaf("image/png", b"\x89PNG", headers=(("Content-ID", "<logo>"),)),
            ],
            "bb1",
        )
    )
    for scheme in Scheme:
        msgs.append(cm.encrypt(b"sealed whole message", [JOHNNY], scheme))
    assert len(msgs) == 20
    return msgs


def test_fig4_style_end_to_end_hidden_iframe_leak(profiles):
    started = time.perf_counter()
    secret = b"Secret message, for Johnny's eye only..."
    envelope = cm.encrypt(secret, [JOHNNY, EVE], Scheme.SMIME_ENVELOPED)
    attack = af.forge_decryption_oracle(SPEC, [envelope], Iframe())
    victim = profiles["merge-html-keepstyle"]
    rendered = cs.render(attack, victim, KEYRING)
    assert secret.decode() not in rendered.visible
    reply = cs.reply(attack, victim, KEYRING, "Dear Eve, of course!")
    assert secret in mc.serialize_message(reply)
    report = cs.leak_check(attack, [secret], victim, KEYRING)
    assert report.verdict is Verdict.HIDDEN_LEAK
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"end-to-end took {elapsed:.3f}s"
    ok("hidden-iframe decryption oracle end-to-end under 1s")


def test_fig6_style_cid_attack_leak_and_findings(profiles):
    secret = b"Secret referenced as an image"
    envelope = cm.encrypt(secret, [JOHNNY, EVE], Scheme.PGP_MIME)
    attack = af.forge_decryption_oracle(SPEC, [envelope], CidReference())
    report = cs.leak_check(attack, [secret], profiles["merge-html-keepstyle"], KEYRING)
    assert report.verdict is Verdict.HIDDEN_LEAK
    found = {f.kind for f in guard.analyze(attack)}
    assert {"PartialEncryption", "CiphertextBehindCid"} <= found
    ok("cid-reference attack leaks and is flagged")


def test_fig8_fig9_style_signing_divergence(profiles):
    attack = af.forge_signing_oracle(SPEC, VISIBLE, COVERT, MediaWidth(834, 835))
    mobile, desktop = profiles["mobile-keepstyle"], profiles["desktop-wide"]
    assert mobile.device.device_width_px == 390
    assert desktop.device.device_width_px == 1440

    assert cs.render(attack, mobile, KEYRING).visible == VISIBLE
    signed = cs.sign_reply(attack, mobile, KEYRING, JOHNNY, "I'm fine, thanks.")
    assert cm.verify(signed) == cm.valid_signature(JOHNNY)
    views = cs.divergence_check(signed, [mobile, desktop])
    assert views["desktop-wide"] == COVERT
    assert cm.verify(signed) == cm.valid_signature(JOHNNY)

    # the width partition has no gap at the boundary
    dom = hc.parse_html(attack.text)
    sheet = hc.collect_styles(dom)
    at_834 = hc.visible_text(dom, sheet, hc.DeviceProfile(device_width_px=834))
    at_835 = hc.visible_text(dom, sheet, hc.DeviceProfile(device_width_px=835))
    assert at_834 == VISIBLE
    assert at_835 == COVERT
    ok("conditional-CSS signing oracle with exact 834/835 partition")


def test_table_of_blinding_options_14_assertions():
    checked = 0
    for prop in af.BLINDING_PROPERTIES:
        for mode in ("hide", "show"):
            decl = af.blinding_declaration(prop, mode)
            doc = f'<div style="{decl}">x</div>y'
            dom = hc.parse_html(doc)
            visible = hc.visible_text(dom, [], hc.DeviceProfile(device_width_px=1024))
            if mode == "hide":
                assert visible == "y", (prop, mode, decl)
            else:
                assert visible == "x y", (prop, mode, decl)
            checked += 1
    assert checked == 14
    ok("blinding matrix 14/14 show/hide assertions")


def test_batch_hundred_ciphertexts_one_reply(profiles):
    rng = random.Random(42)
    secrets = []
    for i in range(100):
        filler = "".join(rng.choice("0123456789abcdef") for _ in range(64))
        line = f"batch-{i:03d}-{filler}\n"
        secrets.append((line * (100 * 1024 // len(line) + 1))[: 100 * 1024].encode())
    started = time.perf_counter()
    envelopes = [cm.encrypt(s, [JOHNNY, EVE], Scheme.SMIME_ENVELOPED) for s in secrets]
    attack = af.forge_decryption_oracle(SPEC, envelopes, Iframe())
    blob = mc.serialize_message(attack)
    assert len(blob) < 25 * 1024 * 1024, f"forged message is {len(blob)} bytes"
    report = cs.leak_check(attack, secrets, profiles["merge-html-keepstyle"], KEYRING)
    elapsed = time.perf_counter() - started
    assert report.verdict is Verdict.HIDDEN_LEAK
    assert all(o.leaked_in_reply for o in report.secrets)
    assert sum(o.leaked_in_reply for o in report.secrets) == 100
    assert elapsed < 5.0, f"pipeline took {elapsed:.3f}s"
    ok(f"100-ciphertext batch leak in one reply ({elapsed:.2f}s, {len(blob)//1024//1024} MiB)")


def test_guard_completeness_over_forge_matrix(forgery_corpus):
    secrets, decryption, signing = forgery_corpus
    for method, msg in decryption:
        findings = guard.analyze(msg)
        assert findings, f"no findings for {method!r}"
        assert not guard.enforce_all_or_nothing(msg).accept, f"accepted {method!r}"
    for cond, msg in signing:
        assert guard.analyze(msg), f"no findings for {cond!r}"
    for msg in benign_corpus():
        assert not guard.has_high_findings(guard.analyze(msg))
    ok("guard flags 6+8 forgeries, rejects all decryption forgeries, benign corpus clean")


def test_sanitizer_safety_and_visibility(forgery_corpus):
    secrets, decryption, signing = forgery_corpus
    for method, msg in decryption:
        out = guard.sanitize_for_reply(msg, KEYRING).encode()
        for secret in secrets:
            assert secret not in out, f"secret survived sanitize under {method!r}"
    for cond, msg in signing:
        out = guard.sanitize_for_reply(msg, KEYRING)
        assert COVERT in out, f"covert text invisible in sanitize under {cond!r}"
    ok("sanitizer never leaks secrets and always surfaces covert text")


def _fuzz_blobs(count: int):
    rng = random.Random(1337)
    fragments = [
        "<", ">", "</", "<!--", "-->", "<iframe", "<style>", "</style>", "='", '="',
        "<div class=", "<audio", "<canvas", "<img src=cid:", "<!doctype", "<?xml",
        "plain words ", "&amp;", "\\", "\n", "\r\n", "\t", "\x00", "🙂",
    ]
    for i in range(count):
        if i % 3 == 0:
            yield bytes(rng.randrange(256) for _ in range(rng.randrange(0, 200)))
        else:
            n = rng.randrange(0, 30)
            yield "".join(rng.choice(fragments) for _ in range(n)).encode("utf-8", "ignore")


def test_parser_robustness_and_round_trip(forgery_corpus):
    count = 0
    for blob in _fuzz_blobs(10_000):
        hc.parse_html(blob)
        count += 1
    assert count == 10_000

    secrets, decryption, signing = forgery_corpus
    corpus = [msg for _, msg in decryption] + [msg for _, msg in signing] + benign_corpus()
    for entity in corpus:
        raw = mc.serialize_message(entity)
        once = mc.parse_message(raw)
        again = mc.parse_message(mc.serialize_message(once))
        assert once == again
    ok(f"parse_html survived 10,000 fuzz inputs; round-trip held on {len(corpus)} messages")


def test_proprietary_conditionals_4_positive_12_negative():
    tokens = ("wlm", "mso", "owa", "moz")
    positives = negatives = 0
    for forged_token in tokens:
        attack = af.forge_signing_oracle(SPEC, VISIBLE, COVERT, ProprietaryClient(forged_token))
        dom = hc.parse_html(attack.text)
        sheet = hc.collect_styles(dom)
        for viewer_token in tokens:
            profile = hc.DeviceProfile(device_width_px=1024, client_tokens=frozenset({viewer_token}))
            visible = hc.visible_text(dom, sheet, profile)
            if viewer_token == forged_token:
                assert visible == COVERT, (forged_token, viewer_token)
                positives += 1
            else:
                assert visible == VISIBLE, (forged_token, viewer_token)
                negatives += 1
    assert positives == 4 and negatives == 12
    ok("proprietary conditionals: 4 positive + 12 negative cross-checks")
