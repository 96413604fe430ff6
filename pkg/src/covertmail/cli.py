"""Command-line front end: forge attack mail, simulate clients, run the guard.

Exit codes are part of the interface so CI can assert outcomes without
parsing output:

  0   success / no leak / accepted
  1   processing error (bad message, forge failure)
  2   usage error (unknown profile, bad arguments)
  10  leak-check verdict: merged leak
  11  leak-check verdict: hidden leak
  20  guard enforce: rejected

Reports are JSON with stable field names (report_version 1) and carry the
SHA-256 of every input file, so identical inputs and seeds give identical
reports. The COVERTMAIL_PROFILE_DIR environment variable prepends a profile
search directory.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

from . import attack_forge, client_sim, crypto_mock, guard, mime_core
from .client_sim import Verdict
from .mime_core import Scheme

REPORT_VERSION = 1

EXIT_MERGED_LEAK = 10
EXIT_HIDDEN_LEAK = 11
EXIT_REJECTED = 20

_VERDICT_EXIT = {
    Verdict.NO_LEAK: 0,
    Verdict.MERGED_LEAK: EXIT_MERGED_LEAK,
    Verdict.HIDDEN_LEAK: EXIT_HIDDEN_LEAK,
}

_SCHEMES = {
    "smime": Scheme.SMIME_ENVELOPED,
    "pgp-mime": Scheme.PGP_MIME,
    "pgp-inline": Scheme.PGP_INLINE,
}


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _report(command: str, inputs: dict[str, Path], results: dict, exit_status: int) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "command": command,
        "inputs": {name: _sha256_file(path) for name, path in sorted(inputs.items())},
        "results": results,
        "exit_status": exit_status,
    }


def _emit(report: dict, output: str | None) -> None:
    blob = json.dumps(report, indent=2, sort_keys=True)
    if output:
        Path(output).write_text(blob + "\n", encoding="utf-8")
    else:
        click.echo(blob)


def _read_message(path: str) -> mime_core.MimeEntity:
    try:
        return mime_core.parse_message(Path(path).read_bytes())
    except mime_core.MimeError as exc:
        raise click.ClickException(f"cannot parse {path}: {exc}") from exc


def _load_profile(name: str) -> client_sim.ClientProfile:
    try:
        return client_sim.load_profile(name)
    except client_sim.UnknownProfile:
        raise click.UsageError(
            f"unknown profile {name!r}; shipped profiles: {', '.join(client_sim.list_profiles())}"
        )


def _load_keys(path: str | None) -> frozenset:
    if not path:
        return frozenset()
    return crypto_mock.load_keyring(path)


def _secret_bytes(value: str) -> bytes:
    candidate = Path(value)
    if candidate.is_file():
        return candidate.read_bytes()
    return value.encode("utf-8")


def _parse_method(text: str) -> attack_forge.HidingMethod:
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name == "iframe":
        return attack_forge.Iframe()
    if name == "comment":
        return attack_forge.HtmlComment()
    if name == "audio":
        return attack_forge.AudioElement()
    if name == "canvas":
        return attack_forge.CanvasElement()
    if name == "cid":
        return attack_forge.CidReference()
    if name == "newlines":
        return attack_forge.NewlinePadding(int(arg) if arg else 100)
    raise click.UsageError(f"unknown hiding method: {text!r}")


def _parse_condition(text: str) -> attack_forge.SigningCondition:
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "media":
        hide, _, show = rest.partition(":")
        if not hide:
            return attack_forge.MediaWidth()
        return attack_forge.MediaWidth(int(hide), int(show))
    if kind == "supports":
        prop, _, value = rest.partition(":")
        if not prop:
            return attack_forge.SupportsFeature()
        return attack_forge.SupportsFeature(prop.strip(), value.strip())
    if kind == "document":
        return attack_forge.DocumentUrlPrefix(rest) if rest else attack_forge.DocumentUrlPrefix()
    if kind == "client":
        return attack_forge.ProprietaryClient(rest.strip().lower())
    raise click.UsageError(f"unknown signing condition: {text!r}")


def tree_outline(entity: mime_core.MimeEntity) -> str:
    lines = []
    for path, node in mime_core.walk(entity):
        indent = "  " * len(path.indices)
        label = node.content_type.full
        cid = node.header("content-id")
        if cid:
            label += f"  Content-ID: {cid}"
        lines.append(f"{indent}{label}")
    return "\n".join(lines)


@click.group()
@click.version_option()
def main() -> None:
    """Forge covert-content attack mail, simulate client replies, run the guard."""


# -- forge ----------------------------------------------------------------------


@main.group()
def forge() -> None:
    """Generate attack messages."""


@forge.command("decryption")
@click.option("--method", default="iframe", help="iframe|comment|audio|canvas|cid|newlines[:N]")
@click.option("--secret", "secrets", multiple=True, required=True, help="secret file or literal")
@click.option("--scheme", default="smime", type=click.Choice(sorted(_SCHEMES)))
@click.option("--from", "from_addr", default="eve@evil.com", show_default=True)
@click.option("--to", "to_addr", default="johnny@good.com", show_default=True)
@click.option("--recipient", "recipients", multiple=True, help="extra recipient key ids")
@click.option("--decoy", default=attack_forge.DEFAULT_DECOY, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
def cmd_forge_decryption(method, secrets, scheme, from_addr, to_addr, recipients, decoy, seed, output):
    """Hide encrypted secrets inside a benign-looking message."""
    hiding = _parse_method(method)
    keys = list(recipients) or [to_addr, from_addr]
    spec = attack_forge.ForgeSpec(from_addr, to_addr, decoy, seed)
    try:
        envelopes = [crypto_mock.encrypt(_secret_bytes(s), keys, _SCHEMES[scheme]) for s in secrets]
        if _SCHEMES[scheme] is Scheme.PGP_INLINE:
            envelopes = [e.text for e in envelopes]
        msg = attack_forge.forge_decryption_oracle(spec, envelopes, hiding)
        Path(output).write_bytes(mime_core.serialize_message(msg))
    except (attack_forge.ForgeError, crypto_mock.CryptoError, mime_core.MimeError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(tree_outline(msg))
    click.echo(f"wrote {output}")


@forge.command("signing")
@click.option("--condition", default="media:834:835", show_default=True,
              help="media:H:S | supports:prop:value | document:url | client:TOKEN")
@click.option("--visible", default=attack_forge.DEFAULT_VISIBLE, show_default=True)
@click.option("--covert", default=attack_forge.DEFAULT_COVERT, show_default=True)
@click.option("--from", "from_addr", default="eve@evil.com", show_default=True)
@click.option("--to", "to_addr", default="johnny@good.com", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
def cmd_forge_signing(condition, visible, covert, from_addr, to_addr, seed, output):
    """Build a message whose displayed text depends on the viewer."""
    spec = attack_forge.ForgeSpec(from_addr, to_addr, seed=seed)
    try:
        msg = attack_forge.forge_signing_oracle(spec, visible, covert, _parse_condition(condition))
        Path(output).write_bytes(mime_core.serialize_message(msg))
    except attack_forge.ForgeError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(tree_outline(msg))
    click.echo(f"wrote {output}")


# -- simulate ----------------------------------------------------------------------


@main.command("simulate")
@click.argument("mode", type=click.Choice(["render", "reply", "leak-check", "sign-reply", "divergence"]))
@click.argument("message", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", default="merge-html-keepstyle", show_default=True)
@click.option("--profiles", default="", help="comma-separated profile list (divergence)")
@click.option("--keys", type=click.Path(exists=True, dir_okay=False), help="keyring file")
@click.option("--secret", "secrets", multiple=True, help="secret file or literal (leak-check)")
@click.option("--reply-body", default="Dear Eve, happy to help.", show_default=True)
@click.option("--signer", default="johnny@good.com", show_default=True)
@click.option("--date", default=client_sim.DEFAULT_DATE, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="report/eml output path")
def cmd_simulate(mode, message, profile, profiles, keys, secrets, reply_body, signer, date, output):
    """Run one client-behavior pipeline over a message."""
    msg = _read_message(message)
    keyring = _load_keys(keys)
    prof = _load_profile(profile)
    inputs = {"message": Path(message)}
    if keys:
        inputs["keys"] = Path(keys)

    if mode == "render":
        doc = client_sim.render(msg, prof, keyring)
        results = {
            "profile": prof.name,
            "visible": doc.visible,
            "decrypted_paths": [str(p) for p in doc.decrypted_paths],
        }
        _emit(_report(f"simulate render --profile {prof.name}", inputs, results, 0), output)
        return

    if mode == "reply":
        entity = client_sim.reply(msg, prof, keyring, reply_body, date)
        blob = mime_core.serialize_message(entity)
        if output:
            Path(output).write_bytes(blob)
            click.echo(f"wrote {output}")
        else:
            sys.stdout.buffer.write(blob)
        return

    if mode == "sign-reply":
        entity = client_sim.sign_reply(msg, prof, keyring, signer, reply_body, date)
        blob = mime_core.serialize_message(entity)
        if output:
            Path(output).write_bytes(blob)
            click.echo(f"wrote {output}")
        else:
            sys.stdout.buffer.write(blob)
        return

    if mode == "leak-check":
        if not secrets:
            raise click.UsageError("leak-check needs at least one --secret")
        secret_bytes = [_secret_bytes(s) for s in secrets]
        report = client_sim.leak_check(msg, secret_bytes, prof, keyring, reply_body, date)
        exit_status = _VERDICT_EXIT[report.verdict]
        results = {
            "profile": prof.name,
            "verdict": report.verdict.value,
            "verdict_symbol": report.verdict.symbol,
            "secrets": [
                {"leaked_in_reply": o.leaked_in_reply, "visible_to_victim": o.visible_to_victim}
                for o in report.secrets
            ],
        }
        if prof.encrypts_reply_to_sender:
            sent = client_sim.reply(msg, prof, keyring, reply_body, date)
            results["reply_encrypted"] = isinstance(
                mime_core.classify_structure(sent), mime_core.EncryptedRoot
            )
        _emit(_report(f"simulate leak-check --profile {prof.name}", inputs, results, exit_status), output)
        sys.exit(exit_status)

    # divergence
    names = [n.strip() for n in profiles.split(",") if n.strip()]
    if len(names) < 2:
        raise click.UsageError("divergence needs --profiles with at least two names")
    loaded = [_load_profile(n) for n in names]
    try:
        views = client_sim.divergence_check(msg, loaded)
    except client_sim.NotSigned as exc:
        raise click.ClickException(str(exc)) from exc
    distinct = len(set(views.values()))
    results = {
        "views": views,
        "distinct_renderings": distinct,
        "attack_success": distinct >= 2,
    }
    _emit(_report(f"simulate divergence --profiles {','.join(names)}", inputs, results, 0), output)


# -- guard -------------------------------------------------------------------------


@main.command("guard")
@click.argument("mode", type=click.Choice(["analyze", "enforce", "sanitize"]))
@click.argument("messages", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--policy", type=click.Path(exists=True, dir_okay=False), help="policy file")
@click.option("--keys", type=click.Path(exists=True, dir_okay=False), help="keyring file (sanitize)")
@click.option("-o", "--output", type=click.Path(dir_okay=False))
def cmd_guard(mode, messages, policy, keys, output):
    """Detect attack structure or produce a safe reply quote."""
    paths: list[Path] = []
    for item in messages:
        p = Path(item)
        paths.extend(sorted(p.glob("*.eml")) if p.is_dir() else [p])
    try:
        active_policy = guard.load_policy(policy) if policy else guard.Policy()
    except (ValueError, OSError) as exc:
        raise click.UsageError(f"bad policy file: {exc}") from exc
    keyring = _load_keys(keys)
    inputs = {str(p): p for p in paths}

    if mode == "sanitize":
        chunks = []
        for p in paths:
            chunks.append(guard.sanitize_for_reply(_read_message(str(p)), keyring))
        text = "\n".join(chunks)
        if output:
            Path(output).write_text(text + "\n", encoding="utf-8")
            click.echo(f"wrote {output}")
        else:
            click.echo(text)
        return

    if mode == "analyze":
        results = {}
        for p in paths:
            findings = guard.analyze(_read_message(str(p)))
            results[str(p)] = [
                {
                    "kind": f.kind,
                    "severity": f.severity,
                    "path": str(f.path),
                    "evidence": f.evidence,
                }
                for f in findings
            ]
        _emit(_report("guard analyze", inputs, results, 0), output)
        return

    # enforce
    results = {}
    rejected = False
    for p in paths:
        decision = guard.enforce_all_or_nothing(_read_message(str(p)), active_policy)
        rejected = rejected or not decision.accept
        results[str(p)] = {
            "accept": decision.accept,
            "reasons": [
                {"kind": f.kind, "path": str(f.path), "evidence": f.evidence}
                for f in decision.reasons
            ],
        }
    exit_status = EXIT_REJECTED if rejected else 0
    _emit(_report("guard enforce", inputs, results, exit_status), output)
    sys.exit(exit_status)


# -- demo --------------------------------------------------------------------------


@main.command("demo")
@click.option("--seed", default=1, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), help="directory for generated .eml files")
def cmd_demo(seed, out):
    """End-to-end reproduction of both attack scenarios plus the full sweep."""
    johnny = "johnny@good.com"
    eve = "eve@evil.com"
    keyring = frozenset({johnny})
    spec = attack_forge.ForgeSpec(eve, johnny, seed=seed)
    out_dir = Path(out) if out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    failures: list[str] = []

    def check(label: str, ok: bool) -> None:
        click.echo(f"  [{'ok' if ok else 'FAIL'}] {label}")
        if not ok:
            failures.append(label)

    # scenario 1: hidden ciphertext, decryption oracle
    click.echo("scenario 1: decryption oracle via hidden ciphertext")
    secret = f"Secret message {seed}, for Johnny's eye only...".encode()
    envelope = crypto_mock.encrypt(secret, [johnny, eve], Scheme.SMIME_ENVELOPED)
    attack = attack_forge.forge_decryption_oracle(spec, [envelope], attack_forge.Iframe())
    if out_dir:
        (out_dir / "decryption-oracle.eml").write_bytes(mime_core.serialize_message(attack))
    victim = client_sim.load_profile("merge-html-keepstyle")
    rendered = client_sim.render(attack, victim, keyring)
    check("victim sees only the decoy", secret.decode() not in rendered.visible)
    report = client_sim.leak_check(attack, [secret], victim, keyring)
    check("reply leaks the secret invisibly (hidden leak)", report.verdict is Verdict.HIDDEN_LEAK)
    check("guard rejects the forgery", not guard.enforce_all_or_nothing(attack).accept)

    # scenario 2: conditional CSS, signing oracle
    click.echo("scenario 2: signing oracle via conditional CSS")
    sig_attack = attack_forge.forge_signing_oracle(
        spec, attack_forge.DEFAULT_VISIBLE, attack_forge.DEFAULT_COVERT, attack_forge.MediaWidth()
    )
    if out_dir:
        (out_dir / "signing-oracle.eml").write_bytes(mime_core.serialize_message(sig_attack))
    mobile = client_sim.load_profile("mobile-keepstyle")
    desktop = client_sim.load_profile("desktop-wide")
    check(
        "signer sees the benign text only",
        client_sim.render(sig_attack, mobile, keyring).visible == attack_forge.DEFAULT_VISIBLE,
    )
    signed = client_sim.sign_reply(sig_attack, mobile, keyring, johnny, "I'm fine, thanks.")
    if out_dir:
        (out_dir / "signed-reply.eml").write_bytes(mime_core.serialize_message(signed))
    views = client_sim.divergence_check(signed, [mobile, desktop])
    check("signature verifies", crypto_mock.verify(signed).is_valid)
    check(
        "third party sees the covert text",
        views["desktop-wide"] == attack_forge.DEFAULT_COVERT,
    )
    check("renderings diverge", len(set(views.values())) == 2)

    # sweep: every hiding method x every shipped profile
    click.echo("sweep: hiding method x profile matrix")
    methods = [
        attack_forge.NewlinePadding(60),
        attack_forge.Iframe(),
        attack_forge.HtmlComment(),
        attack_forge.AudioElement(),
        attack_forge.CanvasElement(),
        attack_forge.CidReference(),
    ]
    profiles = [client_sim.load_profile(name) for name in client_sim.list_profiles()]
    secrets = [f"sweep secret {seed}-{i}".encode() for i in range(2)]
    sweep_envelopes = [crypto_mock.encrypt(s, [johnny, eve], Scheme.SMIME_ENVELOPED) for s in secrets]
    header = f"{'method':<16}" + "".join(f"{p.name:>22}" for p in profiles)
    click.echo(header)
    matrix_ok = True
    guard_ok = True
    for method in methods:
        msg = attack_forge.forge_decryption_oracle(spec, sweep_envelopes, method)
        guard_ok = guard_ok and bool(guard.analyze(msg)) and not guard.enforce_all_or_nothing(msg).accept
        row = f"{type(method).__name__:<16}"
        for prof in profiles:
            verdict = client_sim.leak_check(msg, secrets, prof, keyring).verdict
            expected = client_sim.expected_verdict(method, prof)
            matrix_ok = matrix_ok and verdict is expected
            row += f"{verdict.symbol:>22}"
        click.echo(row)
    check("verdict matrix matches every profile's declared class", matrix_ok)
    check("guard flags and rejects every forgery in the sweep", guard_ok)

    if failures:
        raise click.ClickException(f"{len(failures)} demo check(s) failed")
    click.echo("demo complete: all checks passed")


if __name__ == "__main__":
    main()
