"""Countermeasures: structural attack detection and reply sanitization.

Three policies back the detections. All-or-nothing encryption refuses to
decrypt anything but a single root-level ciphertext. ASCII-only reply
sanitization quotes every piece of text that exists (so nothing invisible
gets signed) while never decrypting rejected ciphertext parts. Signature
coverage accepts only a message whose root signature verifies and which
contains no other signed layer an attacker could have wrapped.

BlindingCss matches text-hiding declarations structurally (any off-screen
absolute position below the -999px threshold, any zero polygon), not by
string comparison, so trivial reformatting does not evade it.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import crypto_mock, html_css, mime_core
from .crypto_mock import Keyring
from .html_css import Comment
from .mime_core import (
    EntityPath,
    Leaf,
    MimeEntity,
    Multipart,
    NoEncryption,
    EncryptedRoot,
    PartiallyEncrypted,
    Scheme,
)

UNDECRYPTED_MARKER = "[undecrypted part omitted]"

KIND_SEVERITY = {
    "PartialEncryption": "high",
    "CiphertextBehindCid": "high",
    "HiddenContainerBeforeCiphertext": "high",
    "BlindingCss": "medium",
    "ConditionalCss": "medium",
    "ProprietaryConditional": "medium",
    "MultipleInlineArmors": "medium",
    "SignatureNotCoveringRoot": "medium",
    "StyleRetainedInReply": "info",
}

_SEVERITY_ORDER = {"high": 0, "medium": 1, "info": 2}


@dataclass(frozen=True)
class Finding:
    kind: str
    path: EntityPath
    evidence: str

    def __post_init__(self) -> None:
        if self.kind not in KIND_SEVERITY:
            raise ValueError(f"unknown finding kind: {self.kind!r}")
        if len(self.evidence) > 200:
            object.__setattr__(self, "evidence", self.evidence[:197] + "...")

    @property
    def severity(self) -> str:
        return KIND_SEVERITY[self.kind]


@dataclass(frozen=True)
class Policy:
    strict: bool = True


@dataclass(frozen=True)
class PolicyDecision:
    accept: bool
    reasons: tuple[Finding, ...] = ()


def load_policy(path: str | Path) -> Policy:
    """Policy file: flat key=value; mode is 'strict' or 'audit'."""
    mode = "strict"
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, eq, value = stripped.partition("=")
        if not eq or key.strip() != "mode":
            raise ValueError(f"bad policy line: {line!r}")
        mode = value.strip().lower()
    if mode not in ("strict", "audit"):
        raise ValueError(f"unknown policy mode: {mode!r}")
    return Policy(strict=(mode == "strict"))


# -- detection helpers -----------------------------------------------------------

_UNCLOSED_CONTAINERS = ("iframe", "audio", "canvas")


def _has_unclosed_hiding_container(source: str) -> str | None:
    lowered = source.lower()
    for tag in _UNCLOSED_CONTAINERS:
        if lowered.count(f"<{tag}") > lowered.count(f"</{tag}"):
            return f"unclosed <{tag}>"
    if source.count("<!--") > source.count("-->"):
        return "unterminated <!-- comment"
    return None


def _subtree_contains_encrypted(entity: MimeEntity) -> bool:
    return bool(mime_core.locate_encrypted_parts(entity))


def _style_sources(entity: MimeEntity) -> list[tuple[EntityPath, html_css.DomNode]]:
    docs = []
    for path, node in mime_core.walk(entity):
        if node.content_type.full == "text/html" and isinstance(node.body, Leaf):
            docs.append((path, html_css.parse_html(node.text)))
    return docs


def _blinding_findings(path: EntityPath, dom: html_css.DomNode) -> list[Finding]:
    findings = []
    sheet = html_css.collect_styles(dom)
    for _, rule in sheet:
        decls = {d.property: d for d in rule.declarations}
        for reason in html_css.hiding_reasons(decls):
            findings.append(Finding("BlindingCss", path, f"rule hides text: {reason}"))
    for element in html_css.iter_elements(dom):
        inline = element.attrs.get("style")
        if not inline:
            continue
        decls = {d.property: d for d in html_css.parse_declarations(inline)}
        for reason in html_css.hiding_reasons(decls):
            findings.append(
                Finding("BlindingCss", path, f"inline style hides text: {reason}")
            )
    return findings


def _conditional_findings(path: EntityPath, dom: html_css.DomNode) -> list[Finding]:
    findings = []
    sheet = html_css.collect_styles(dom)
    for condition, prelude in sheet.blocks:
        findings.append(Finding("ConditionalCss", path, prelude.split("{")[0].strip()))
    return findings


_PROPRIETARY_SELECTOR_MARKERS = ("ExternalClass", "owa", "moz-text-html")


def _selector_mentions_proprietary(selector: html_css.Selector) -> str | None:
    if isinstance(selector, html_css.ClassSel) and selector.name in (
        "ExternalClass",
        "moz-text-html",
    ):
        return f".{selector.name}"
    if isinstance(selector, html_css.AttrPresence) and selector.name == "owa":
        return "[owa]"
    if isinstance(selector, html_css.Descendant):
        return _selector_mentions_proprietary(selector.ancestor) or _selector_mentions_proprietary(
            selector.child
        )
    return None


def _proprietary_findings(path: EntityPath, dom: html_css.DomNode) -> list[Finding]:
    findings = []

    def visit(node: html_css.DomNode) -> None:
        if isinstance(node, Comment):
            token = html_css.conditional_comment_token(node)
            if token is not None:
                findings.append(
                    Finding("ProprietaryConditional", path, node.content.split(">")[0] + ">")
                )
            return
        if isinstance(node, html_css.Element):
            for child in node.children:
                visit(child)

    visit(dom)
    sheet = html_css.collect_styles(dom)
    seen = set()
    for condition, rule in sheet:
        marker = _selector_mentions_proprietary(rule.selector)
        if marker and marker not in seen:
            seen.add(marker)
            findings.append(
                Finding("ProprietaryConditional", path, f"client-targeting selector {marker}")
            )
    return findings


def _style_in_blockquote(dom: html_css.DomNode) -> bool:
    def visit(node: html_css.DomNode, inside_quote: bool) -> bool:
        if not isinstance(node, html_css.Element):
            return False
        if node.tag == "style" and inside_quote:
            return True
        inside = inside_quote or node.tag == "blockquote"
        return any(visit(child, inside) for child in node.children)

    return visit(dom, False)


# -- operations -------------------------------------------------------------------


def analyze(msg: MimeEntity) -> list[Finding]:
    """All structural findings for one message, ordered by (path, kind)."""
    findings: list[Finding] = []

    structure = mime_core.classify_structure(msg)
    encrypted = mime_core.locate_encrypted_parts(msg)
    if isinstance(structure, PartiallyEncrypted):
        for part in structure.paths:
            findings.append(
                Finding(
                    "PartialEncryption",
                    part.path,
                    f"{part.scheme.value} ciphertext at {part.path}, tree is not all-or-nothing",
                )
            )

    # cid references pointing at encrypted parts
    encrypted_cids = {}
    for part in encrypted:
        node = part.path.resolve(msg)
        cid = node.header("content-id")
        if cid:
            encrypted_cids[cid.strip().strip("<>")] = part.path
    if encrypted_cids:
        for _, node in mime_core.walk(msg):
            if node.content_type.full != "text/html" or not isinstance(node.body, Leaf):
                continue
            dom = html_css.parse_html(node.text)
            for element in html_css.iter_elements(dom):
                src = element.attrs.get("src", "")
                if src.startswith("cid:") and src[4:].strip() in encrypted_cids:
                    findings.append(
                        Finding(
                            "CiphertextBehindCid",
                            encrypted_cids[src[4:].strip()],
                            f'ciphertext referenced as <{element.tag} src="{src}">',
                        )
                    )

    # unclosed hiding container in an html part followed by an encrypted sibling
    for path, node in mime_core.walk(msg):
        if not isinstance(node.body, Multipart):
            continue
        kids = node.body.children
        for i, child in enumerate(kids):
            if child.content_type.full != "text/html" or not isinstance(child.body, Leaf):
                continue
            reason = _has_unclosed_hiding_container(child.text)
            if reason and any(_subtree_contains_encrypted(k) for k in kids[i + 1 :]):
                findings.append(
                    Finding(
                        "HiddenContainerBeforeCiphertext",
                        path.child(i),
                        f"{reason} swallows the encrypted sibling part that follows",
                    )
                )

    for part in encrypted:
        if part.scheme is Scheme.PGP_INLINE and part.count > 1:
            findings.append(
                Finding(
                    "MultipleInlineArmors",
                    part.path,
                    f"{part.count} armor blocks in one text part",
                )
            )

    for path, dom in _style_sources(msg):
        findings.extend(_blinding_findings(path, dom))
        findings.extend(_conditional_findings(path, dom))
        findings.extend(_proprietary_findings(path, dom))
        if _style_in_blockquote(dom):
            findings.append(
                Finding("StyleRetainedInReply", path, "quoted reply retains a <style> element")
            )

    findings.sort(key=lambda f: (f.path.indices, f.kind, f.evidence))
    return findings


def enforce_all_or_nothing(msg: MimeEntity, policy: Policy = Policy()) -> PolicyDecision:
    """Accept only messages that are unencrypted or encrypted at the root."""
    structure = mime_core.classify_structure(msg)
    if isinstance(structure, (NoEncryption, EncryptedRoot)):
        return PolicyDecision(True)
    reasons = tuple(
        Finding(
            "PartialEncryption",
            part.path,
            f"{part.scheme.value} ciphertext at {part.path} is not the root",
        )
        for part in structure.paths
    )
    return PolicyDecision(accept=not policy.strict, reasons=reasons)


def _sanitize_entity(msg: MimeEntity, keyring: Keyring, reject_ciphertext: bool) -> list[str]:
    pieces: list[str] = []

    def visit(node: MimeEntity) -> None:
        hit = mime_core.locate_encrypted_parts(node)
        if hit and hit[0].path.is_root:
            part = hit[0]
            if reject_ciphertext:
                if part.scheme is Scheme.PGP_INLINE:
                    text = node.text
                    begin = text.find(mime_core.ARMOR_BEGIN)
                    end = text.find(mime_core.ARMOR_END)
                    sanitized = text[:begin] + UNDECRYPTED_MARKER + text[end + len(mime_core.ARMOR_END) :]
                    # further armors in the same leaf get one marker each
                    while mime_core.ARMOR_BEGIN in sanitized:
                        b = sanitized.find(mime_core.ARMOR_BEGIN)
                        e = sanitized.find(mime_core.ARMOR_END)
                        if e == -1:
                            sanitized = sanitized[:b] + UNDECRYPTED_MARKER
                            break
                        sanitized = (
                            sanitized[:b] + UNDECRYPTED_MARKER + sanitized[e + len(mime_core.ARMOR_END) :]
                        )
                    pieces.append(sanitized)
                else:
                    pieces.append(UNDECRYPTED_MARKER)
                return
            try:
                plaintext = crypto_mock.decrypt(node, keyring)
            except crypto_mock.CryptoError:
                pieces.append(UNDECRYPTED_MARKER)
                return
            try:
                inner = mime_core.parse_message(plaintext)
                if inner.header("content-type") is None:
                    raise mime_core.MimeError("not a full entity")
            except mime_core.MimeError:
                pieces.append(plaintext.decode("utf-8", errors="replace"))
                return
            visit(inner)
            return
        if isinstance(node.body, Multipart):
            for child in node.body.children:
                visit(child)
            return
        ct = node.content_type
        if ct.primary != "text":
            return
        if ct.sub == "html":
            pieces.append(html_css.strip_to_ascii(html_css.parse_html(node.text)))
        else:
            pieces.append(node.text)

    visit(msg)
    return pieces


def sanitize_for_reply(msg: MimeEntity, keyring: Keyring = frozenset()) -> str:
    """The quote source a hardened client uses: plain text only.

    Everything that exists in markup is surfaced (so the signer sees exactly
    what gets signed); ciphertext parts rejected by the all-or-nothing policy
    are replaced with a marker, never decrypted.
    """
    decision = enforce_all_or_nothing(msg)
    pieces = _sanitize_entity(msg, keyring, reject_ciphertext=not decision.accept)
    joined = "\n".join(piece.strip("\r\n") for piece in pieces if piece.strip())
    return joined.replace("\r\n", "\n")


def check_signature_coverage(msg: MimeEntity) -> PolicyDecision:
    """Accept only a message signed at the root, verifying, with no other
    signed layers an attacker could have nested or re-signed."""
    signed_nodes = [
        path
        for path, node in mime_core.walk(msg)
        if node.content_type.full == "multipart/signed"
    ]
    if not signed_nodes or not signed_nodes[0].is_root:
        reason = Finding(
            "SignatureNotCoveringRoot",
            mime_core.ROOT,
            "message root is not a verified signature container",
        )
        return PolicyDecision(False, (reason,))
    result = crypto_mock.verify(msg)
    if not result.is_valid:
        reason = Finding(
            "SignatureNotCoveringRoot", mime_core.ROOT, f"root signature status: {result.status}"
        )
        return PolicyDecision(False, (reason,))
    if len(signed_nodes) > 1:
        reasons = tuple(
            Finding(
                "SignatureNotCoveringRoot",
                path,
                "nested signature layer; inner signatures can originate from anyone",
            )
            for path in signed_nodes[1:]
        )
        return PolicyDecision(False, reasons)
    return PolicyDecision(True)


def has_high_findings(findings: list[Finding]) -> bool:
    return any(f.severity == "high" for f in findings)


def sort_severity(findings: list[Finding]) -> list[Finding]:
    return sorted(findings, key=lambda f: (_SEVERITY_ORDER[f.severity], f.path.indices, f.kind))
