"""Reply/render pipeline simulation for email-client behavior classes.

A ClientProfile is data, not code: each shipped profile file describes one
behavior class (merge strategy, subpart decryption, cid resolution, HTML vs
ASCII replies, style retention) plus the device context used for conditional
CSS. The simulator renders a message the way that class of client would,
builds the quoted reply, and checks which secrets leak.

Verdicts follow the hidden/merged/none classification: a secret that leaks
while invisible to the victim is a hidden leak; one the victim could have
seen is a merged leak.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import crypto_mock, guard, html_css, mime_core
from .crypto_mock import Keyring
from .html_css import DeviceProfile
from .mime_core import EntityPath, Leaf, MimeEntity, Multipart, Scheme

DEFAULT_DATE = "01/05/19 08:27"
DECRYPT_FAILED_MARKER = "[decryption failed]"


class UnknownProfile(KeyError):
    pass


class NotSigned(ValueError):
    pass


@dataclass(frozen=True)
class ClientProfile:
    name: str
    merges_parts: bool = True
    decrypts_subparts: bool = True
    resolves_cid: bool = False
    html_view: bool = True
    html_reply: bool = True
    keeps_internal_styles_in_reply: bool = False
    inlines_styles_in_reply: bool = False
    sanitizes_reply: bool = False
    encrypts_reply_to_sender: bool = False
    # data-only: remote stylesheet fetching is never simulated, the flag just
    # records the behavior class for reporting
    fetches_remote_css: bool = False
    device: DeviceProfile = field(default_factory=DeviceProfile)
    quote_prefix: str = "> "
    attribution_line: str = "On {date}, {sender} wrote:"
    leak_class: str = "none"  # declared class: hidden | merged | none

    def __post_init__(self) -> None:
        if self.html_reply and not self.html_view:
            raise ValueError(f"{self.name}: html_reply requires html_view")
        if self.keeps_internal_styles_in_reply and self.inlines_styles_in_reply:
            raise ValueError(f"{self.name}: style retention modes are mutually exclusive")
        if self.leak_class not in ("hidden", "merged", "none"):
            raise ValueError(f"{self.name}: bad leak_class {self.leak_class!r}")


class Verdict(enum.Enum):
    HIDDEN_LEAK = "hidden-leak"
    MERGED_LEAK = "merged-leak"
    NO_LEAK = "no-leak"

    @property
    def symbol(self) -> str:
        return {"hidden-leak": "●", "merged-leak": "◐", "no-leak": "○"}[self.value]


@dataclass(frozen=True)
class SecretOutcome:
    leaked_in_reply: bool
    visible_to_victim: bool


@dataclass(frozen=True)
class LeakReport:
    secrets: tuple[SecretOutcome, ...]
    verdict: Verdict


@dataclass(frozen=True)
class RenderedDocument:
    visible: str
    full_quote_source: tuple[tuple[EntityPath, str], ...]
    decrypted_paths: tuple[EntityPath, ...]


# -- decryption pass -----------------------------------------------------------


def _try_parse_full_entity(plaintext: bytes) -> MimeEntity | None:
    # Decrypted payloads that are themselves full messages get re-parsed;
    # anything else is treated as raw text. A Content-Type header is the
    # discriminator so stray "word: rest" lines don't get eaten as headers.
    try:
        entity = mime_core.parse_message(plaintext)
    except mime_core.MimeError:
        return None
    if entity.header("content-type") is None:
        return None
    return entity


def _replacement_for(plaintext: bytes, original: MimeEntity) -> MimeEntity:
    parsed = _try_parse_full_entity(plaintext)
    if parsed is None:
        parsed = mime_core.leaf("text/plain", plaintext.decode("utf-8", errors="replace"))
    cid = original.header_field("content-id")
    if cid is not None and parsed.header_field("content-id") is None:
        parsed = parsed.with_headers((cid,) + parsed.headers)
    return parsed


def _decrypt_tree(
    entity: MimeEntity,
    profile: ClientProfile,
    keyring: Keyring,
    path: EntityPath = mime_core.ROOT,
) -> tuple[MimeEntity, list[EntityPath]]:
    """Replace decryptable ciphertext parts with their plaintext.

    The root is always fair game; subparts only when the profile decrypts
    them. Failures become visible placeholders, never hard errors.
    """
    allowed = path.is_root or profile.decrypts_subparts
    hit = mime_core.locate_encrypted_parts(entity)
    if hit and hit[0].path.is_root and allowed:
        scheme = hit[0].scheme
        if scheme is Scheme.PGP_INLINE:
            text = entity.text
            decrypted: list[EntityPath] = []
            pieces: list[str] = []
            cursor = 0
            while True:
                begin = text.find(mime_core.ARMOR_BEGIN, cursor)
                if begin == -1:
                    pieces.append(text[cursor:])
                    break
                end = text.find(mime_core.ARMOR_END, begin)
                if end == -1:
                    pieces.append(text[cursor:])
                    break
                pieces.append(text[cursor:begin])
                armor = text[begin : end + len(mime_core.ARMOR_END)]
                try:
                    pieces.append(crypto_mock.decrypt(armor, keyring).decode("utf-8", "replace"))
                    if not decrypted:
                        decrypted.append(path)
                except crypto_mock.CryptoError:
                    pieces.append(DECRYPT_FAILED_MARKER)
                cursor = end + len(mime_core.ARMOR_END)
            new_text = "".join(pieces).replace("\r\n", "\n").replace("\n", "\r\n")
            return (
                MimeEntity(entity.headers, Leaf(new_text.encode("utf-8"))),
                decrypted,
            )
        try:
            plaintext = crypto_mock.decrypt(entity, keyring)
        except crypto_mock.CryptoError:
            return _replacement_for(DECRYPT_FAILED_MARKER.encode(), entity), []
        return _replacement_for(plaintext, entity), [path]

    if isinstance(entity.body, Multipart):
        children = []
        decrypted: list[EntityPath] = []
        for i, child in enumerate(entity.body.children):
            new_child, sub = _decrypt_tree(child, profile, keyring, path.child(i))
            children.append(new_child)
            decrypted.extend(sub)
        body = Multipart(tuple(children), entity.body.preamble, entity.body.epilogue)
        return MimeEntity(entity.headers, body), decrypted
    return entity, []


# -- display-part selection -----------------------------------------------------


def _collect_cid_map(entity: MimeEntity) -> dict[str, MimeEntity]:
    cids: dict[str, MimeEntity] = {}
    for _, node in mime_core.walk(entity):
        value = node.header("content-id")
        if value:
            cids.setdefault(value.strip().strip("<>"), node)
    return cids


def _displayable_parts(
    entity: MimeEntity, profile: ClientProfile, path: EntityPath = mime_core.ROOT
) -> list[tuple[EntityPath, str, str]]:
    """Flatten a tree into (path, kind, source) display entries.

    multipart/related bodies display only their root part when the client
    resolves cid references; merging clients without cid support concatenate
    everything like multipart/mixed.
    """
    if isinstance(entity.body, Multipart):
        children = list(enumerate(entity.body.children))
        if entity.content_type.sub == "related" and profile.resolves_cid and children:
            i, first = children[0]
            return _displayable_parts(first, profile, path.child(i))
        collected: list[tuple[EntityPath, str, str]] = []
        for i, child in children:
            collected.extend(_displayable_parts(child, profile, path.child(i)))
        return collected
    ct = entity.content_type
    if ct.primary != "text":
        return []
    kind = "html" if ct.sub == "html" else "text"
    return [(path, kind, entity.text)]


def _inject_cid_content(dom: html_css.DomNode, cid_map: dict[str, MimeEntity]) -> bool:
    """Substitute cid: references with the referenced part's content.

    The content is not a displayable image, so the client materializes it as
    an inline fieldset-wrapped block next to the reference: present in the
    document source (and therefore in quotes), not rendered as an image. The
    cid forgery's own `fieldset {display:none}` style line keeps it off
    screen.
    """
    injected = False
    for element in html_css.iter_elements(dom):
        src = element.attrs.get("src", "")
        if not src.startswith("cid:"):
            continue
        target = cid_map.get(src[4:].strip())
        if target is None or not isinstance(target.body, Leaf):
            continue
        if target.content_type.primary != "text":
            continue
        element.children.append(
            html_css.Element("fieldset", {"class": "cid-resolved"}, [html_css.Text(target.text)])
        )
        injected = True
    return injected


@dataclass
class _MergedView:
    entries: list[tuple[EntityPath, str, str]]  # (path, kind, final source)

    @property
    def source(self) -> str:
        return "\n".join(src for _, _, src in self.entries)

    def dom(self) -> html_css.DomNode:
        # One document: sources are concatenated before parsing, which is
        # exactly what lets an unclosed container swallow the parts after it.
        return html_css.Element("#merged", {}, [html_css.parse_html(self.source)])


def _merged_view(tree: MimeEntity, profile: ClientProfile) -> _MergedView:
    parts = _displayable_parts(tree, profile)
    if not profile.merges_parts:
        parts = parts[:1]
    cid_map = _collect_cid_map(tree) if profile.resolves_cid else {}
    entries: list[tuple[EntityPath, str, str]] = []
    for path, kind, source in parts:
        if kind == "html" and profile.resolves_cid:
            dom = html_css.parse_html(source)
            if _inject_cid_content(dom, cid_map):
                source = html_css.to_html(dom)
        entries.append((path, kind, source))
    return _MergedView(entries)


# -- render / reply / leak-check ---------------------------------------------------


def render(msg: MimeEntity, profile: ClientProfile, keyring: Keyring) -> RenderedDocument:
    """What the victim sees, plus the per-part quote sources for replying."""
    tree, decrypted = _decrypt_tree(msg, profile, keyring)
    view = _merged_view(tree, profile)
    if profile.html_view:
        dom = view.dom()
        visible = html_css.visible_text(dom, html_css.collect_styles(dom), profile.device)
    else:
        visible = html_css.strip_tags(view.source)
    quote = tuple((path, src) for path, _, src in view.entries)
    return RenderedDocument(visible, quote, tuple(decrypted))


def _strip_style_elements(dom: html_css.DomNode, drop_inline: bool) -> None:
    def scrub(node: html_css.DomNode) -> None:
        if not isinstance(node, html_css.Element):
            return
        node.children = [
            c
            for c in node.children
            if not (isinstance(c, html_css.Element) and c.tag == "style")
        ]
        if drop_inline:
            node.attrs.pop("style", None)
        for child in node.children:
            scrub(child)

    scrub(dom)


def _inline_active_styles(dom: html_css.DomNode, device: DeviceProfile) -> None:
    """Flatten the active stylesheet into style attributes, then drop it.

    This is the style-converting reply class: whatever the replier's client
    resolved becomes unconditional inline CSS in the quote.
    """
    sheet = html_css.collect_styles(dom)
    active = [rule for cond, rule in sheet if html_css.condition_holds(cond, device)]

    def apply(node: html_css.DomNode, ancestors: list[html_css.Element]) -> None:
        if not isinstance(node, html_css.Element):
            return
        decls = html_css.computed_declarations(node, ancestors, active)
        if decls:
            rendered = " ".join(
                f"{p}: {d.value}{' !important' if d.important else ''};"
                for p, d in sorted(decls.items())
            )
            node.attrs["style"] = rendered
        ancestors.append(node)
        for child in node.children:
            apply(child, ancestors)
        ancestors.pop()

    apply(dom, [])
    _strip_style_elements(dom, drop_inline=False)


def _quote_html(view: _MergedView, profile: ClientProfile) -> str:
    if profile.keeps_internal_styles_in_reply:
        return view.source
    pieces = []
    for path, kind, source in view.entries:
        if kind != "html":
            pieces.append(source)
            continue
        dom = html_css.parse_html(source)  # private copy to mutate
        if profile.inlines_styles_in_reply:
            _inline_active_styles(dom, profile.device)
        else:
            _strip_style_elements(dom, drop_inline=True)
        pieces.append(html_css.to_html(dom))
    return "\n".join(pieces)


def _quote_ascii(view: _MergedView, profile: ClientProfile) -> str:
    if profile.html_view:
        # the client converted the document to text; hidden markup text
        # surfaces, comments and styles do not
        return html_css.strip_to_ascii(view.dom())
    # text-only clients never parse markup; tags vanish, the rest is literal
    return html_css.strip_tags(view.source)


def _reply_addresses(msg: MimeEntity) -> tuple[str, str]:
    to = msg.header("reply-to") or msg.header("from") or ""
    sender = msg.header("to") or ""
    return sender, to


def reply(
    msg: MimeEntity,
    profile: ClientProfile,
    keyring: Keyring,
    reply_body: str,
    date: str = DEFAULT_DATE,
) -> MimeEntity:
    """Build the quoted reply this client class would produce."""
    from_addr, to_addr = _reply_addresses(msg)
    attribution = profile.attribution_line.format(date=date, sender=msg.header("from") or "")
    headers = [("From", from_addr), ("To", to_addr)]
    subject = msg.header("subject")
    if subject:
        headers.append(("Subject", f"Re: {subject}"))

    if profile.sanitizes_reply:
        quote = guard.sanitize_for_reply(msg, keyring)
        body = _ascii_reply_body(reply_body, attribution, quote, profile.quote_prefix)
        entity = mime_core.leaf("text/plain", body, headers=tuple(headers))
    else:
        tree, _ = _decrypt_tree(msg, profile, keyring)
        view = _merged_view(tree, profile)
        if profile.html_reply:
            quote = _quote_html(view, profile)
            body = (
                f"{reply_body}<br>\n"
                f"{attribution}<br>\n"
                f"<blockquote>\n{quote}\n</blockquote>\n"
            )
            entity = mime_core.leaf("text/html", body, headers=tuple(headers))
        else:
            quote = _quote_ascii(view, profile)
            body = _ascii_reply_body(reply_body, attribution, quote, profile.quote_prefix)
            entity = mime_core.leaf("text/plain", body, headers=tuple(headers))

    if profile.encrypts_reply_to_sender and to_addr:
        try:
            return crypto_mock.encrypt(
                mime_core.serialize_message(entity), [to_addr], Scheme.SMIME_ENVELOPED
            )
        except crypto_mock.CryptoError:
            # no usable key for the counterpart: reply goes out unencrypted
            return entity
    return entity


def _ascii_reply_body(reply_body: str, attribution: str, quote: str, prefix: str) -> str:
    quoted = "\n".join(prefix + line for line in quote.split("\n"))
    return f"{reply_body}\n\n{attribution}\n{quoted}\n"


def leak_check(
    attack_msg: MimeEntity,
    secrets: list[bytes],
    profile: ClientProfile,
    keyring: Keyring,
    reply_body: str = "Dear Eve, happy to help.",
    date: str = DEFAULT_DATE,
) -> LeakReport:
    """Does replying to this message leak the given secrets to the sender?"""
    rendered = render(attack_msg, profile, keyring)
    reply_entity = reply(attack_msg, profile, keyring, reply_body, date)
    reply_bytes = mime_core.serialize_message(reply_entity)
    if profile.encrypts_reply_to_sender:
        _, attacker = _reply_addresses(attack_msg)
        try:
            reply_bytes = crypto_mock.decrypt(reply_entity, frozenset({attacker}))
        except crypto_mock.CryptoError:
            pass

    # byte-substring scan modulo newline encoding: replies are CRLF on the
    # wire, so both sides are canonicalized before comparing
    haystack = crypto_mock.canonicalize(reply_bytes)
    outcomes = []
    for secret in secrets:
        leaked = crypto_mock.canonicalize(secret) in haystack
        text = " ".join(secret.decode("utf-8", errors="replace").split())
        visible = bool(text) and text in rendered.visible
        outcomes.append(SecretOutcome(leaked, visible))
    if any(o.leaked_in_reply and not o.visible_to_victim for o in outcomes):
        verdict = Verdict.HIDDEN_LEAK
    elif any(o.leaked_in_reply for o in outcomes):
        verdict = Verdict.MERGED_LEAK
    else:
        verdict = Verdict.NO_LEAK
    return LeakReport(tuple(outcomes), verdict)


def expected_verdict(method, profile: ClientProfile) -> Verdict:
    """The verdict a profile's declared class predicts for a hiding method."""
    from .attack_forge import NewlinePadding

    if profile.leak_class == "none":
        return Verdict.NO_LEAK
    if profile.leak_class == "merged":
        return Verdict.MERGED_LEAK
    if isinstance(method, NewlinePadding):
        return Verdict.MERGED_LEAK  # nothing is hidden, only scrolled away
    return Verdict.HIDDEN_LEAK


# -- signing flows ------------------------------------------------------------------


def sign_reply(
    msg: MimeEntity,
    profile: ClientProfile,
    keyring: Keyring,
    signer: str,
    reply_body: str,
    date: str = DEFAULT_DATE,
) -> MimeEntity:
    """Reply and sign: the quoted covert content rides under the signature."""
    return crypto_mock.sign(reply(msg, profile, keyring, reply_body, date), signer)


def divergence_check(signed_msg: MimeEntity, profiles: list[ClientProfile]) -> dict[str, str]:
    """Render the signed content under each profile; two distinct outputs while
    the signature stays valid means the signature covers ambiguous content."""
    result = crypto_mock.verify(signed_msg)
    if not result.is_valid:
        raise NotSigned(f"cannot diverge-check: signature status {result.status}")
    content = signed_msg.children[0]
    views = {}
    for profile in profiles:
        views[profile.name] = render(content, profile, frozenset()).visible
    return views


# -- profile files ------------------------------------------------------------------

_BOOL_FIELDS = {
    "merges_parts",
    "decrypts_subparts",
    "resolves_cid",
    "html_view",
    "html_reply",
    "keeps_internal_styles_in_reply",
    "inlines_styles_in_reply",
    "sanitizes_reply",
    "encrypts_reply_to_sender",
    "fetches_remote_css",
    "ignores_conditional_css",
}


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"{key}: not a boolean: {value!r}")


def parse_profile(text: str, fallback_name: str = "unnamed") -> ClientProfile:
    """Parse the flat key=value profile format."""
    raw: dict[str, str] = {}
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ValueError(f"profile line without '=': {line!r}")
        raw[key.strip()] = value.strip()

    kwargs: dict = {"name": raw.pop("name", fallback_name)}
    device_kwargs: dict = {}
    for key, value in raw.items():
        if key in _BOOL_FIELDS and key != "ignores_conditional_css":
            kwargs[key] = _parse_bool(key, value)
        elif key == "ignores_conditional_css":
            device_kwargs[key] = _parse_bool(key, value)
        elif key == "device_width_px":
            device_kwargs[key] = int(value)
        elif key == "document_url":
            device_kwargs[key] = value
        elif key == "client_tokens":
            device_kwargs[key] = frozenset(t.strip() for t in value.split(",") if t.strip())
        elif key == "supported_features":
            pairs = set()
            for item in value.split(","):
                prop, colon, val = item.strip().partition(":")
                if colon:
                    pairs.add((prop.strip(), val.strip()))
            device_kwargs[key] = frozenset(pairs)
        elif key in ("quote_prefix", "attribution_line", "leak_class"):
            kwargs[key] = value
        else:
            raise ValueError(f"unknown profile key: {key!r}")
    kwargs["device"] = DeviceProfile(**device_kwargs)
    return ClientProfile(**kwargs)


def _packaged_profile_dir() -> Path:
    return Path(__file__).resolve().parent / "profiles"


def profile_search_dirs(extra_dir: str | Path | None = None) -> list[Path]:
    dirs = []
    if extra_dir:
        dirs.append(Path(extra_dir))
    env = os.environ.get("COVERTMAIL_PROFILE_DIR")
    if env:
        dirs.append(Path(env))
    dirs.append(_packaged_profile_dir())
    return dirs


def load_profile(name_or_path: str, extra_dir: str | Path | None = None) -> ClientProfile:
    """Load a profile by file path or shipped name."""
    direct = Path(name_or_path)
    if direct.is_file():
        return parse_profile(direct.read_text(encoding="utf-8"), direct.stem)
    for directory in profile_search_dirs(extra_dir):
        candidate = directory / f"{name_or_path}.profile"
        if candidate.is_file():
            return parse_profile(candidate.read_text(encoding="utf-8"), candidate.stem)
    raise UnknownProfile(name_or_path)


def list_profiles(extra_dir: str | Path | None = None) -> list[str]:
    names: set[str] = set()
    for directory in profile_search_dirs(extra_dir):
        if directory.is_dir():
            names.update(p.stem for p in directory.glob("*.profile"))
    return sorted(names)
