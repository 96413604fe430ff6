"""RFC822/MIME tree parsing, building, and serialization.

Deliberately small: CRLF or LF input, 7bit/base64 transfer encodings, strict
multipart termination (a missing closing delimiter is an error, never silently
recovered). Parsed trees are immutable value objects, safe to share between
threads, and serialization is deterministic: the same tree always produces the
same bytes.
"""
from __future__ import annotations

import base64
import binascii
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union

MAX_DEPTH = 32
CRLF = b"\r\n"
ARMOR_BEGIN = "-----BEGIN PGP MESSAGE-----"
ARMOR_END = "-----END PGP MESSAGE-----"

_HEADER_NAME_RE = re.compile(r"[!-9;-~]+\Z")  # printable ASCII minus ':'
_TOKEN_RE = re.compile(r"[A-Za-z0-9!#$%&'*+.^_`|~-]+\Z")
_STRUCTURED_HEADERS = frozenset({"content-type", "content-disposition"})
_IDENTITY_ENCODINGS = frozenset({"7bit", "8bit", "binary"})


class MimeError(ValueError):
    """Base class for message parsing/serialization failures."""


class MalformedHeader(MimeError):
    pass


class MissingBoundary(MimeError):
    pass


class UnterminatedPart(MimeError):
    pass


class DepthExceeded(MimeError):
    pass


class BoundaryCollision(MimeError):
    pass


class UnsupportedTransferEncoding(MimeError):
    pass


class InvalidBase64Body(MimeError):
    pass


class Scheme(Enum):
    SMIME_ENVELOPED = "smime-enveloped"
    PGP_MIME = "pgp-mime"
    PGP_INLINE = "pgp-inline"


@dataclass(frozen=True)
class HeaderField:
    """One unfolded header line; params are split out for structured headers."""

    name: str
    value: str
    params: tuple[tuple[str, str], ...] = ()

    def param(self, key: str) -> str | None:
        key = key.lower()
        for k, v in self.params:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class ContentType:
    primary: str
    sub: str
    params: tuple[tuple[str, str], ...] = ()

    @property
    def full(self) -> str:
        return f"{self.primary}/{self.sub}"

    def param(self, key: str) -> str | None:
        key = key.lower()
        for k, v in self.params:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class Leaf:
    data: bytes


@dataclass(frozen=True)
class Multipart:
    children: tuple["MimeEntity", ...]
    preamble: bytes = b""
    epilogue: bytes = b""


@dataclass(frozen=True)
class EntityPath:
    """Child indices from the root; empty means the root itself."""

    indices: tuple[int, ...] = ()

    @property
    def is_root(self) -> bool:
        return not self.indices

    def child(self, index: int) -> "EntityPath":
        return EntityPath(self.indices + (index,))

    def resolve(self, root: "MimeEntity") -> "MimeEntity":
        node = root
        for i in self.indices:
            if not isinstance(node.body, Multipart) or i >= len(node.body.children):
                raise IndexError(f"path {self} does not resolve in this tree")
            node = node.body.children[i]
        return node

    def __str__(self) -> str:
        return "root" if self.is_root else ".".join(str(i) for i in self.indices)


ROOT = EntityPath()


@dataclass(frozen=True)
class MimeEntity:
    headers: tuple[HeaderField, ...]
    body: Union[Leaf, Multipart]

    def header_field(self, name: str) -> HeaderField | None:
        name = name.lower()
        for h in self.headers:
            if h.name.lower() == name:
                return h
        return None

    def header(self, name: str) -> str | None:
        h = self.header_field(name)
        return h.value if h is not None else None

    @property
    def content_type(self) -> ContentType:
        h = self.header_field("content-type")
        if h is None:
            return ContentType("text", "plain")
        primary, _, sub = h.value.partition("/")
        primary, sub = primary.strip().lower(), sub.strip().lower()
        if not primary or not sub:
            return ContentType("text", "plain")
        return ContentType(primary, sub, h.params)

    @property
    def is_multipart(self) -> bool:
        return isinstance(self.body, Multipart)

    @property
    def children(self) -> tuple["MimeEntity", ...]:
        return self.body.children if isinstance(self.body, Multipart) else ()

    @property
    def leaf_bytes(self) -> bytes:
        if not isinstance(self.body, Leaf):
            raise MimeError("entity is multipart, it has no leaf body")
        return self.body.data

    @property
    def text(self) -> str:
        return self.leaf_bytes.decode("utf-8", errors="replace")

    def with_headers(self, headers: tuple[HeaderField, ...]) -> "MimeEntity":
        return MimeEntity(headers, self.body)


def walk(entity: MimeEntity, path: EntityPath = ROOT) -> Iterator[tuple[EntityPath, MimeEntity]]:
    """Preorder traversal yielding (path, entity) pairs."""
    yield path, entity
    if isinstance(entity.body, Multipart):
        for i, child in enumerate(entity.body.children):
            yield from walk(child, path.child(i))


# -- encryption-structure classification --------------------------------------


@dataclass(frozen=True)
class EncryptedPart:
    path: EntityPath
    scheme: Scheme
    count: int = 1  # >1 only for several inline armor blocks in one leaf


@dataclass(frozen=True)
class NoEncryption:
    pass


@dataclass(frozen=True)
class EncryptedRoot:
    scheme: Scheme


@dataclass(frozen=True)
class PartiallyEncrypted:
    paths: tuple[EncryptedPart, ...]


StructureClass = Union[NoEncryption, EncryptedRoot, PartiallyEncrypted]


def _detect_scheme(entity: MimeEntity) -> EncryptedPart | None:
    ct = entity.content_type
    if ct.full == "application/pkcs7-mime":
        smime_type = (ct.param("smime-type") or "").lower()
        if smime_type == "enveloped-data":
            return EncryptedPart(ROOT, Scheme.SMIME_ENVELOPED)
    if ct.full == "multipart/encrypted":
        protocol = (ct.param("protocol") or "").lower()
        if protocol == "application/pgp-encrypted":
            return EncryptedPart(ROOT, Scheme.PGP_MIME)
    if ct.primary == "text" and isinstance(entity.body, Leaf):
        count = entity.text.count(ARMOR_BEGIN)
        if count:
            return EncryptedPart(ROOT, Scheme.PGP_INLINE, count)
    return None


def locate_encrypted_parts(entity: MimeEntity) -> list[EncryptedPart]:
    """Find every encrypted part, depth-first in document order.

    A detected ciphertext container (S/MIME leaf or PGP/MIME multipart) is
    reported once and not descended into.
    """
    found: list[EncryptedPart] = []

    def visit(node: MimeEntity, path: EntityPath) -> None:
        hit = _detect_scheme(node)
        if hit is not None:
            found.append(EncryptedPart(path, hit.scheme, hit.count))
            return
        if isinstance(node.body, Multipart):
            for i, child in enumerate(node.body.children):
                visit(child, path.child(i))

    visit(entity, ROOT)
    return found


def classify_structure(entity: MimeEntity) -> StructureClass:
    """Sort a message into no/root-only/partial encryption.

    Root-only PGP/Inline additionally requires the single armor block to span
    the whole trimmed body; decoy text around an armor block is partial.
    """
    parts = locate_encrypted_parts(entity)
    if not parts:
        return NoEncryption()
    if len(parts) == 1 and parts[0].path.is_root:
        part = parts[0]
        if part.scheme is not Scheme.PGP_INLINE:
            return EncryptedRoot(part.scheme)
        body = entity.text.strip()
        if part.count == 1 and body.startswith(ARMOR_BEGIN) and body.endswith(ARMOR_END):
            return EncryptedRoot(Scheme.PGP_INLINE)
    return PartiallyEncrypted(tuple(parts))


# -- parsing -------------------------------------------------------------------


def _normalize_newlines(raw: bytes) -> bytes:
    return raw.replace(b"\r\n", b"\n").replace(b"\r", b"\n")


def _split_value_and_params(raw: str) -> tuple[str, tuple[tuple[str, str], ...]]:
    segments: list[str] = []
    buf: list[str] = []
    quoted = False
    for ch in raw:
        if ch == '"':
            quoted = not quoted
            buf.append(ch)
        elif ch == ";" and not quoted:
            segments.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    segments.append("".join(buf))
    value = segments[0].strip()
    params: list[tuple[str, str]] = []
    for seg in segments[1:]:
        key, eq, val = seg.partition("=")
        if not eq:
            continue
        key = key.strip().lower()
        val = val.strip()
        if len(val) >= 2 and val[0] == '"' and val[-1] == '"':
            val = val[1:-1].replace('\\"', '"').replace("\\\\", "\\")
        if key:
            params.append((key, val))
    return value, tuple(params)


def _parse_headers(lines: list[str]) -> tuple[HeaderField, ...]:
    # Unfold first: a continuation line starts with SP/HT and joins with one space.
    logical: list[str] = []
    for line in lines:
        if line[:1] in (" ", "\t") and logical:
            logical[-1] = logical[-1] + " " + line.strip()
        else:
            logical.append(line)
    fields: list[HeaderField] = []
    for line in logical:
        name, colon, value = line.partition(":")
        if not colon:
            raise MalformedHeader(f"header line without colon: {line[:60]!r}")
        name = name.strip()
        if not _HEADER_NAME_RE.match(name):
            raise MalformedHeader(f"invalid header name: {name!r}")
        value = value.strip(" \t")
        if name.lower() in _STRUCTURED_HEADERS:
            main, params = _split_value_and_params(value)
            fields.append(HeaderField(name, main, params))
        else:
            fields.append(HeaderField(name, value))
    return tuple(fields)


def _decode_leaf(body_text: str, headers: tuple[HeaderField, ...]) -> Leaf:
    cte = "7bit"
    for h in headers:
        if h.name.lower() == "content-transfer-encoding":
            cte = h.value.strip().lower()
            break
    if cte == "base64":
        compact = re.sub(r"\s+", "", body_text)
        try:
            return Leaf(base64.b64decode(compact, validate=True))
        except (binascii.Error, ValueError) as exc:
            raise InvalidBase64Body(f"undecodable base64 body: {exc}") from exc
    if cte == "quoted-printable":
        raise UnsupportedTransferEncoding("quoted-printable bodies are not supported")
    if cte not in _IDENTITY_ENCODINGS:
        raise UnsupportedTransferEncoding(f"unknown transfer encoding: {cte!r}")
    return Leaf(body_text.replace("\n", "\r\n").encode("utf-8", errors="surrogateescape"))


def _parse_entity(text: str, depth: int) -> MimeEntity:
    if depth > MAX_DEPTH:
        raise DepthExceeded(f"nesting deeper than {MAX_DEPTH}")
    lines = text.split("\n")
    header_lines: list[str] = []
    body_start = len(lines)
    for i, line in enumerate(lines):
        if line == "":
            body_start = i + 1
            break
        header_lines.append(line)
    headers = _parse_headers(header_lines)
    body_text = "\n".join(lines[body_start:])

    entity_ct = MimeEntity(headers, Leaf(b"")).content_type
    if entity_ct.primary != "multipart":
        return MimeEntity(headers, _decode_leaf(body_text, headers))

    boundary = entity_ct.param("boundary")
    if not boundary:
        raise MissingBoundary("multipart entity without a boundary parameter")
    delim = "--" + boundary
    close = delim + "--"

    preamble_lines: list[str] = []
    part_lines: list[list[str]] = []
    current: list[str] | None = None
    closed = False
    epilogue_lines: list[str] = []
    for line in body_text.split("\n"):
        stripped = line.rstrip(" \t")
        if closed:
            epilogue_lines.append(line)
        elif stripped == close:
            closed = True
            if current is not None:
                part_lines.append(current)
                current = None
        elif stripped == delim:
            if current is not None:
                part_lines.append(current)
            current = []
        elif current is None:
            preamble_lines.append(line)
        else:
            current.append(line)
    if not closed:
        raise UnterminatedPart(f"missing closing delimiter {close!r}")

    children = tuple(_parse_entity("\n".join(p), depth + 1) for p in part_lines)
    preamble = "\n".join(preamble_lines).replace("\n", "\r\n").encode("utf-8", errors="surrogateescape")
    epilogue = "\n".join(epilogue_lines).replace("\n", "\r\n").encode("utf-8", errors="surrogateescape")
    return MimeEntity(headers, Multipart(children, preamble, epilogue))


def parse_message(raw: bytes) -> MimeEntity:
    """Parse message bytes into an entity tree.

    Accepts CRLF or LF line endings and normalizes to CRLF internally. A
    message without a Content-Type header is a text/plain leaf.
    """
    if isinstance(raw, str):
        raw = raw.encode("utf-8")
    text = _normalize_newlines(raw).decode("utf-8", errors="surrogateescape")
    return _parse_entity(text, 0)


# -- serialization -------------------------------------------------------------


def _render_param(key: str, value: str) -> str:
    if value and _TOKEN_RE.match(value):
        return f"{key}={value}"
    escaped = value.replace("\\", "\\\\").replace('"', '\\"')
    return f'{key}="{escaped}"'


def _render_headers(headers: tuple[HeaderField, ...]) -> bytes:
    out = []
    for h in headers:
        line = f"{h.name}: {h.value}"
        for k, v in h.params:
            line += "; " + _render_param(k, v)
        out.append(line.encode("utf-8", errors="surrogateescape"))
    return CRLF.join(out)


def _wrap_base64(data: bytes) -> bytes:
    encoded = base64.b64encode(data)
    chunks = [encoded[i : i + 76] for i in range(0, len(encoded), 76)]
    return CRLF.join(chunks) if chunks else b""


def _transfer_encoding(entity: MimeEntity) -> str:
    value = entity.header("content-transfer-encoding")
    return value.strip().lower() if value else "7bit"


def serialize_message(entity: MimeEntity) -> bytes:
    """Render an entity tree to CRLF-delimited bytes, deterministically."""
    head = _render_headers(entity.headers)
    if isinstance(entity.body, Leaf):
        cte = _transfer_encoding(entity)
        if cte == "base64":
            body = _wrap_base64(entity.body.data)
        elif cte == "quoted-printable":
            raise UnsupportedTransferEncoding("quoted-printable bodies are not supported")
        else:
            body = entity.body.data
        return head + CRLF + CRLF + body

    boundary = entity.content_type.param("boundary")
    if not boundary:
        raise MissingBoundary("multipart entity without a boundary parameter")
    delim = b"--" + boundary.encode("utf-8")
    out = bytearray(head + CRLF + CRLF)
    if entity.body.preamble:
        out += entity.body.preamble + CRLF
    for child in entity.body.children:
        child_bytes = serialize_message(child)
        for line in child_bytes.split(CRLF):
            if line.startswith(delim):
                raise BoundaryCollision(
                    f"boundary {boundary!r} occurs as a line prefix inside a child part"
                )
        out += delim + CRLF + child_bytes + CRLF
    out += delim + b"--" + CRLF
    if entity.body.epilogue:
        out += entity.body.epilogue
    return bytes(out)


# -- builders ------------------------------------------------------------------


def make_boundary(seed: int | str, depth: int) -> str:
    return f"=_cm_{seed}_{depth}"


def _body_to_bytes(body: bytes | str) -> bytes:
    if isinstance(body, str):
        return body.replace("\r\n", "\n").replace("\n", "\r\n").encode("utf-8")
    return body


def leaf(
    content_type: str,
    body: bytes | str,
    *,
    params: tuple[tuple[str, str], ...] = (),
    transfer_encoding: str | None = None,
    headers: tuple[tuple[str, str], ...] = (),
) -> MimeEntity:
    """Build a leaf entity. String bodies are CRLF-normalized; bytes are verbatim."""
    fields = [HeaderField(name, value) for name, value in headers]
    fields.append(HeaderField("Content-Type", content_type, params))
    if transfer_encoding:
        fields.append(HeaderField("Content-Transfer-Encoding", transfer_encoding))
    return MimeEntity(tuple(fields), Leaf(_body_to_bytes(body)))


def multipart(
    subtype: str,
    children: list[MimeEntity] | tuple[MimeEntity, ...],
    boundary: str,
    *,
    params: tuple[tuple[str, str], ...] = (),
    headers: tuple[tuple[str, str], ...] = (),
    preamble: bytes = b"",
    epilogue: bytes = b"",
) -> MimeEntity:
    """Build a multipart entity, adjusting the boundary on content collision."""
    kids = tuple(children)
    rendered = [serialize_message(c) for c in kids]
    candidate = boundary
    for attempt in range(64):
        delim = ("--" + candidate).encode("utf-8")
        if not any(
            line.startswith(delim) for blob in rendered for line in blob.split(CRLF)
        ):
            break
        candidate = f"{boundary}_{attempt + 1}"
    fields = [HeaderField(name, value) for name, value in headers]
    all_params = (("boundary", candidate),) + params
    fields.append(HeaderField("Content-Type", f"multipart/{subtype}", all_params))
    return MimeEntity(tuple(fields), Multipart(kids, preamble, epilogue))
