"""Bit-exact mock encryption and signing provider.

Stands in for real OpenPGP/S-MIME backends so oracle behavior is testable at
desk scale. Payloads are NUL-separated and magic-prefixed (``MOCK-P7M``,
``MOCK-PGP``, ``MOCK-SIG``), then base64-armored, which makes every ciphertext
trivially auditable in tests while guaranteeing that plaintext bytes never
appear verbatim in serialized ciphertext.

The :class:`CryptoProvider` protocol is the seam where a real backend could be
dropped in; this module ships only the mock.
"""
from __future__ import annotations

import base64
import binascii
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Protocol, Union

from . import mime_core
from .mime_core import (
    ARMOR_BEGIN,
    ARMOR_END,
    HeaderField,
    Leaf,
    MimeEntity,
    Multipart,
    Scheme,
    leaf,
    serialize_message,
)

KEY_ID_RE = re.compile(r"[A-Za-z0-9_.@-]{1,64}\Z")

MAGIC_P7M = b"MOCK-P7M"
MAGIC_PGP = b"MOCK-PGP"
MAGIC_SIG = b"MOCK-SIG"

PGP_MIME_BOUNDARY = "PGPMIME"

KeyRef = str
Keyring = frozenset


class CryptoError(ValueError):
    pass


class EmptyRecipients(CryptoError):
    pass


class BadKeyId(CryptoError):
    pass


class NotCiphertext(CryptoError):
    pass


class NoMatchingKey(CryptoError):
    pass


class CorruptPayload(CryptoError):
    pass


@dataclass(frozen=True)
class CipherEnvelope:
    scheme: Scheme
    recipients: tuple[KeyRef, ...]
    plaintext: bytes


@dataclass(frozen=True)
class MockSignature:
    signer: KeyRef
    digest: str


@dataclass(frozen=True)
class VerifyResult:
    status: Literal["valid", "digest-mismatch", "not-signed"]
    signer: KeyRef | None = None

    @property
    def is_valid(self) -> bool:
        return self.status == "valid"


def valid_signature(signer: KeyRef) -> VerifyResult:
    return VerifyResult("valid", signer)


DIGEST_MISMATCH = VerifyResult("digest-mismatch")
NOT_SIGNED = VerifyResult("not-signed")


class CryptoProvider(Protocol):
    def encrypt(self, plaintext: bytes, recipients: Iterable[KeyRef], scheme: Scheme) -> MimeEntity: ...

    def decrypt(self, target: Union[MimeEntity, str, bytes], keyring: Iterable[KeyRef]) -> bytes: ...

    def sign(self, content: Union[MimeEntity, bytes], signer: KeyRef) -> MimeEntity: ...

    def verify(self, entity: MimeEntity) -> VerifyResult: ...


def _check_key(key: KeyRef) -> KeyRef:
    if not KEY_ID_RE.match(key or ""):
        raise BadKeyId(f"invalid key id: {key!r}")
    return key


def _payload(magic: bytes, recipients: tuple[KeyRef, ...], plaintext: bytes) -> bytes:
    return magic + b"\0" + ",".join(recipients).encode("ascii") + b"\0" + plaintext


def _armor(payload: bytes) -> str:
    encoded = base64.b64encode(payload).decode("ascii")
    lines = [encoded[i : i + 76] for i in range(0, len(encoded), 76)]
    return "\n".join([ARMOR_BEGIN, *lines, ARMOR_END])


def _dearmor(text: str) -> bytes:
    begin = text.find(ARMOR_BEGIN)
    end = text.find(ARMOR_END)
    if begin == -1 or end == -1 or end < begin:
        raise NotCiphertext("no armor block found")
    inner = text[begin + len(ARMOR_BEGIN) : end]
    compact = re.sub(r"\s+", "", inner)
    try:
        return base64.b64decode(compact, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise CorruptPayload(f"bad armor base64: {exc}") from exc


def _open_payload(payload: bytes, magic: bytes) -> CipherEnvelope:
    if not payload.startswith(magic + b"\0"):
        raise CorruptPayload(f"missing {magic.decode()} prefix")
    rest = payload[len(magic) + 1 :]
    recipients_blob, nul, plaintext = rest.partition(b"\0")
    if not nul:
        raise CorruptPayload("missing recipient separator")
    recipients = tuple(r for r in recipients_blob.decode("ascii", "replace").split(",") if r)
    scheme = Scheme.SMIME_ENVELOPED if magic == MAGIC_P7M else Scheme.PGP_MIME
    return CipherEnvelope(scheme, recipients, plaintext)


def canonicalize(data: bytes) -> bytes:
    """CRLF-normalize bytes before digesting; no whitespace stripping."""
    return data.replace(b"\r\n", b"\n").replace(b"\r", b"\n").replace(b"\n", b"\r\n")


def encrypt(plaintext: bytes, recipients: Iterable[KeyRef], scheme: Scheme) -> MimeEntity:
    """Wrap plaintext in one of the three mock ciphertext shapes."""
    recipients = tuple(_check_key(r) for r in recipients)
    if not recipients:
        raise EmptyRecipients("at least one recipient key is required")

    if scheme is Scheme.SMIME_ENVELOPED:
        return leaf(
            "application/pkcs7-mime",
            _payload(MAGIC_P7M, recipients, plaintext),
            params=(("smime-type", "enveloped-data"), ("name", "smime.p7m")),
            transfer_encoding="base64",
        )

    armor = _armor(_payload(MAGIC_PGP, recipients, plaintext))
    if scheme is Scheme.PGP_INLINE:
        return leaf("text/plain", armor)

    version = leaf("application/pgp-encrypted", "Version: 1")
    data = MimeEntity(
        (
            HeaderField("Content-Type", "application/octet-stream", (("name", "encrypted.asc"),)),
            HeaderField("Content-Disposition", "inline", (("filename", "encrypted.asc"),)),
        ),
        Leaf(armor.replace("\n", "\r\n").encode("ascii")),
    )
    return mime_core.multipart(
        "encrypted",
        [version, data],
        PGP_MIME_BOUNDARY,
        params=(("protocol", "application/pgp-encrypted"),),
    )


def open_envelope(target: Union[MimeEntity, str, bytes]) -> CipherEnvelope:
    """Decode a mock ciphertext without checking keys."""
    if isinstance(target, bytes):
        target = target.decode("utf-8", errors="replace")
    if isinstance(target, str):
        if ARMOR_BEGIN not in target:
            raise NotCiphertext("text carries no armor block")
        env = _open_payload(_dearmor(target), MAGIC_PGP)
        return CipherEnvelope(Scheme.PGP_INLINE, env.recipients, env.plaintext)

    ct = target.content_type
    if ct.full == "application/pkcs7-mime" and (ct.param("smime-type") or "").lower() == "enveloped-data":
        return _open_payload(target.leaf_bytes, MAGIC_P7M)
    if ct.full == "multipart/encrypted" and (ct.param("protocol") or "").lower() == "application/pgp-encrypted":
        for child in target.children:
            if isinstance(child.body, Leaf) and ARMOR_BEGIN in child.text:
                return _open_payload(_dearmor(child.text), MAGIC_PGP)
        raise CorruptPayload("multipart/encrypted without an armored part")
    if ct.primary == "text" and isinstance(target.body, Leaf) and ARMOR_BEGIN in target.text:
        env = _open_payload(_dearmor(target.text), MAGIC_PGP)
        return CipherEnvelope(Scheme.PGP_INLINE, env.recipients, env.plaintext)
    raise NotCiphertext(f"entity {ct.full} is not a mock ciphertext")


def decrypt(target: Union[MimeEntity, str, bytes], keyring: Iterable[KeyRef]) -> bytes:
    env = open_envelope(target)
    if not set(keyring) & set(env.recipients):
        raise NoMatchingKey(f"none of the keys match recipients {env.recipients}")
    return env.plaintext


def sign(content: Union[MimeEntity, bytes], signer: KeyRef) -> MimeEntity:
    """Wrap content in multipart/signed with a digest over its canonical bytes."""
    _check_key(signer)
    if isinstance(content, bytes):
        try:
            entity = mime_core.parse_message(content)
        except mime_core.MimeError:
            entity = leaf("text/plain", content)
    else:
        entity = content
    signed_bytes = canonicalize(serialize_message(entity))
    digest = hashlib.sha256(signed_bytes).hexdigest()
    sig_leaf = leaf(
        "application/pkcs7-signature",
        _payload(MAGIC_SIG, (signer,), digest.encode("ascii")),
        params=(("name", "smime.p7s"),),
        transfer_encoding="base64",
    )
    return mime_core.multipart(
        "signed",
        [entity, sig_leaf],
        f"=_sig_{digest[:12]}",
        params=(("protocol", "application/pkcs7-signature"), ("micalg", "sha-256")),
    )


def read_signature(entity: MimeEntity) -> MockSignature | None:
    if entity.content_type.full != "multipart/signed" or len(entity.children) != 2:
        return None
    sig_part = entity.children[1]
    if sig_part.content_type.full != "application/pkcs7-signature":
        return None
    payload = sig_part.leaf_bytes
    if not payload.startswith(MAGIC_SIG + b"\0"):
        return None
    rest = payload[len(MAGIC_SIG) + 1 :]
    signer_blob, nul, digest_blob = rest.partition(b"\0")
    if not nul:
        return None
    return MockSignature(signer_blob.decode("ascii", "replace"), digest_blob.decode("ascii", "replace"))


def verify(entity: MimeEntity) -> VerifyResult:
    sig = read_signature(entity)
    if sig is None:
        return NOT_SIGNED
    recomputed = hashlib.sha256(canonicalize(serialize_message(entity.children[0]))).hexdigest()
    if recomputed != sig.digest:
        return DIGEST_MISMATCH
    return valid_signature(sig.signer)


def load_keyring(path: str | Path) -> frozenset[KeyRef]:
    """Read a keyring file: one key id per line, blank lines ignored."""
    keys = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        line = line.strip()
        if line:
            keys.append(_check_key(line))
    return frozenset(keys)


class MockProvider:
    """Bundles the four operations behind the provider seam."""

    encrypt = staticmethod(encrypt)
    decrypt = staticmethod(decrypt)
    sign = staticmethod(sign)
    verify = staticmethod(verify)
