"""Tag-soup HTML model plus a small CSS subset with conditional rules.

The renderer answers one question: which text does a given device/client
actually display? It covers the seven text-hiding property families
(display, visibility, opacity, clip-path, off-screen position, transparent
color, zero font-size), conditional at-rules (``@media`` device-width,
``@supports`` feature conjunctions, ``@-moz-document url-prefix``), and
client-proprietary conditional comments.

parse_html never raises: any byte string produces some tree.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

# Elements whose inner text is never displayed. img is included because
# clients render image bytes, not child text; content smuggled into an img
# (e.g. a resolved cid: reference) survives in quotes but is never shown.
HIDING_CONTAINERS = frozenset({"iframe", "audio", "canvas"})
RAW_TEXT_TAGS = frozenset({"script", "style"})
NEVER_DISPLAY = HIDING_CONTAINERS | RAW_TEXT_TAGS | {"img"}

VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

BLOCK_TAGS = frozenset({
    "address", "article", "aside", "blockquote", "div", "dl", "dt", "dd",
    "fieldset", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5",
    "h6", "header", "hr", "li", "main", "nav", "ol", "p", "pre", "section",
    "table", "td", "th", "tr", "ul",
})

OFFSCREEN_THRESHOLD_PX = -999.0

CLIENT_TOKENS = ("wlm", "mso", "owa", "moz")

# Representative CSS feature fingerprint pairs for @supports probing.
FEATURE_FINGERPRINT_PAIRS: tuple[tuple[str, str], ...] = (
    ("display", "flex"),
    ("display", "grid"),
    ("display", "inline-block"),
    ("visibility", "collapse"),
    ("opacity", "0.5"),
    ("clip-path", "circle(50%)"),
    ("position", "sticky"),
    ("position", "fixed"),
    ("color", "rgba(0 0 0 / 50%)"),
    ("font-size", "0.1px"),
    ("mix-blend-mode", "multiply"),
    ("filter", "blur(2px)"),
    ("backdrop-filter", "blur(2px)"),
    ("transform", "rotate(1deg)"),
    ("writing-mode", "vertical-rl"),
    ("text-overflow", "ellipsis"),
    ("object-fit", "cover"),
    ("pointer-events", "none"),
    ("user-select", "none"),
    ("overflow-wrap", "anywhere"),
    ("aspect-ratio", "1/1"),
    ("gap", "1px"),
)


# -- DOM -----------------------------------------------------------------------


@dataclass
class Text:
    content: str


@dataclass
class Comment:
    content: str


@dataclass
class Element:
    tag: str
    attrs: dict[str, str] = field(default_factory=dict)
    children: list["DomNode"] = field(default_factory=list)

    def classes(self) -> list[str]:
        return self.attrs.get("class", "").split()


DomNode = Union[Element, Text, Comment]

_TAG_NAME_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9:-]*")
_ATTR_NAME_RE = re.compile(r"[^\s=/>]+")


def _parse_attrs(text: str, pos: int) -> tuple[dict[str, str], int, bool]:
    """Parse attributes from pos up to '>'. Returns (attrs, index after '>',
    self_closing); index is len(text) when the tag never closes."""
    attrs: dict[str, str] = {}
    n = len(text)
    self_closing = False
    while pos < n:
        while pos < n and text[pos] in " \t\n\r":
            pos += 1
        if pos >= n:
            return attrs, n, self_closing
        if text[pos] == ">":
            return attrs, pos + 1, self_closing
        if text[pos] == "/":
            pos += 1
            self_closing = True
            continue
        m = _ATTR_NAME_RE.match(text, pos)
        if not m:
            pos += 1
            continue
        name = m.group(0).lower()
        pos = m.end()
        while pos < n and text[pos] in " \t\n\r":
            pos += 1
        value = ""
        if pos < n and text[pos] == "=":
            pos += 1
            while pos < n and text[pos] in " \t\n\r":
                pos += 1
            if pos < n and text[pos] in "\"'":
                quote = text[pos]
                end = text.find(quote, pos + 1)
                if end == -1:
                    value = text[pos + 1 :]
                    pos = n
                else:
                    value = text[pos + 1 : end]
                    pos = end + 1
            else:
                start = pos
                while pos < n and text[pos] not in " \t\n\r>":
                    pos += 1
                value = text[start:pos]
        attrs[name] = value
    return attrs, n, self_closing


def parse_html(text: str | bytes) -> DomNode:
    """Error-tolerant tag-soup parse; never raises.

    Unclosed elements swallow the rest of the input as children, ``<!--``
    without ``-->`` swallows the remainder as one comment, and script/style
    contents are kept as raw text.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    root = Element("#root")
    stack: list[Element] = [root]

    def add(node: DomNode) -> None:
        stack[-1].children.append(node)

    i, n = 0, len(text)
    while i < n:
        lt = text.find("<", i)
        if lt == -1:
            add(Text(text[i:]))
            break
        if lt > i:
            add(Text(text[i:lt]))
        if text.startswith("<!--", lt):
            end = text.find("-->", lt + 4)
            if end == -1:
                add(Comment(text[lt + 4 :]))
                i = n
            else:
                add(Comment(text[lt + 4 : end]))
                i = end + 3
            continue
        if text.startswith("<!", lt) or text.startswith("<?", lt):
            end = text.find(">", lt)
            if end == -1:
                add(Comment(text[lt + 2 :]))
                i = n
            else:
                add(Comment(text[lt + 2 : end]))
                i = end + 1
            continue
        if text.startswith("</", lt):
            gt = text.find(">", lt)
            if gt == -1:
                add(Text(text[lt:]))
                break
            name = text[lt + 2 : gt].strip().lower()
            name = name.split()[0] if name else ""
            for depth in range(len(stack) - 1, 0, -1):
                if stack[depth].tag == name:
                    del stack[depth:]
                    break
            i = gt + 1
            continue
        m = _TAG_NAME_RE.match(text, lt + 1)
        if not m:
            add(Text("<"))
            i = lt + 1
            continue
        name = m.group(0).lower()
        attrs, i, self_closing = _parse_attrs(text, m.end())
        element = Element(name, attrs)
        add(element)
        if name in VOID_TAGS or self_closing:
            continue
        if name in RAW_TEXT_TAGS:
            close_re = re.compile(rf"</{name}\b", re.IGNORECASE)
            hit = close_re.search(text, i)
            if hit is None:
                element.children.append(Text(text[i:]))
                i = n
            else:
                element.children.append(Text(text[i : hit.start()]))
                gt = text.find(">", hit.end())
                i = n if gt == -1 else gt + 1
            continue
        stack.append(element)

    if len(root.children) == 1:
        return root.children[0]
    if not root.children:
        return Text("")
    return root


def to_html(node: DomNode) -> str:
    """Serialize a DOM back to markup. Text content is emitted verbatim."""
    out: list[str] = []
    _render_node(node, out)
    return "".join(out)


def _render_node(node: DomNode, out: list[str]) -> None:
    if isinstance(node, Text):
        out.append(node.content)
        return
    if isinstance(node, Comment):
        out.append(f"<!--{node.content}-->")
        return
    if node.tag == "#root":
        for child in node.children:
            _render_node(child, out)
        return
    attrs = "".join(
        f' {k}="{v}"' if v or k not in ("selected", "checked") else f" {k}"
        for k, v in node.attrs.items()
    )
    out.append(f"<{node.tag}{attrs}>")
    if node.tag in VOID_TAGS:
        # void elements cannot carry children in markup; anything injected
        # into them (resolved cid: content) materializes right after the tag
        for child in node.children:
            _render_node(child, out)
        return
    for child in node.children:
        _render_node(child, out)
    out.append(f"</{node.tag}>")


def iter_elements(node: DomNode) -> Iterable[Element]:
    if isinstance(node, Element):
        yield node
        for child in node.children:
            yield from iter_elements(child)


# -- CSS: selectors, declarations, conditions ----------------------------------


@dataclass(frozen=True)
class Universal:
    pass


@dataclass(frozen=True)
class Tag:
    name: str


@dataclass(frozen=True)
class ClassSel:
    name: str


@dataclass(frozen=True)
class AttrPresence:
    name: str


@dataclass(frozen=True)
class Descendant:
    ancestor: "Selector"
    child: "Selector"


Selector = Union[Universal, Tag, ClassSel, AttrPresence, Descendant]


@dataclass(frozen=True)
class Declaration:
    property: str
    value: str
    important: bool = False


@dataclass(frozen=True)
class Rule:
    selector: Selector
    declarations: tuple[Declaration, ...]


@dataclass(frozen=True)
class MediaMaxDeviceWidth:
    px: int


@dataclass(frozen=True)
class MediaMinDeviceWidth:
    px: int


@dataclass(frozen=True)
class Supports:
    pairs: frozenset[tuple[str, str]]


@dataclass(frozen=True)
class MozDocumentUrlPrefix:
    prefix: str


@dataclass(frozen=True)
class ProprietaryComment:
    token: str


Condition = Union[
    None, MediaMaxDeviceWidth, MediaMinDeviceWidth, Supports,
    MozDocumentUrlPrefix, ProprietaryComment,
]


@dataclass(frozen=True)
class DeviceProfile:
    """Everything condition evaluation may depend on."""

    device_width_px: int = 1024
    supported_features: frozenset[tuple[str, str]] = frozenset()
    document_url: str = ""
    client_tokens: frozenset[str] = frozenset()
    ignores_conditional_css: bool = False

    def __post_init__(self) -> None:
        if self.device_width_px <= 0:
            raise ValueError("device_width_px must be positive")


def condition_holds(condition: Condition, profile: DeviceProfile) -> bool:
    if condition is None:
        return True
    if profile.ignores_conditional_css:
        return False
    if isinstance(condition, MediaMaxDeviceWidth):
        return profile.device_width_px <= condition.px
    if isinstance(condition, MediaMinDeviceWidth):
        return profile.device_width_px >= condition.px
    if isinstance(condition, Supports):
        return condition.pairs <= profile.supported_features
    if isinstance(condition, MozDocumentUrlPrefix):
        return profile.document_url.startswith(condition.prefix)
    if isinstance(condition, ProprietaryComment):
        return condition.token in profile.client_tokens
    return False


@dataclass
class CssSheet:
    """Parsed stylesheet: (condition, rule) pairs plus parse warnings.

    Iterates as the rule pairs so callers may treat it as a plain list.
    ``blocks`` records one entry per conditional at-rule block encountered.
    """

    rules: list[tuple[Condition, Rule]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    blocks: list[tuple[Condition, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)


_COMMENT_RE = re.compile(r"/\*.*?\*/", re.DOTALL)
_MEDIA_WIDTH_RE = re.compile(
    r"\(\s*(max|min)-device-width\s*:\s*(\d+)px\s*\)\s*\Z", re.IGNORECASE
)
_SUPPORTS_PAIR_RE = re.compile(r"\(\s*([^:()]+?)\s*:\s*((?:[^()]|\([^()]*\))*?)\s*\)")
_URL_PREFIX_RE = re.compile(r"url-prefix\(\s*[\"']?([^\"')]*)[\"']?\s*\)", re.IGNORECASE)


def parse_selector(text: str) -> Selector | None:
    parts = text.split()
    if not parts:
        return None
    simples: list[Selector] = []
    for token in parts:
        if token == "*":
            simples.append(Universal())
        elif token.startswith("."):
            name = token[1:]
            if not name:
                return None
            simples.append(ClassSel(name))
        elif token.startswith("[") and token.endswith("]"):
            name = token[1:-1].strip()
            if not name:
                return None
            simples.append(AttrPresence(name))
        elif re.fullmatch(r"[a-zA-Z][a-zA-Z0-9-]*", token):
            simples.append(Tag(token.lower()))
        else:
            return None
    sel = simples[0]
    for nxt in simples[1:]:
        sel = Descendant(sel, nxt)
    return sel


def parse_declarations(text: str) -> tuple[Declaration, ...]:
    decls: list[Declaration] = []
    for piece in text.split(";"):
        prop, colon, value = piece.partition(":")
        if not colon:
            continue
        prop = prop.strip().lower()
        value = value.strip()
        important = False
        if value.lower().endswith("!important"):
            important = True
            value = value[: -len("!important")].rstrip()
        elif re.search(r"!\s*important\s*\Z", value, re.IGNORECASE):
            important = True
            value = re.sub(r"!\s*important\s*\Z", "", value, flags=re.IGNORECASE).rstrip()
        if prop:
            decls.append(Declaration(prop, value, important))
    return tuple(decls)


def _parse_condition(prelude: str, warnings: list[str]) -> tuple[Condition, bool]:
    """Map an at-rule prelude to a condition. Returns (condition, ok)."""
    prelude = prelude.strip()
    lowered = prelude.lower()
    if lowered.startswith("@media"):
        m = _MEDIA_WIDTH_RE.search(prelude[len("@media") :].strip())
        if not m:
            warnings.append(f"unsupported media query dropped: {prelude!r}")
            return None, False
        px = int(m.group(2))
        if m.group(1).lower() == "max":
            return MediaMaxDeviceWidth(px), True
        return MediaMinDeviceWidth(px), True
    if lowered.startswith("@supports"):
        body = prelude[len("@supports") :]
        if re.search(r"\b(or|not)\b", body, re.IGNORECASE):
            warnings.append(f"unsupported @supports combinator dropped: {prelude!r}")
            return None, False
        pairs = frozenset(
            (p.strip().lower(), v.strip()) for p, v in _SUPPORTS_PAIR_RE.findall(body)
        )
        if not pairs:
            warnings.append(f"empty @supports condition dropped: {prelude!r}")
            return None, False
        return Supports(pairs), True
    if lowered.startswith("@-moz-document") or lowered.startswith("@document"):
        m = _URL_PREFIX_RE.search(prelude)
        if not m:
            warnings.append(f"unsupported @document condition dropped: {prelude!r}")
            return None, False
        return MozDocumentUrlPrefix(m.group(1)), True
    warnings.append(f"unknown at-rule dropped: {prelude.split('{')[0].strip()!r}")
    return None, False


def _matching_brace(text: str, open_idx: int) -> int:
    depth = 0
    for i in range(open_idx, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return i
    return len(text)


def _parse_flat_rules(text: str, condition: Condition, sheet: CssSheet) -> None:
    i, n = 0, len(text)
    while i < n:
        brace = text.find("{", i)
        if brace == -1:
            break
        selector_text = text[i:brace].strip()
        end = text.find("}", brace + 1)
        if end == -1:
            end = n
        body = text[brace + 1 : end]
        decls = parse_declarations(body)
        for sel_text in selector_text.split(","):
            sel_text = sel_text.strip()
            if not sel_text:
                continue
            sel = parse_selector(sel_text)
            if sel is None:
                sheet.warnings.append(f"unsupported selector dropped: {sel_text!r}")
                continue
            sheet.rules.append((condition, Rule(sel, decls)))
        i = end + 1


def parse_css(text: str) -> CssSheet:
    """Parse a stylesheet into (condition, rule) pairs; never raises."""
    sheet = CssSheet()
    text = _COMMENT_RE.sub("", text or "")
    i, n = 0, len(text)
    while i < n:
        while i < n and text[i] in " \t\r\n":
            i += 1
        if i >= n:
            break
        if text[i] == "@":
            brace = text.find("{", i)
            if brace == -1:
                sheet.warnings.append("at-rule without a block dropped")
                break
            prelude = text[i:brace].strip()
            end = _matching_brace(text, brace)
            condition, ok = _parse_condition(prelude, sheet.warnings)
            if ok:
                sheet.blocks.append((condition, prelude))
                _parse_flat_rules(text[brace + 1 : end], condition, sheet)
            i = end + 1
            continue
        brace = text.find("{", i)
        if brace == -1:
            break
        end = text.find("}", brace + 1)
        if end == -1:
            end = n
        _parse_flat_rules(text[i : end + 1], None, sheet)
        i = end + 1
    return sheet


# -- style collection from a document -------------------------------------------

_CONDITIONAL_COMMENT_RE = re.compile(r"^\s*\[if\s+([a-zA-Z!][a-zA-Z0-9 ]*)\]>", re.IGNORECASE)

# Conditional comment tokens map onto client tokens: [if mso] targets
# Outlook-engine clients, [if IE] the Trident-based desktop mail clients.
_COMMENT_TOKEN_MAP = {"mso": "mso", "ie": "wlm"}


def conditional_comment_token(comment: Comment) -> str | None:
    m = _CONDITIONAL_COMMENT_RE.match(comment.content)
    if not m:
        return None
    return _COMMENT_TOKEN_MAP.get(m.group(1).strip().lower())


def collect_styles(dom: DomNode) -> CssSheet:
    """Gather every stylesheet in a document, in document order.

    ``<style>`` contents contribute their own conditions; styles inside a
    recognized client-conditional comment are wrapped in ProprietaryComment.
    """
    sheet = CssSheet()

    def visit(node: DomNode) -> None:
        if isinstance(node, Comment):
            token = conditional_comment_token(node)
            if token is None:
                return
            payload = node.content
            start = payload.find("]>")
            if start != -1:
                payload = payload[start + 2 :]
            end = payload.find("<![endif]")
            if end != -1:
                payload = payload[:end]
            inner = parse_html(payload)
            for el in iter_elements(inner):
                if el.tag == "style":
                    inner_sheet = parse_css(_element_text(el))
                    sheet.warnings.extend(inner_sheet.warnings)
                    for condition, rule in inner_sheet:
                        if condition is None:
                            sheet.rules.append((ProprietaryComment(token), rule))
                        else:
                            sheet.warnings.append(
                                "at-rule inside a conditional comment dropped"
                            )
            return
        if isinstance(node, Element):
            if node.tag == "style":
                inner_sheet = parse_css(_element_text(node))
                sheet.rules.extend(inner_sheet.rules)
                sheet.warnings.extend(inner_sheet.warnings)
                sheet.blocks.extend(inner_sheet.blocks)
                return
            for child in node.children:
                visit(child)

    visit(dom)
    return sheet


def _element_text(el: Element) -> str:
    return "".join(c.content for c in el.children if isinstance(c, Text))


# -- cascade and visibility ------------------------------------------------------


def _bucket(selector: Selector) -> int:
    if isinstance(selector, Descendant):
        return _bucket(selector.child)
    if isinstance(selector, Universal):
        return 0
    if isinstance(selector, Tag):
        return 1
    return 2  # class or attribute


def selector_matches(selector: Selector, element: Element, ancestors: list[Element]) -> bool:
    if isinstance(selector, Universal):
        return True
    if isinstance(selector, Tag):
        return element.tag == selector.name
    if isinstance(selector, ClassSel):
        return selector.name in element.classes()
    if isinstance(selector, AttrPresence):
        return selector.name in element.attrs
    if isinstance(selector, Descendant):
        if not selector_matches(selector.child, element, ancestors):
            return False
        for idx in range(len(ancestors)):
            if selector_matches(selector.ancestor, ancestors[idx], ancestors[:idx]):
                return True
        return False
    return False


_INLINE_BUCKET = 3


def computed_declarations(
    element: Element,
    ancestors: list[Element],
    active_rules: list[Rule],
) -> dict[str, Declaration]:
    """Resolve the winning declaration per property for one element."""
    winners: dict[str, tuple[tuple[int, int, int], Declaration]] = {}
    order = 0
    for rule_index, rule in enumerate(active_rules):
        if not selector_matches(rule.selector, element, ancestors):
            continue
        for decl in rule.declarations:
            order += 1
            key = (1 if decl.important else 0, _bucket(rule.selector), rule_index * 10000 + order)
            prev = winners.get(decl.property)
            if prev is None or key >= prev[0]:
                winners[decl.property] = (key, decl)
    inline = element.attrs.get("style")
    if inline:
        for decl in parse_declarations(inline):
            order += 1
            key = (1 if decl.important else 0, _INLINE_BUCKET, 10**9 + order)
            prev = winners.get(decl.property)
            if prev is None or key >= prev[0]:
                winners[decl.property] = (key, decl)
    return {prop: decl for prop, (key, decl) in winners.items()}


def _parse_px(value: str) -> float | None:
    m = re.match(r"\s*(-?\d+(?:\.\d+)?)\s*(px)?\s*\Z", value)
    return float(m.group(1)) if m else None


def _parse_number(value: str) -> float | None:
    try:
        return float(value.strip())
    except (TypeError, ValueError):
        return None


def is_zero_polygon(value: str) -> bool:
    m = re.match(r"\s*polygon\((.*)\)\s*\Z", value, re.IGNORECASE | re.DOTALL)
    if not m:
        return False
    coords = re.findall(r"-?\d+(?:\.\d+)?", m.group(1))
    return bool(coords) and all(float(c) == 0.0 for c in coords)


def subtree_hidden(decls: dict[str, Declaration]) -> str | None:
    """Non-overridable whole-subtree hides; returns the reason or None."""
    d = decls.get("display")
    if d is not None and d.value.strip().lower() == "none":
        return "display:none"
    o = decls.get("opacity")
    if o is not None:
        num = _parse_number(o.value)
        if num is not None and num == 0.0:
            return "opacity:0"
    c = decls.get("clip-path")
    if c is not None and is_zero_polygon(c.value):
        return "clip-path zero polygon"
    p = decls.get("position")
    if p is not None and p.value.strip().lower() == "absolute":
        for side in ("top", "left"):
            s = decls.get(side)
            if s is not None:
                px = _parse_px(s.value)
                if px is not None and px < OFFSCREEN_THRESHOLD_PX:
                    return f"position:absolute {side}:{s.value}"
    return None


def hiding_reasons(decls: dict[str, Declaration]) -> list[str]:
    """All text-hiding effects in a declaration set (for detection)."""
    reasons = []
    final = subtree_hidden(decls)
    if final:
        reasons.append(final)
    v = decls.get("visibility")
    if v is not None and v.value.strip().lower() in ("hidden", "collapse"):
        reasons.append("visibility:hidden")
    c = decls.get("color")
    if c is not None and c.value.strip().lower() == "transparent":
        reasons.append("color:transparent")
    f = decls.get("font-size")
    if f is not None:
        px = _parse_px(f.value)
        if px is not None and px == 0.0:
            reasons.append("font-size:0")
    return reasons


@dataclass(frozen=True)
class _Inherited:
    visibility_hidden: bool = False
    color_transparent: bool = False
    font_size_zero: bool = False

    @property
    def shows_text(self) -> bool:
        return not (self.visibility_hidden or self.color_transparent or self.font_size_zero)


def _client_wrapped(dom: DomNode, profile: DeviceProfile) -> DomNode:
    # Emulate client containers that proprietary selectors hook into.
    node = dom
    if "owa" in profile.client_tokens:
        node = Element("div", {"class": "ExternalClass", "owa": ""}, [node])
    if "moz" in profile.client_tokens:
        node = Element("div", {"class": "moz-text-html"}, [node])
    return node


def visible_text(
    dom: DomNode,
    sheets: Iterable[tuple[Condition, Rule]] | CssSheet,
    profile: DeviceProfile,
) -> str:
    """The whitespace-collapsed text a device actually displays."""
    active = [rule for condition, rule in sheets if condition_holds(condition, profile)]
    root = _client_wrapped(dom, profile)
    pieces: list[str] = []

    def visit(node: DomNode, ancestors: list[Element], inherited: _Inherited) -> None:
        if isinstance(node, Comment):
            return
        if isinstance(node, Text):
            if inherited.shows_text:
                pieces.append(node.content)
            return
        if node.tag in NEVER_DISPLAY:
            return
        if node.tag == "br":
            pieces.append(" ")
            return
        decls = computed_declarations(node, ancestors, active)
        if subtree_hidden(decls):
            return
        vis = inherited.visibility_hidden
        v = decls.get("visibility")
        if v is not None:
            vis = v.value.strip().lower() in ("hidden", "collapse")
        transparent = inherited.color_transparent
        c = decls.get("color")
        if c is not None:
            transparent = c.value.strip().lower() == "transparent"
        zero_font = inherited.font_size_zero
        f = decls.get("font-size")
        if f is not None:
            px = _parse_px(f.value)
            zero_font = px is not None and px == 0.0
        state = _Inherited(vis, transparent, zero_font)
        block = node.tag in BLOCK_TAGS
        if block:
            pieces.append(" ")
        ancestors.append(node)
        for child in node.children:
            visit(child, ancestors, state)
        ancestors.pop()
        if block:
            pieces.append(" ")

    visit(root, [], _Inherited())
    return " ".join("".join(pieces).split())


def strip_to_ascii(dom: DomNode) -> str:
    """All text that exists in the document, including CSS-hidden text and
    text inside hiding containers; style/script contents and comment payloads
    are markup, not content, and are dropped."""
    pieces: list[str] = []

    def visit(node: DomNode) -> None:
        if isinstance(node, Comment):
            return
        if isinstance(node, Text):
            pieces.append(node.content)
            return
        if node.tag in RAW_TEXT_TAGS:
            return
        if node.tag == "br":
            pieces.append("\n")
            return
        block = node.tag in BLOCK_TAGS or node.tag in HIDING_CONTAINERS
        if block and pieces and not pieces[-1].endswith("\n"):
            pieces.append("\n")
        for child in node.children:
            visit(child)
        if block and pieces and not pieces[-1].endswith("\n"):
            pieces.append("\n")

    visit(dom)
    return "".join(pieces)


_TAG_TOKEN_RE = re.compile(r"</?[a-zA-Z][^>]*>")


def strip_tags(source: str) -> str:
    """Remove well-formed tag tokens only; everything else stays literal.

    This is how markup looks to a text-only client: tags vanish but comment
    markers and their contents remain visible text.
    """
    return _TAG_TOKEN_RE.sub("", source)
