"""Translation-rule DSL: parsing, serialization, matching and expansion.

A rule pairs a multi-level source pattern with a target pattern.  Captures
(``.`` one non-terminal subtree, ``*`` a contiguous child subsequence) bind
source fragments; References (``.N``/``*N``) re-emit them as pending
translation slots; template matchers (``_str_``, ``_val_``, ``_nt_``) bind
terminal strings or node kinds so one rule can cover an operator family.

Concrete syntax is parenthesized, one rule per ``(MatchExpand ...)`` form,
with ``#`` comments.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Union

from .grammar import AstNode, terminal


class DslSyntaxError(Exception):
    pass


class DanglingReference(Exception):
    pass


class DanglingTemplateIndex(Exception):
    pass


# ---------------------------------------------------------------------------
# Pattern node types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NTMatcher:
    symbol: str  # "lang.kind"
    children: tuple["Matcher", ...]

    @property
    def kind(self) -> str:
        return self.symbol.split(".", 1)[-1]


@dataclass(frozen=True)
class TMatcher:
    op: str  # "str" | "val" | "nostr"
    text: Optional[str] = None


@dataclass(frozen=True)
class NTMatcherTpl:
    children: tuple["Matcher", ...]


@dataclass(frozen=True)
class TMatcherTpl:
    op: str  # "str" | "val"


@dataclass(frozen=True)
class Capture:
    mode: str  # "." | "*"


Matcher = Union[NTMatcher, TMatcher, NTMatcherTpl, TMatcherTpl, Capture]


@dataclass(frozen=True)
class NTExpander:
    symbol: str
    children: tuple["Expander", ...]

    @property
    def kind(self) -> str:
        return self.symbol.split(".", 1)[-1]


@dataclass(frozen=True)
class TExpander:
    op: str  # "str" | "val" | "nostr"
    text: Optional[str] = None


@dataclass(frozen=True)
class NTExpanderTpl:
    index: int
    children: tuple["Expander", ...]


@dataclass(frozen=True)
class TExpanderTpl:
    op: str  # "str" | "val"
    index: int


@dataclass(frozen=True)
class Reference:
    mode: str  # "." | "*"
    index: int


Expander = Union[NTExpander, TExpander, NTExpanderTpl, TExpanderTpl, Reference]


@dataclass(frozen=True)
class Rule:
    src_pattern: Matcher
    trg_pattern: Expander
    provenance: str = "base"  # base | inferred | hand_edited
    source_order: int = 0
    rule_id: str = ""

    def with_order(self, order: int) -> "Rule":
        return Rule(self.src_pattern, self.trg_pattern, self.provenance, order, self.rule_id)


@dataclass
class Ruleset:
    name: str
    rules: list[Rule] = field(default_factory=list)

    def by_id(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise KeyError(rule_id)


@dataclass(frozen=True)
class TplBinding:
    op: str  # str | val | nt
    raw: Optional[str] = None       # exact terminal text (str)
    value: Optional[str] = None     # unquoted value (val)
    quoted: bool = False            # whether the val binding carried quotes
    nt_kind: Optional[str] = None   # bound node kind (nt)


@dataclass(frozen=True)
class Bindings:
    captures: tuple[Union[AstNode, tuple[AstNode, ...]], ...] = ()
    templates: tuple[TplBinding, ...] = ()

    def capture(self, index: int):
        return self.captures[index - 1]

    def template(self, index: int) -> TplBinding:
        return self.templates[index - 1]


# ---------------------------------------------------------------------------
# String helpers
# ---------------------------------------------------------------------------

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "'": "'", "0": "\0"}


def unquote(text: str) -> tuple[str, bool]:
    """Strip one layer of matching quotes, unescaping; returns (value, was_quoted)."""
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        body = text[1:-1]
        out = []
        i = 0
        while i < len(body):
            ch = body[i]
            if ch == "\\" and i + 1 < len(body):
                esc = body[i + 1]
                if esc == "u" and i + 5 < len(body) + 1:
                    out.append(chr(int(body[i + 2:i + 6], 16)))
                    i += 6
                    continue
                out.append(_ESCAPES.get(esc, esc))
                i += 2
            else:
                out.append(ch)
                i += 1
        return "".join(out), True
    return text, False


def requote(value: str) -> str:
    out = []
    for ch in value:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 32:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


# ---------------------------------------------------------------------------
# DSL parsing
# ---------------------------------------------------------------------------

def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            i += 1
        elif ch == "#":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == '"':
            j = i + 1
            buf = ['"']
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j:j + 2])
                    j += 2
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise DslSyntaxError("unterminated string literal")
            buf.append('"')
            tokens.append("".join(buf))
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in ' \t\r\n()"#':
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def _parse_sexprs(tokens: list[str]):
    pos = 0

    def parse_one():
        nonlocal pos
        if pos >= len(tokens):
            raise DslSyntaxError("unexpected end of input")
        tok = tokens[pos]
        if tok == "(":
            pos += 1
            items = []
            while pos < len(tokens) and tokens[pos] != ")":
                items.append(parse_one())
            if pos >= len(tokens):
                raise DslSyntaxError("missing closing parenthesis")
            pos += 1
            return items
        if tok == ")":
            raise DslSyntaxError("unexpected ')'")
        pos += 1
        return tok

    forms = []
    while pos < len(tokens):
        forms.append(parse_one())
    return forms


def _atom_text(tok: str) -> str:
    if tok.startswith('"'):
        value, _ = unquote(tok)
        return value
    return tok


_TPL_M = {"_str_": "str", "_val_": "val"}


def _parse_matcher(form) -> Matcher:
    if isinstance(form, str):
        if form == ".":
            return Capture(".")
        if form == "*":
            return Capture("*")
        if form in _TPL_M:
            return TMatcherTpl(_TPL_M[form])
        raise DslSyntaxError(f"unexpected matcher atom {form!r}")
    if not form:
        raise DslSyntaxError("empty matcher form")
    head = form[0]
    if not isinstance(head, str):
        raise DslSyntaxError("matcher form must start with a symbol")
    if head == "str":
        if len(form) != 2 or not isinstance(form[1], str):
            raise DslSyntaxError("(str S) takes one string")
        return TMatcher("str", _atom_text(form[1]))
    if head == "val":
        if len(form) != 2 or not isinstance(form[1], str):
            raise DslSyntaxError("(val S) takes one string")
        return TMatcher("val", _atom_text(form[1]))
    if head == "nostr":
        return TMatcher("nostr")
    if head == "_nt_":
        return NTMatcherTpl(tuple(_parse_matcher(f) for f in form[1:]))
    if "." in head:
        return NTMatcher(head, tuple(_parse_matcher(f) for f in form[1:]))
    raise DslSyntaxError(f"unknown matcher head {head!r}")


def _parse_expander(form) -> Expander:
    if isinstance(form, str):
        if form.startswith(".") and form[1:].isdigit():
            return Reference(".", int(form[1:]))
        if form.startswith("*") and form[1:].isdigit():
            return Reference("*", int(form[1:]))
        if form.startswith("_str") and form.endswith("_") and form[4:-1].isdigit():
            return TExpanderTpl("str", int(form[4:-1]))
        if form.startswith("_val") and form.endswith("_") and form[4:-1].isdigit():
            return TExpanderTpl("val", int(form[4:-1]))
        raise DslSyntaxError(f"unexpected expander atom {form!r}")
    if not form:
        raise DslSyntaxError("empty expander form")
    head = form[0]
    if not isinstance(head, str):
        raise DslSyntaxError("expander form must start with a symbol")
    if head == "str":
        return TExpander("str", _atom_text(form[1]))
    if head == "val":
        return TExpander("val", _atom_text(form[1]))
    if head == "nostr":
        return TExpander("nostr")
    if head.startswith("_nt") and head.endswith("_") and head[3:-1].isdigit():
        return NTExpanderTpl(int(head[3:-1]), tuple(_parse_expander(f) for f in form[1:]))
    if "." in head:
        return NTExpander(head, tuple(_parse_expander(f) for f in form[1:]))
    raise DslSyntaxError(f"unknown expander head {head!r}")


def _collect_matchers(m: Matcher, captures: list[Capture], templates: list):
    if isinstance(m, Capture):
        captures.append(m)
    elif isinstance(m, TMatcherTpl):
        templates.append(m)
    elif isinstance(m, NTMatcherTpl):
        templates.append(m)
        for c in m.children:
            _collect_matchers(c, captures, templates)
    elif isinstance(m, NTMatcher):
        for c in m.children:
            _collect_matchers(c, captures, templates)


def _collect_expanders(e: Expander, refs: list[Reference], tpls: list):
    if isinstance(e, Reference):
        refs.append(e)
    elif isinstance(e, TExpanderTpl):
        tpls.append(e)
    elif isinstance(e, NTExpanderTpl):
        tpls.append(e)
        for c in e.children:
            _collect_expanders(c, refs, tpls)
    elif isinstance(e, NTExpander):
        for c in e.children:
            _collect_expanders(c, refs, tpls)


def validate_rule(rule: Rule) -> None:
    if not isinstance(rule.src_pattern, (NTMatcher, NTMatcherTpl)):
        raise DslSyntaxError("source pattern root must be a non-terminal matcher")
    captures: list[Capture] = []
    templates: list = []
    _collect_matchers(rule.src_pattern, captures, templates)
    for caps_parent in _child_lists(rule.src_pattern):
        stars = [c for c in caps_parent if isinstance(c, Capture) and c.mode == "*"]
        if len(stars) > 1:
            raise DslSyntaxError("at most one '*' capture per child list")
    refs: list[Reference] = []
    tpl_expanders: list = []
    _collect_expanders(rule.trg_pattern, refs, tpl_expanders)
    for ref in refs:
        if not (1 <= ref.index <= len(captures)):
            raise DanglingReference(f"reference {ref.mode}{ref.index} has no capture")
        if captures[ref.index - 1].mode != ref.mode:
            raise DanglingReference(
                f"reference {ref.mode}{ref.index} does not match capture mode "
                f"{captures[ref.index - 1].mode!r}"
            )
    for tpl in tpl_expanders:
        want = "nt" if isinstance(tpl, NTExpanderTpl) else tpl.op
        idx = tpl.index
        if not (1 <= idx <= len(templates)):
            raise DanglingTemplateIndex(f"template expander index {idx} has no matcher")
        matcher = templates[idx - 1]
        have = "nt" if isinstance(matcher, NTMatcherTpl) else matcher.op
        if want != have:
            raise DanglingTemplateIndex(
                f"template expander {idx} is {want!r} but matcher {idx} is {have!r}"
            )


def _child_lists(m: Matcher):
    if isinstance(m, (NTMatcher, NTMatcherTpl)):
        yield m.children
        for c in m.children:
            yield from _child_lists(c)


def count_captures(rule: Rule) -> int:
    captures: list[Capture] = []
    _collect_matchers(rule.src_pattern, captures, [])
    return len(captures)


def count_templates(rule: Rule) -> int:
    templates: list = []
    _collect_matchers(rule.src_pattern, [], templates)
    return len(templates)


def parse_ruleset(text: str, name: str = "ruleset") -> Ruleset:
    forms = _parse_sexprs(_tokenize(text))
    rules: list[Rule] = []
    for order, form in enumerate(forms):
        if not (isinstance(form, list) and form and form[0] == "MatchExpand" and len(form) == 3):
            raise DslSyntaxError("top-level form must be (MatchExpand SrcPattern TrgPattern)")
        src_form, trg_form = form[1], form[2]
        if not (isinstance(src_form, list) and src_form and src_form[0] == "fragment"):
            raise DslSyntaxError("source pattern must be (fragment ...)")
        if not (isinstance(trg_form, list) and trg_form and trg_form[0] == "fragment"):
            raise DslSyntaxError("target pattern must be (fragment ...)")
        if len(src_form) != 2 or len(trg_form) != 2:
            raise DslSyntaxError("fragment takes exactly one root matcher")
        src = _parse_matcher(src_form[1])
        trg = _parse_expander(trg_form[1])
        rule = Rule(src, trg, provenance="base", source_order=order)
        validate_rule(rule)
        rules.append(_with_id(rule))
    seen = set()
    for r in rules:
        if r.rule_id in seen:
            raise DslSyntaxError(f"duplicate rule {r.rule_id} in ruleset {name!r}")
        seen.add(r.rule_id)
    return Ruleset(name=name, rules=rules)


def _with_id(rule: Rule) -> Rule:
    body = serialize_rule(rule)
    digest = hashlib.sha1(body.encode()).hexdigest()[:12]
    return Rule(rule.src_pattern, rule.trg_pattern, rule.provenance, rule.source_order, digest)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _ser_string(text: str) -> str:
    out = []
    for ch in text:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 32:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def serialize_matcher(m: Matcher) -> str:
    if isinstance(m, Capture):
        return m.mode
    if isinstance(m, TMatcherTpl):
        return f"_{m.op}_"
    if isinstance(m, TMatcher):
        if m.op == "nostr":
            return "(nostr)"
        return f"({m.op} {_ser_string(m.text or '')})"
    if isinstance(m, NTMatcherTpl):
        inner = " ".join(serialize_matcher(c) for c in m.children)
        return f"(_nt_ {inner})" if inner else "(_nt_)"
    if isinstance(m, NTMatcher):
        inner = " ".join(serialize_matcher(c) for c in m.children)
        return f"({m.symbol} {inner})" if inner else f"({m.symbol})"
    raise AssertionError(m)


def serialize_expander(e: Expander) -> str:
    if isinstance(e, Reference):
        return f"{e.mode}{e.index}"
    if isinstance(e, TExpanderTpl):
        return f"_{e.op}{e.index}_"
    if isinstance(e, TExpander):
        if e.op == "nostr":
            return "(nostr)"
        return f"({e.op} {_ser_string(e.text or '')})"
    if isinstance(e, NTExpanderTpl):
        inner = " ".join(serialize_expander(c) for c in e.children)
        return f"(_nt{e.index}_ {inner})" if inner else f"(_nt{e.index}_)"
    if isinstance(e, NTExpander):
        inner = " ".join(serialize_expander(c) for c in e.children)
        return f"({e.symbol} {inner})" if inner else f"({e.symbol})"
    raise AssertionError(e)


def serialize_rule(rule: Rule) -> str:
    return (
        f"(MatchExpand (fragment {serialize_matcher(rule.src_pattern)}) "
        f"(fragment {serialize_expander(rule.trg_pattern)}))"
    )


def serialize_ruleset(rs: Ruleset) -> str:
    lines = [f"# ruleset: {rs.name}"]
    for rule in rs.rules:
        if rule.provenance != "base":
            lines.append(f"# provenance: {rule.provenance}")
        lines.append(serialize_rule(rule))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------

class _NoMatch(Exception):
    pass


def match_rule(rule: Rule, node: AstNode) -> Optional[Bindings]:
    captures: list = []
    templates: list[TplBinding] = []
    try:
        _match(rule.src_pattern, node, captures, templates)
    except _NoMatch:
        return None
    return Bindings(tuple(captures), tuple(templates))


def _match(m: Matcher, node: AstNode, captures: list, templates: list) -> None:
    if isinstance(m, NTMatcher):
        if node.is_terminal or node.kind != m.kind:
            raise _NoMatch
        _match_children(m.children, node.children or (), captures, templates)
        return
    if isinstance(m, NTMatcherTpl):
        if node.is_terminal:
            raise _NoMatch
        templates.append(TplBinding(op="nt", nt_kind=node.kind))
        _match_children(m.children, node.children or (), captures, templates)
        return
    if isinstance(m, TMatcher):
        if not node.is_terminal:
            raise _NoMatch
        if m.op == "nostr":
            if node.text is not None:
                raise _NoMatch
            return
        if node.text is None:
            raise _NoMatch
        if m.op == "str":
            if node.text != m.text:
                raise _NoMatch
            return
        value, _ = unquote(node.text)
        if value != m.text:
            raise _NoMatch
        return
    if isinstance(m, TMatcherTpl):
        if not node.is_terminal or node.text is None:
            raise _NoMatch
        if m.op == "str":
            templates.append(TplBinding(op="str", raw=node.text))
        else:
            value, quoted = unquote(node.text)
            templates.append(TplBinding(op="val", value=value, quoted=quoted))
        return
    if isinstance(m, Capture):
        # "." binds exactly one non-terminal subtree; "*" is handled by the
        # enclosing child list
        if m.mode != "." or node.is_terminal:
            raise _NoMatch
        captures.append(node)
        return
    raise AssertionError(m)


def _match_children(matchers: tuple[Matcher, ...], children: tuple[AstNode, ...],
                    captures: list, templates: list) -> None:
    star_at = next(
        (i for i, m in enumerate(matchers) if isinstance(m, Capture) and m.mode == "*"),
        None,
    )
    if star_at is None:
        if len(matchers) != len(children):
            raise _NoMatch
        for m, c in zip(matchers, children):
            _match(m, c, captures, templates)
        return
    prefix = matchers[:star_at]
    suffix = matchers[star_at + 1:]
    if len(children) < len(prefix) + len(suffix):
        raise _NoMatch
    for m, c in zip(prefix, children[:len(prefix)]):
        _match(m, c, captures, templates)
    middle = children[len(prefix):len(children) - len(suffix)]
    captures.append(tuple(middle))
    tail = children[len(children) - len(suffix):]
    for m, c in zip(suffix, tail):
        _match(m, c, captures, templates)


# ---------------------------------------------------------------------------
# Expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefSlot:
    """A pending translation task over one source subtree."""
    source: AstNode


Fragment = Union[AstNode, RefSlot, "FragmentNode"]


@dataclass(frozen=True)
class FragmentNode:
    kind: str
    children: tuple[Fragment, ...]


def expand_rule(rule: Rule, bindings: Bindings) -> Fragment:
    return _expand(rule.trg_pattern, bindings)


def _expand(e: Expander, b: Bindings) -> Fragment:
    if isinstance(e, Reference):
        bound = b.capture(e.index)
        if e.mode == ".":
            return RefSlot(bound)
        raise AssertionError("sequence references expand inside child lists")
    if isinstance(e, TExpander):
        if e.op == "nostr":
            return terminal(None)
        if e.op == "val":
            return terminal(requote(e.text or ""))
        return terminal(e.text)
    if isinstance(e, TExpanderTpl):
        tpl = b.template(e.index)
        if e.op == "str":
            return terminal(tpl.raw)
        text = requote(tpl.value or "") if tpl.quoted else (tpl.value or "")
        return terminal(text)
    if isinstance(e, (NTExpander, NTExpanderTpl)):
        kind = b.template(e.index).nt_kind if isinstance(e, NTExpanderTpl) else e.kind
        children: list[Fragment] = []
        for child in e.children:
            if isinstance(child, Reference) and child.mode == "*":
                for element in b.capture(child.index):
                    if element.is_terminal:
                        children.append(element)
                    else:
                        children.append(RefSlot(element))
            else:
                children.append(_expand(child, b))
        return FragmentNode(kind=kind or "", children=tuple(children))
    raise AssertionError(e)


# ---------------------------------------------------------------------------
# Specificity
# ---------------------------------------------------------------------------

def _concreteness(m: Matcher) -> tuple[int, int]:
    """(concrete matcher count, wildcard count) over a pattern."""
    if isinstance(m, NTMatcher):
        c, w = 1, 0
    elif isinstance(m, TMatcher):
        c, w = 1, 0
    elif isinstance(m, (NTMatcherTpl, TMatcherTpl)):
        c, w = 0, 1
    else:  # Capture
        return 0, 1
    if isinstance(m, (NTMatcher, NTMatcherTpl)):
        for child in m.children:
            cc, cw = _concreteness(child)
            c += cc
            w += cw
    return c, w


def specificity(rule: Rule) -> tuple[int, int, int]:
    """Ordering key: lower sorts first, more specific rules order earlier.

    Rules with more concrete matchers (closer to terminals) come first,
    wildcard-heavy rules later; same-pattern rules keep their file order.
    """
    concrete, wildcards = _concreteness(rule.src_pattern)
    return (-concrete, wildcards, rule.source_order)
