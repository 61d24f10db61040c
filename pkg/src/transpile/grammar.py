"""PEG grammar loading, parsing and AST primitives shared by the whole pipeline.

A grammar is a JSON document mapping non-terminal names to parsing
expressions.  The parser is a packrat recursive-descent interpreter with
PEG ordered-choice semantics (first matching alternative wins, committed).
Indentation-sensitive languages are handled by a pre-pass that rewrites
the source with synthetic NEWLINE/INDENT/DEDENT terminals.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

# Synthetic layout terminals inserted by the indentation pre-lexer.  They are
# control characters so they can never collide with real program text.
NEWLINE = "\x01"
INDENT = "\x02"
DEDENT = "\x03"
LAYOUT_CHARS = {NEWLINE, INDENT, DEDENT}

_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_WORD_CHAR = re.compile(r"[A-Za-z0-9_]")


class GrammarError(Exception):
    """Base class for grammar-definition problems."""


class SchemaError(GrammarError):
    pass


class DanglingReference(GrammarError):
    pass


class EmptyChoice(GrammarError):
    pass


class LeftRecursion(GrammarError):
    pass


class ParseError(Exception):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


# ---------------------------------------------------------------------------
# Parsing expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Seq:
    children: tuple["PegExpr", ...]


@dataclass(frozen=True)
class OrderedChoice:
    alternatives: tuple["PegExpr", ...]


@dataclass(frozen=True)
class Repeat0:
    child: "PegExpr"


@dataclass(frozen=True)
class Repeat1:
    child: "PegExpr"


@dataclass(frozen=True)
class Opt:
    child: "PegExpr"


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class Pattern:
    regex: str

    def compiled(self) -> re.Pattern:
        return _PATTERN_CACHE.setdefault(self.regex, re.compile(self.regex))


@dataclass(frozen=True)
class NonTerminalRef:
    name: str


PegExpr = Union[Seq, OrderedChoice, Repeat0, Repeat1, Opt, Literal, Pattern, NonTerminalRef]

_PATTERN_CACHE: dict[str, re.Pattern] = {}


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AstNode:
    """Ordered tree of named non-terminals and string-bearing terminals.

    A node is a terminal iff ``children is None``; terminal text may be None
    (a "missing" terminal that the syntax checker materializes later).
    Spans are byte offsets into the originating text; synthesized nodes
    carry no span.
    """

    kind: str
    text: Optional[str] = None
    children: Optional[tuple["AstNode", ...]] = None
    span: Optional[tuple[int, int]] = None

    @property
    def is_terminal(self) -> bool:
        return self.children is None

    def walk(self) -> Iterator["AstNode"]:
        yield self
        if self.children:
            for child in self.children:
                yield from child.walk()

    def to_sexpr(self) -> str:
        if self.is_terminal:
            return repr(self.text) if self.text is not None else "<nostr>"
        inner = " ".join(c.to_sexpr() for c in self.children or ())
        return f"({self.kind} {inner})" if inner else f"({self.kind})"


def terminal(text: Optional[str], span: Optional[tuple[int, int]] = None) -> AstNode:
    return AstNode(kind="", text=text, children=None, span=span)


def node(kind: str, *children: AstNode, span: Optional[tuple[int, int]] = None) -> AstNode:
    return AstNode(kind=kind, text=None, children=tuple(children), span=span)


def ast_equal(a: AstNode, b: AstNode) -> bool:
    """Structural equality ignoring spans."""
    if a.is_terminal != b.is_terminal:
        return False
    if a.is_terminal:
        return a.kind == b.kind and a.text == b.text
    if a.kind != b.kind or len(a.children or ()) != len(b.children or ()):
        return False
    return all(ast_equal(x, y) for x, y in zip(a.children or (), b.children or ()))


# Traversal events --------------------------------------------------------

@dataclass(frozen=True)
class Enter:
    kind: str


@dataclass(frozen=True)
class Token:
    text: Optional[str]


@dataclass(frozen=True)
class Exit:
    pass


TraversalEvent = Union[Enter, Token, Exit]


def preorder(root: AstNode) -> list[TraversalEvent]:
    """Depth-first preorder event stream of an AST.

    Terminal nodes with absent text come out as ``Token(None)``.
    """
    out: list[TraversalEvent] = []

    def visit(n: AstNode) -> None:
        if n.is_terminal:
            out.append(Token(n.text))
            return
        out.append(Enter(n.kind))
        for child in n.children or ():
            visit(child)
        out.append(Exit())

    visit(root)
    return out


# ---------------------------------------------------------------------------
# Grammar definition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrammarDef:
    language_name: str
    start_symbol: str
    productions: dict[str, PegExpr]
    word_tokens: frozenset[str]
    layout_policy: str  # "freeform" | "indent"
    left_assoc: frozenset[str] = field(default_factory=frozenset)
    symbol_prefix: str = ""  # short tag used in rule symbols, e.g. "py"

    def production(self, name: str) -> PegExpr:
        return self.productions[name]


_EXPR_TYPES = {"seq", "choice", "repeat0", "repeat1", "optional", "literal", "pattern", "ref"}


def _parse_expr(obj, where: str) -> PegExpr:
    if isinstance(obj, str):
        # shorthand: bare string means a non-terminal reference
        return NonTerminalRef(obj)
    if not isinstance(obj, dict) or "type" not in obj:
        raise SchemaError(f"expression object with a 'type' field required in {where}")
    etype = obj["type"]
    if etype not in _EXPR_TYPES:
        raise SchemaError(f"unknown expression type {etype!r} in {where}")
    if etype == "seq":
        items = obj.get("items")
        if not isinstance(items, list) or not items:
            raise SchemaError(f"seq needs a non-empty 'items' list in {where}")
        return Seq(tuple(_parse_expr(i, where) for i in items))
    if etype == "choice":
        items = obj.get("items")
        if not isinstance(items, list):
            raise SchemaError(f"choice needs an 'items' list in {where}")
        if not items:
            raise EmptyChoice(f"empty choice in {where}")
        return OrderedChoice(tuple(_parse_expr(i, where) for i in items))
    if etype in ("repeat0", "repeat1", "optional"):
        child = obj.get("item")
        if child is None:
            raise SchemaError(f"{etype} needs an 'item' in {where}")
        parsed = _parse_expr(child, where)
        return {"repeat0": Repeat0, "repeat1": Repeat1, "optional": Opt}[etype](parsed)
    if etype == "literal":
        text = obj.get("text")
        if not isinstance(text, str) or text == "":
            raise SchemaError(f"literal text must be a non-empty string in {where}")
        return Literal(text)
    if etype == "pattern":
        regex = obj.get("regex")
        if not isinstance(regex, str):
            raise SchemaError(f"pattern needs a 'regex' string in {where}")
        try:
            re.compile(regex)
        except re.error as exc:
            raise SchemaError(f"bad regex in {where}: {exc}") from exc
        return Pattern(regex)
    if etype == "ref":
        name = obj.get("name")
        if not isinstance(name, str):
            raise SchemaError(f"ref needs a 'name' in {where}")
        return NonTerminalRef(name)
    raise AssertionError(etype)


def _iter_subexprs(expr: PegExpr) -> Iterator[PegExpr]:
    yield expr
    if isinstance(expr, Seq):
        for c in expr.children:
            yield from _iter_subexprs(c)
    elif isinstance(expr, OrderedChoice):
        for c in expr.alternatives:
            yield from _iter_subexprs(c)
    elif isinstance(expr, (Repeat0, Repeat1, Opt)):
        yield from _iter_subexprs(expr.child)


def _nullable(expr: PegExpr, productions: dict[str, PegExpr], stack: frozenset[str]) -> bool:
    if isinstance(expr, (Repeat0, Opt)):
        return True
    if isinstance(expr, (Literal, Pattern)):
        return False
    if isinstance(expr, Repeat1):
        return _nullable(expr.child, productions, stack)
    if isinstance(expr, Seq):
        return all(_nullable(c, productions, stack) for c in expr.children)
    if isinstance(expr, OrderedChoice):
        return any(_nullable(c, productions, stack) for c in expr.alternatives)
    if isinstance(expr, NonTerminalRef):
        if expr.name in stack:
            return False  # recursion cannot produce emptiness on its own
        return _nullable(productions[expr.name], productions, stack | {expr.name})
    raise AssertionError(expr)


def check_left_recursion(productions: dict[str, PegExpr], skip: frozenset[str]) -> None:
    """Reject productions that can re-enter themselves without consuming input.

    ``skip`` names productions flagged left-associative: their PEG body is the
    iterative form, which is not left-recursive (the recursion appears only in
    the automaton's derived transitions where it is intentional and bounded).
    """

    def leading_refs(expr: PegExpr) -> Iterator[str]:
        if isinstance(expr, NonTerminalRef):
            yield expr.name
        elif isinstance(expr, (Repeat0, Repeat1, Opt)):
            yield from leading_refs(expr.child)
        elif isinstance(expr, OrderedChoice):
            for alt in expr.alternatives:
                yield from leading_refs(alt)
        elif isinstance(expr, Seq):
            for child in expr.children:
                yield from leading_refs(child)
                if not _nullable(child, productions, frozenset()):
                    break

    graph = {
        name: set(leading_refs(body))
        for name, body in productions.items()
    }

    def visit(name: str, path: list[str]) -> None:
        if name in path:
            cycle = path[path.index(name):] + [name]
            raise LeftRecursion("left-recursive productions: " + " -> ".join(cycle))
        for succ in graph.get(name, ()):
            visit(succ, path + [name])

    for name in productions:
        if name not in skip:
            visit(name, [])


_FOLD_SHAPE_MSG = "left-assoc production %r must have body seq(base, repeat0(group))"


def _check_fold_shape(name: str, body: PegExpr) -> None:
    if not (isinstance(body, Seq) and len(body.children) == 2 and isinstance(body.children[1], Repeat0)):
        raise SchemaError(_FOLD_SHAPE_MSG % name)


def load_grammar(document: str) -> GrammarDef:
    """Parse and validate a JSON grammar definition document."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"grammar document is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("grammar document must be a JSON object")
    for fieldname in ("name", "start", "layout", "rules"):
        if fieldname not in data:
            raise SchemaError(f"grammar document missing field {fieldname!r}")
    layout = data["layout"]
    if layout not in ("freeform", "indent"):
        raise SchemaError("layout must be 'freeform' or 'indent'")
    rules = data["rules"]
    if not isinstance(rules, dict) or not rules:
        raise SchemaError("'rules' must be a non-empty object")
    productions = {name: _parse_expr(body, f"rule {name!r}") for name, body in rules.items()}
    start = data["start"]
    if start not in productions:
        raise DanglingReference(f"start symbol {start!r} has no production")
    for name, body in productions.items():
        for sub in _iter_subexprs(body):
            if isinstance(sub, NonTerminalRef) and sub.name not in productions:
                raise DanglingReference(f"rule {name!r} references undefined {sub.name!r}")
    left_assoc = frozenset(data.get("assoc_left", []))
    for name in left_assoc:
        if name not in productions:
            raise DanglingReference(f"assoc_left names undefined rule {name!r}")
        _check_fold_shape(name, productions[name])
    check_left_recursion(productions, skip=left_assoc)
    word_tokens = frozenset(data.get("word_tokens", []))
    return GrammarDef(
        language_name=data["name"],
        start_symbol=start,
        productions=productions,
        word_tokens=word_tokens,
        layout_policy=layout,
        left_assoc=left_assoc,
        symbol_prefix=data.get("symbol_prefix", data["name"]),
    )


# ---------------------------------------------------------------------------
# Indentation pre-lexer
# ---------------------------------------------------------------------------

def indent_prelex(text: str) -> tuple[str, list[int]]:
    """Rewrite indentation-sensitive source into sentinel-terminal form.

    Returns the transformed text plus a map from transformed offsets back
    to offsets in the original text (one extra entry for end-of-text).
    Comments are stripped; newlines inside brackets act as plain spaces.
    """
    out: list[str] = []
    omap: list[int] = []

    def emit(chunk: str, anchor: int, literal_positions: bool = False) -> None:
        for i, ch in enumerate(chunk):
            out.append(ch)
            omap.append(anchor + i if literal_positions else anchor)

    indent_stack = [0]
    depth = 0
    offset = 0
    for raw_line in text.splitlines(keepends=True):
        line = raw_line.rstrip("\r\n")
        # strip comments, respecting string literals
        body_end = len(line)
        quote = None
        skip_next = False
        for i, ch in enumerate(line):
            if skip_next:
                skip_next = False
                continue
            if quote:
                if ch == "\\":
                    skip_next = True
                elif ch == quote:
                    quote = None
            elif ch in "'\"":
                quote = ch
            elif ch == "#":
                body_end = i
                break
        content = line[:body_end].rstrip()
        if depth > 0:
            stripped = content.lstrip()
            lead = len(content) - len(stripped)
            if stripped:
                emit(" ", offset)
                emit(stripped, offset + lead, literal_positions=True)
                depth += _bracket_delta(stripped)
                if depth == 0:
                    emit(NEWLINE, offset + len(content))
            offset += len(raw_line)
            continue
        stripped = content.lstrip()
        if not stripped:
            offset += len(raw_line)
            continue
        ind = len(content) - len(stripped)
        if "\t" in content[:ind]:
            raise ParseError("tab characters in indentation are not supported", offset)
        if ind > indent_stack[-1]:
            indent_stack.append(ind)
            emit(INDENT, offset)
        else:
            while ind < indent_stack[-1]:
                indent_stack.pop()
                emit(DEDENT, offset)
            if ind != indent_stack[-1]:
                raise ParseError("inconsistent dedent", offset)
        emit(stripped, offset + ind, literal_positions=True)
        depth += _bracket_delta(stripped)
        if depth == 0:
            emit(NEWLINE, offset + len(content))
        offset += len(raw_line)
    if depth != 0:
        raise ParseError("unbalanced brackets at end of input", len(text))
    while indent_stack[-1] > 0:
        indent_stack.pop()
        emit(DEDENT, len(text))
    omap.append(len(text))
    return "".join(out), omap


def _bracket_delta(line: str) -> int:
    delta = 0
    quote = None
    skip = False
    for ch in line:
        if skip:
            skip = False
            continue
        if quote:
            if ch == "\\":
                skip = True
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch in "([{":
            delta += 1
        elif ch in ")]}":
            delta -= 1
    return delta


# ---------------------------------------------------------------------------
# Packrat PEG interpreter
# ---------------------------------------------------------------------------

_FAIL = object()


class _Parser:
    def __init__(self, grammar: GrammarDef, text: str, omap: Optional[list[int]]):
        self.grammar = grammar
        self.text = text
        self.omap = omap
        self.memo: dict[tuple[str, int, bool], tuple[object, int]] = {}
        self.furthest = 0
        self.skip_chars = " \t" if grammar.layout_policy == "indent" else " \t\r\n"

    def orig_offset(self, pos: int) -> int:
        if self.omap is None:
            return pos
        return self.omap[min(pos, len(self.omap) - 1)]

    def span(self, start: int, end: int) -> tuple[int, int]:
        if self.omap is None:
            return (start, end)
        if end <= start:
            return (self.orig_offset(start), self.orig_offset(start))
        return (self.omap[start], self.omap[end - 1] + 1)

    def skip_ws(self, pos: int) -> int:
        text = self.text
        while pos < len(text) and text[pos] in self.skip_chars:
            pos += 1
        return pos

    def fail(self, pos: int):
        if pos > self.furthest:
            self.furthest = pos
        return _FAIL, pos

    def match_production(self, name: str, pos: int, collapse: bool):
        key = (name, pos, collapse)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        body = self.grammar.productions[name]
        if name in self.grammar.left_assoc:
            result = self._match_fold(name, body, pos, collapse)
        else:
            children, newpos = self.match_expr(body, pos, collapse)
            if children is _FAIL:
                result = (_FAIL, pos)
            else:
                result = (self._make_node(name, children, pos, newpos, collapse), newpos)
        self.memo[key] = result
        return result

    def _make_node(self, name: str, children: list[AstNode], start: int, end: int, collapse: bool):
        if collapse and len(children) == 1 and not children[0].is_terminal:
            return children[0]
        kids = tuple(children)
        if kids:
            span = (kids[0].span[0], kids[-1].span[1])
        else:
            span = self.span(start, start)
        return AstNode(kind=name, children=kids, span=span)

    def _match_fold(self, name: str, body: Seq, pos: int, collapse: bool):
        base_expr, repeat = body.children
        base_children, pos2 = self.match_expr(base_expr, pos, collapse)
        if base_children is _FAIL:
            return _FAIL, pos
        if len(base_children) != 1:
            raise SchemaError(_FOLD_SHAPE_MSG % name)
        acc = base_children[0]
        while True:
            group, newpos = self.match_expr(repeat.child, pos2, collapse)
            if group is _FAIL or newpos == pos2:
                break
            acc = AstNode(kind=name, children=(acc, *group), span=(acc.span[0], group[-1].span[1]))
            pos2 = newpos
        return acc if collapse or acc.kind == name else AstNode(kind=name, children=(acc,), span=acc.span), pos2

    def match_expr(self, expr: PegExpr, pos: int, collapse: bool):
        if isinstance(expr, Literal):
            return self._match_literal(expr.text, pos)
        if isinstance(expr, Pattern):
            return self._match_pattern(expr, pos)
        if isinstance(expr, NonTerminalRef):
            result, newpos = self.match_production(expr.name, pos, collapse)
            if result is _FAIL:
                return self.fail(pos)
            return [result], newpos
        if isinstance(expr, Seq):
            children: list[AstNode] = []
            cur = pos
            for sub in expr.children:
                got, cur = self.match_expr(sub, cur, collapse)
                if got is _FAIL:
                    return self.fail(pos)
                children.extend(got)
            return children, cur
        if isinstance(expr, OrderedChoice):
            for alt in expr.alternatives:
                got, newpos = self.match_expr(alt, pos, collapse)
                if got is not _FAIL:
                    return got, newpos
            return self.fail(pos)
        if isinstance(expr, Repeat0) or isinstance(expr, Repeat1):
            children = []
            cur = pos
            count = 0
            while True:
                got, newpos = self.match_expr(expr.child, cur, collapse)
                if got is _FAIL or newpos == cur:
                    break
                children.extend(got)
                cur = newpos
                count += 1
            if isinstance(expr, Repeat1) and count == 0:
                return self.fail(pos)
            return children, cur
        if isinstance(expr, Opt):
            got, newpos = self.match_expr(expr.child, pos, collapse)
            if got is _FAIL:
                return [], pos
            return got, newpos
        raise AssertionError(expr)

    def _match_literal(self, want: str, pos: int):
        pos = self.skip_ws(pos)
        end = pos + len(want)
        if self.text[pos:end] != want:
            return self.fail(pos)
        if _WORD_RE.match(want) and end < len(self.text) and _WORD_CHAR.match(self.text[end]):
            return self.fail(pos)
        if want in LAYOUT_CHARS:
            # synthetic layout terminals occupy no source text
            anchor = self.orig_offset(pos)
            return [terminal(want, (anchor, anchor))], end
        return [terminal(want, self.span(pos, end))], end

    def _match_pattern(self, expr: Pattern, pos: int):
        pos = self.skip_ws(pos)
        m = expr.compiled().match(self.text, pos)
        if not m or m.end() == pos:
            return self.fail(pos)
        got = m.group(0)
        if got in self.grammar.word_tokens:
            return self.fail(pos)
        return [terminal(got, self.span(pos, m.end()))], m.end()


def parse_source(
    grammar: GrammarDef,
    text: str,
    start: Optional[str] = None,
    collapse: bool = True,
) -> AstNode:
    """Parse program text into an AST rooted at the grammar's start symbol.

    ``start`` overrides the entry production (used for snippet extraction),
    ``collapse=False`` keeps the full parse tree including single-child
    wrapper chains.
    """
    start_symbol = start or grammar.start_symbol
    if start_symbol not in grammar.productions:
        raise DanglingReference(f"unknown start symbol {start_symbol!r}")
    omap = None
    ptext = text
    if grammar.layout_policy == "indent":
        ptext, omap = indent_prelex(text)
    parser = _Parser(grammar, ptext, omap)
    result, pos = parser.match_production(start_symbol, 0, collapse)
    if result is not _FAIL:
        pos = parser.skip_ws(pos)
    if result is _FAIL or pos != len(ptext):
        offset = parser.orig_offset(max(parser.furthest, pos if result is not _FAIL else 0))
        raise ParseError(f"cannot parse {grammar.language_name} input", offset)
    root: AstNode = result
    if root.kind != start_symbol or root.is_terminal:
        root = AstNode(kind=start_symbol, children=(root,), span=root.span)
    return root


def line_of_offset(text: str, offset: int) -> int:
    """1-based line number containing a byte offset."""
    return text.count("\n", 0, max(0, min(offset, len(text)))) + 1
