"""Meta pretty-printer parameterized by a target grammar.

Renders (reconstructed) parse trees back to program text such that
re-parsing the output yields a structurally identical tree.  Layout is
driven by a small style table; indentation-sensitive grammars are printed
by interpreting the synthetic NEWLINE/INDENT/DEDENT terminals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .grammar import DEDENT, INDENT, NEWLINE, AstNode, GrammarDef


class UnprintableNode(Exception):
    pass


class EmptySource(Exception):
    pass


@dataclass(frozen=True)
class PrintStyle:
    indent_unit: str = "    "
    # column budget; advisory only (width-optimal layout is a non-goal)
    max_line: Optional[int] = None
    # node kinds that force a line break after their last token
    newline_after: frozenset[str] = frozenset()
    # override for the spacing decision between adjacent tokens; returning
    # None falls back to the built-in rules
    space_between: Optional[Callable[[str, str], Optional[str]]] = None
    # node kinds whose "{" ... "}" is kept inline rather than opening a block
    inline_brace_kinds: frozenset[str] = frozenset({"object_lit", "dict_lit"})
    # parent kinds in which punctuation operators get surrounding spaces
    spaced_op_parents: frozenset[str] = frozenset({
        "arith", "term", "comparison", "power", "or_expr", "and_expr",
        "assignment", "aug_assignment", "declaration", "assign_stmt",
        "aug_assign_stmt", "step_assign", "expression",
    })
    # words that take a space before a following "("
    keyword_words: frozenset[str] = frozenset({
        "if", "elif", "while", "for", "return", "in", "of", "not", "and",
        "or", "else", "let", "function", "def",
    })


DEFAULT_STYLE = PrintStyle()

_NO_SPACE_AFTER = {"(", "[", ".", "{"}
_WORDISH = set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_$'\"")


@dataclass
class _Tok:
    text: str
    parent: str
    start: int = 0
    end: int = 0
    index: int = 0
    newline_after: bool = False


def _flatten(tree: AstNode, grammar: GrammarDef, out: list[_Tok], parent: str,
             style: PrintStyle) -> None:
    if tree.is_terminal:
        if tree.text is None:
            raise UnprintableNode("terminal with absent text cannot be printed")
        out.append(_Tok(text=tree.text, parent=parent))
        return
    if tree.kind not in grammar.productions:
        raise UnprintableNode(f"node kind {tree.kind!r} is not in grammar {grammar.language_name!r}")
    for child in tree.children or ():
        _flatten(child, grammar, out, tree.kind, style)
    if tree.kind in style.newline_after and out:
        out[-1].newline_after = True


def _separator(prev: _Tok, nxt: _Tok, style: PrintStyle) -> str:
    a, b = prev.text, nxt.text
    if style.space_between is not None:
        override = style.space_between(a, b)
        if override is not None:
            return override
    if a in _NO_SPACE_AFTER:
        return ""
    if a == "!" or (a == "-" and prev.parent == "factor"):
        return ""
    if b == "(":
        # call parenthesis hugs the callee, keywords and operators take a space
        if a[-1:] in _WORDISH and a not in style.keyword_words:
            return ""
        if a in (")", "]"):
            return ""
        return " "
    if b == "[":
        return "" if nxt.parent == "index_suffix" else " "
    if b in (";", ",", ")", "]", "}"):
        return ""
    if b == ":":
        return " " if nxt.parent == "expression" else ""
    if b == ".":
        return ""
    if b in ("++", "--"):
        return ""
    return " "


def print_tokens(tree: AstNode, grammar: GrammarDef, style: PrintStyle = DEFAULT_STYLE) -> tuple[str, list[_Tok]]:
    """Render a tree and return the text plus positioned tokens in order.

    The token list includes an entry for every terminal of the tree, layout
    sentinels excluded; ``index`` is the terminal's preorder position.
    """
    raw: list[_Tok] = []
    _flatten(tree, grammar, raw, tree.kind, style)
    out: list[str] = []
    placed: list[_Tok] = []
    level = 0
    pending_newlines = 0
    offset = 0
    prev: Optional[_Tok] = None

    def emit(text: str) -> None:
        nonlocal offset
        out.append(text)
        offset += len(text)

    for index, tok in enumerate(raw):
        tok.index = index
        if tok.text == NEWLINE:
            pending_newlines = max(pending_newlines, 1)
            prev = None
            continue
        if tok.text == INDENT:
            level += 1
            continue
        if tok.text == DEDENT:
            level -= 1
            continue
        if tok.text == "{" and tok.parent not in style.inline_brace_kinds:
            sep = _separator(prev, tok, style) if prev and not pending_newlines else ""
            if pending_newlines:
                emit("\n" * pending_newlines + style.indent_unit * level)
            elif sep:
                emit(sep)
            tok.start = offset
            emit("{")
            tok.end = offset
            placed.append(tok)
            level += 1
            pending_newlines = 1
            prev = None
            continue
        if tok.text == "}" and tok.parent not in style.inline_brace_kinds:
            level -= 1
            emit("\n" * max(pending_newlines, 1) + style.indent_unit * level)
            tok.start = offset
            emit("}")
            tok.end = offset
            placed.append(tok)
            pending_newlines = 1
            prev = tok
            continue
        if prev is not None and prev.text == "}" and tok.text in (";", ")", ",", "else"):
            pending_newlines = 0
        if pending_newlines:
            emit("\n" * pending_newlines + style.indent_unit * level)
            pending_newlines = 0
        elif prev is not None:
            emit(_separator(prev, tok, style))
        tok.start = offset
        emit(tok.text)
        tok.end = offset
        placed.append(tok)
        if (tok.text == ";" and tok.parent != "for_c_stmt") or tok.newline_after:
            pending_newlines = 1
            prev = None
        else:
            prev = tok
    text = "".join(out)
    if text and not text.endswith("\n"):
        text += "\n"
    return text, placed


def pretty_print(tree: AstNode, grammar: GrammarDef, style: PrintStyle = DEFAULT_STYLE) -> str:
    return print_tokens(tree, grammar, style)[0]


def bloat_ratio(source_text: str, target_text: str) -> float:
    """Non-whitespace character count of the translation over the source."""
    src = sum(1 for ch in source_text if not ch.isspace())
    if src == 0:
        raise EmptySource("source has no non-whitespace characters")
    tgt = sum(1 for ch in target_text if not ch.isspace())
    return tgt / src
