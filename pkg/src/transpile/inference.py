"""Rule inference from one or two pairs of source/target code snippets.

Each snippet line holds one instance of the pattern of interest.  A
simultaneous preorder traversal of the per-line AST fragments keeps the
common structure and abstracts differing subtrees into capture holes
(template holes for differing terminals).  Target holes are then linked to
source holes by smallest summed tree-edit distance between the concrete
subtrees they abstracted; template holes link by string equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .grammar import AstNode, GrammarDef, ParseError, parse_source
from .rules import (
    Capture,
    Matcher,
    Expander,
    NTExpander,
    NTMatcher,
    Reference,
    Rule,
    TExpander,
    TExpanderTpl,
    TMatcher,
    TMatcherTpl,
    _with_id,
    unquote,
    validate_rule,
)


class InferenceError(Exception):
    pass


class MixedKinds(InferenceError):
    pass


class IncompatibleRoots(InferenceError):
    pass


class UnexpectedTemplate(InferenceError):
    pass


class SnippetCountMismatch(InferenceError):
    pass


# ---------------------------------------------------------------------------
# Tree edit distance (exact, ordered trees)
# ---------------------------------------------------------------------------

def node_label(n: AstNode) -> str:
    if n.is_terminal:
        return n.kind + (n.text or "")
    return n.kind


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def rename_cost(a: AstNode, b: AstNode) -> float:
    la, lb = node_label(a), node_label(b)
    if la == lb:
        return 0.0
    longest = max(len(la), len(lb))
    return levenshtein(la, lb) / longest if longest else 0.0


class _Annotated:
    """Postorder arrays, leftmost descendants and keyroots of a tree."""

    def __init__(self, root: AstNode):
        self.nodes: list[AstNode] = []
        self.lmds: list[int] = []
        index_lmd: dict[int, int] = {}

        def visit(n: AstNode) -> int:
            if n.children:
                first = visit(n.children[0])
                for child in n.children[1:]:
                    visit(child)
                lmd = first
            else:
                lmd = len(self.nodes)
            self.nodes.append(n)
            self.lmds.append(lmd)
            index_lmd[lmd] = len(self.nodes) - 1
            return lmd

        visit(root)
        self.keyroots = sorted(index_lmd.values())


def tree_edit_distance(t1: AstNode, t2: AstNode) -> float:
    """Minimum-cost node edit script turning t1 into t2.

    Insertions and deletions cost 1; renames cost the Levenshtein distance
    between labels normalized by the longer label.
    """
    a, b = _Annotated(t1), _Annotated(t2)
    n, m = len(a.nodes), len(b.nodes)
    td = [[0.0] * m for _ in range(n)]

    for i in a.keyroots:
        for j in b.keyroots:
            _treedist(a, b, i, j, td)
    return td[n - 1][m - 1]


def _treedist(a: _Annotated, b: _Annotated, i: int, j: int, td: list[list[float]]) -> None:
    ali, blj = a.lmds[i], b.lmds[j]
    rows = i - ali + 2
    cols = j - blj + 2
    fd = [[0.0] * cols for _ in range(rows)]
    for x in range(1, rows):
        fd[x][0] = fd[x - 1][0] + 1
    for y in range(1, cols):
        fd[0][y] = fd[0][y - 1] + 1
    for x in range(1, rows):
        for y in range(1, cols):
            ax = x + ali - 1
            by = y + blj - 1
            if a.lmds[ax] == ali and b.lmds[by] == blj:
                fd[x][y] = min(
                    fd[x - 1][y] + 1,
                    fd[x][y - 1] + 1,
                    fd[x - 1][y - 1] + rename_cost(a.nodes[ax], b.nodes[by]),
                )
                td[ax][by] = fd[x][y]
            else:
                p = a.lmds[ax] - ali
                q = b.lmds[by] - blj
                fd[x][y] = min(
                    fd[x - 1][y] + 1,
                    fd[x][y - 1] + 1,
                    fd[p][q] + td[ax][by],
                )


# ---------------------------------------------------------------------------
# Fragment extraction
# ---------------------------------------------------------------------------

EXPR_STATEMENT_KIND = "expr_stmt"


def extract_fragments(code: str, grammar: GrammarDef,
                      highlights: Optional[list[tuple[int, int]]] = None) -> list[AstNode]:
    """One AST fragment per snippet line: the expression inside a bare
    expression statement, otherwise the whole statement."""
    fragments: list[AstNode] = []
    kinds: set[str] = set()
    lines = [ln for ln in code.splitlines() if ln.strip()]
    for lineno, line in enumerate(lines, 1):
        try:
            program = parse_source(grammar, line + "\n")
        except ParseError as exc:
            raise ParseError(f"snippet line {lineno} does not parse", exc.offset)
        if not program.children:
            raise ParseError(f"snippet line {lineno} is empty", 0)
        stmt = program.children[0]
        if highlights and lineno - 1 < len(highlights) and highlights[lineno - 1]:
            fragments.append(_node_at_span(stmt, highlights[lineno - 1]))
            kinds.add("highlight")
            continue
        if stmt.kind == EXPR_STATEMENT_KIND and stmt.children:
            fragments.append(stmt.children[0])
            kinds.add("expression")
        else:
            fragments.append(stmt)
            kinds.add("statement")
    if kinds >= {"expression", "statement"}:
        raise MixedKinds("snippet lines mix statements and expressions")
    return fragments


def _node_at_span(root: AstNode, span: tuple[int, int]) -> AstNode:
    best = root
    for node in root.walk():
        if node.is_terminal or node.span is None:
            continue
        if node.span[0] <= span[0] and span[1] <= node.span[1]:
            if best.span is None or (node.span[1] - node.span[0]) <= (best.span[1] - best.span[0]):
                best = node
    return best


# ---------------------------------------------------------------------------
# Simultaneous traversal: AST template extraction
# ---------------------------------------------------------------------------

@dataclass
class TplNode:
    """Template tree node: fixed structure with capture/template sites."""
    kind: str  # node kind for fixed non-terminals; "" otherwise
    variant: str  # "nt" | "t" | "capture" | "template"
    text: Optional[str] = None            # fixed terminal text
    children: list["TplNode"] = field(default_factory=list)
    mode: str = ""                        # capture: "." or "*"
    op: str = ""                          # template: "str" | "val" | "nt"
    instances: tuple = ()                 # per-fragment subtrees / texts


@dataclass
class AstTemplate:
    skeleton: TplNode
    capture_sites: list[TplNode]
    template_sites: list[TplNode]


def simultaneous_traversal(fragments: list[AstNode]) -> AstTemplate:
    if not 1 <= len(fragments) <= 2:
        raise SnippetCountMismatch("one or two fragments are required")
    if len(fragments) == 1:
        skeleton = _concrete(fragments[0])
    else:
        a, b = fragments
        if a.is_terminal or b.is_terminal or a.kind != b.kind:
            raise IncompatibleRoots(
                f"fragment roots differ: {a.kind or a.text!r} vs {b.kind or b.text!r}")
        skeleton = _walk_pair(a, b)
    captures: list[TplNode] = []
    templates: list[TplNode] = []
    _collect_sites(skeleton, captures, templates)
    return AstTemplate(skeleton, captures, templates)


def _concrete(n: AstNode) -> TplNode:
    if n.is_terminal:
        return TplNode(kind="", variant="t", text=n.text)
    return TplNode(kind=n.kind, variant="nt",
                   children=[_concrete(c) for c in n.children or ()])


def _walk_pair(a: AstNode, b: AstNode) -> TplNode:
    if a.is_terminal and b.is_terminal:
        if a.text == b.text:
            return TplNode(kind="", variant="t", text=a.text)
        quoted = _is_quoted(a.text) and _is_quoted(b.text)
        return TplNode(kind="", variant="template",
                       op="val" if quoted else "str",
                       instances=(a.text, b.text))
    if not a.is_terminal and not b.is_terminal and a.kind == b.kind:
        ca, cb = list(a.children or ()), list(b.children or ())
        if len(ca) == len(cb):
            return TplNode(kind=a.kind, variant="nt",
                           children=[_walk_pair(x, y) for x, y in zip(ca, cb)])
        prefix = 0
        while prefix < min(len(ca), len(cb)) and _similar(ca[prefix], cb[prefix]):
            prefix += 1
        suffix = 0
        while (suffix < min(len(ca), len(cb)) - prefix
               and _similar(ca[-1 - suffix], cb[-1 - suffix])):
            suffix += 1
        mid_a = tuple(ca[prefix:len(ca) - suffix])
        mid_b = tuple(cb[prefix:len(cb) - suffix])
        children = [_walk_pair(ca[i], cb[i]) for i in range(prefix)]
        children.append(TplNode(kind="", variant="capture", mode="*",
                                instances=(mid_a, mid_b)))
        children.extend(
            _walk_pair(ca[len(ca) - suffix + i], cb[len(cb) - suffix + i])
            for i in range(suffix)
        )
        return TplNode(kind=a.kind, variant="nt", children=children)
    if not a.is_terminal and not b.is_terminal:
        return TplNode(kind="", variant="capture", mode=".", instances=(a, b))
    raise IncompatibleRoots(
        "terminal aligned against a non-terminal; highlight the intended instances")


def _similar(a: AstNode, b: AstNode) -> bool:
    if a.is_terminal != b.is_terminal:
        return False
    if a.is_terminal:
        return a.text == b.text
    return a.kind == b.kind


def _is_quoted(text: Optional[str]) -> bool:
    return bool(text) and len(text) >= 2 and text[0] == text[-1] and text[0] in "'\""


def _collect_sites(node: TplNode, captures: list[TplNode], templates: list[TplNode]) -> None:
    if node.variant == "capture":
        captures.append(node)
    elif node.variant == "template":
        templates.append(node)
    for child in node.children:
        _collect_sites(child, captures, templates)


# ---------------------------------------------------------------------------
# AST templates to rules
# ---------------------------------------------------------------------------

@dataclass
class InferResult:
    rule: Rule
    notes: list[str]
    ambiguous: list[tuple[int, list[int]]]  # (reference position, capture options)


def _sequence_node(nodes: tuple[AstNode, ...]) -> AstNode:
    return AstNode(kind="", children=tuple(nodes))


def _instance_distance(src_site: TplNode, tar_site: TplNode, count: int) -> float:
    total = 0.0
    for j in range(count):
        s = src_site.instances[j]
        t = tar_site.instances[j]
        if src_site.mode == "*" or isinstance(s, tuple):
            s = _sequence_node(s if isinstance(s, tuple) else (s,))
        if tar_site.mode == "*" or isinstance(t, tuple):
            t = _sequence_node(t if isinstance(t, tuple) else (t,))
        total += tree_edit_distance(s, t)
    return total


def infer_rule_detailed(src_code: str, trg_code: str,
                        src_grammar: GrammarDef, trg_grammar: GrammarDef) -> InferResult:
    src_frags = extract_fragments(src_code, src_grammar)
    trg_frags = extract_fragments(trg_code, trg_grammar)
    if len(src_frags) != len(trg_frags):
        raise SnippetCountMismatch(
            f"{len(src_frags)} source lines vs {len(trg_frags)} target lines")
    lhs = simultaneous_traversal(src_frags)
    rhs = simultaneous_traversal(trg_frags)
    count = len(src_frags)
    notes: list[str] = []
    ambiguous: list[tuple[int, list[int]]] = []

    links: dict[int, int] = {}  # rhs capture site position -> lhs capture index (1-based)
    for t_pos, t_site in enumerate(rhs.capture_sites):
        candidates = [
            (i, s_site) for i, s_site in enumerate(lhs.capture_sites)
            if s_site.mode == t_site.mode
        ]
        if not candidates:
            raise UnexpectedTemplate(
                f"target hole {t_pos + 1} ({t_site.mode!r}) has no source capture to link")
        dists = [(_instance_distance(s_site, t_site, count), i) for i, s_site in candidates]
        best = min(d for d, _ in dists)
        best_idxs = [i for d, i in dists if d == best]
        links[t_pos] = best_idxs[0] + 1
        if len(best_idxs) > 1:
            ambiguous.append((t_pos + 1, [i + 1 for i in best_idxs]))
            notes.append(
                f"reference {t_pos + 1} ties between captures {[i + 1 for i in best_idxs]}; "
                f"smallest index chosen")

    used = set(links.values())
    unused = [i + 1 for i in range(len(lhs.capture_sites)) if i + 1 not in used]
    if unused:
        notes.append(f"source captures {unused} are never referenced")

    tpl_links: dict[int, int] = {}
    for t_pos, t_site in enumerate(rhs.template_sites):
        match = None
        for i, s_site in enumerate(lhs.template_sites):
            if s_site.op == t_site.op and _tpl_values(s_site) == _tpl_values(t_site):
                match = i + 1
                break
        if match is None:
            raise UnexpectedTemplate(
                f"target template hole {t_pos + 1} with instances "
                f"{t_site.instances} matches no source template")
        tpl_links[t_pos] = match

    src_prefix = src_grammar.symbol_prefix or src_grammar.language_name
    trg_prefix = trg_grammar.symbol_prefix or trg_grammar.language_name
    matcher = _to_matcher(lhs.skeleton, src_prefix)
    cap_counter = [0]
    tpl_counter = [0]
    expander = _to_expander(rhs.skeleton, trg_prefix, links, tpl_links, cap_counter, tpl_counter)
    rule = _with_id(Rule(matcher, expander, provenance="inferred"))
    validate_rule(rule)
    return InferResult(rule=rule, notes=notes, ambiguous=ambiguous)


def _tpl_values(site: TplNode) -> tuple:
    if site.op == "val":
        return tuple(unquote(t)[0] for t in site.instances)
    return tuple(site.instances)


def infer_rule(src_code: str, trg_code: str,
               src_grammar: GrammarDef, trg_grammar: GrammarDef) -> Rule:
    return infer_rule_detailed(src_code, trg_code, src_grammar, trg_grammar).rule


def _to_matcher(node: TplNode, prefix: str) -> Matcher:
    if node.variant == "t":
        return TMatcher("str", node.text)
    if node.variant == "template":
        return TMatcherTpl(node.op)
    if node.variant == "capture":
        return Capture(node.mode)
    return NTMatcher(f"{prefix}.{node.kind}",
                     tuple(_to_matcher(c, prefix) for c in node.children))


def _to_expander(node: TplNode, prefix: str, links: dict[int, int],
                 tpl_links: dict[int, int], cap_counter: list[int],
                 tpl_counter: list[int]) -> Expander:
    if node.variant == "t":
        return TExpander("str", node.text)
    if node.variant == "template":
        idx = tpl_links[tpl_counter[0]]
        tpl_counter[0] += 1
        return TExpanderTpl(node.op, idx)
    if node.variant == "capture":
        idx = links[cap_counter[0]]
        cap_counter[0] += 1
        return Reference(node.mode, idx)
    return NTExpander(
        f"{prefix}.{node.kind}",
        tuple(_to_expander(c, prefix, links, tpl_links, cap_counter, tpl_counter)
              for c in node.children),
    )
