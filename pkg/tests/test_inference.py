import itertools
import random

import pytest

from transpile.grammar import AstNode, ParseError, node, parse_source, terminal
from transpile.inference import (
    IncompatibleRoots,
    MixedKinds,
    extract_fragments,
    infer_rule,
    infer_rule_detailed,
    rename_cost,
    simultaneous_traversal,
    tree_edit_distance,
)
from transpile.rules import Ruleset, serialize_rule
from tests.conftest import SNIPPETS


def snippet(name: str) -> str:
    return (SNIPPETS / name).read_text()


# --- fragment extraction ---------------------------------------------------

def test_extract_comprehension_lines(py_grammar):
    frags = extract_fragments(snippet("comprehension.py.txt"), py_grammar)
    assert len(frags) == 2
    assert all(f.kind == "list_comp" for f in frags)


def test_extract_none_single_line(py_grammar):
    frags = extract_fragments("None\n", py_grammar)
    assert len(frags) == 1
    assert frags[0].kind == "none_lit"


def test_extract_parse_error_line_index(py_grammar):
    with pytest.raises(ParseError) as err:
        extract_fragments("x = 1\n)) broken ((\n", py_grammar)
    assert "line 2" in str(err.value)


def test_extract_mixed_kinds(py_grammar):
    with pytest.raises(MixedKinds):
        extract_fragments("x + 1\nreturn 5\n", py_grammar)


def test_extract_statements(py_grammar):
    frags = extract_fragments("for x in xs: pass\nfor y in ys: break\n", py_grammar)
    assert [f.kind for f in frags] == ["for_stmt", "for_stmt"]


# --- simultaneous traversal -------------------------------------------------

def test_traversal_comprehension_two_holes(py_grammar):
    frags = extract_fragments(snippet("comprehension.py.txt"), py_grammar)
    template = simultaneous_traversal(frags)
    assert len(template.capture_sites) == 2  # body and iterable
    assert len(template.template_sites) == 1  # the loop variable name


def test_traversal_not_single_capture(py_grammar):
    frags = extract_fragments("not x\nnot y == 0\n", py_grammar)
    template = simultaneous_traversal(frags)
    assert template.skeleton.kind == "not_expr"
    assert len(template.capture_sites) == 1
    assert len(template.template_sites) == 0


def test_traversal_identical_fragments(py_grammar):
    frags = extract_fragments("a + 1\na + 1\n", py_grammar)
    template = simultaneous_traversal(frags)
    assert template.capture_sites == []
    assert template.template_sites == []


def test_traversal_incompatible_roots(py_grammar):
    frags = extract_fragments("a + 1\nnot b\n", py_grammar)
    with pytest.raises(IncompatibleRoots):
        simultaneous_traversal(frags)


# --- tree edit distance ------------------------------------------------------

def test_ted_identical():
    t = node("p", terminal("x"), node("q", terminal("y")))
    assert tree_edit_distance(t, t) == 0


def test_ted_one_char_substitution():
    assert tree_edit_distance(terminal("abc"), terminal("abd")) == pytest.approx(1 / 3)


def test_ted_single_insertion():
    leaf = terminal("x")
    two = node("p", terminal("x"))
    assert tree_edit_distance(leaf, two) == pytest.approx(1.0)


def random_tree(rng: random.Random, max_nodes: int) -> AstNode:
    labels = ["a", "bb", "c", "dd", "e"]
    budget = [rng.randrange(1, max_nodes + 1)]

    def build() -> AstNode:
        budget[0] -= 1
        if budget[0] <= 0 or rng.random() < 0.35:
            return terminal(rng.choice(labels))
        kids = []
        while budget[0] > 0 and rng.random() < 0.6:
            kids.append(build())
        if not kids:
            return terminal(rng.choice(labels))
        return AstNode(kind=rng.choice(labels), children=tuple(kids))

    return build()


def brute_force_ted(t1: AstNode, t2: AstNode) -> float:
    """Exhaustive search over valid tree mappings (ancestor- and
    order-preserving injections); the independent oracle."""
    def flatten(root):
        order = []
        ancestors = {}

        def visit(n, anc):
            idx = len(order)
            order.append(n)
            ancestors[idx] = set(anc)
            for c in n.children or ():
                visit(c, anc + [idx])

        visit(root, [])
        return order, ancestors

    n1, anc1 = flatten(t1)
    n2, anc2 = flatten(t2)
    best = len(n1) + len(n2)  # delete plus insert everything
    idx1 = range(len(n1))
    idx2 = range(len(n2))
    for k in range(1, min(len(n1), len(n2)) + 1):
        for sel1 in itertools.combinations(idx1, k):
            for sel2 in itertools.combinations(idx2, k):
                # preorder-ordered pairing; check ancestor preservation
                ok = True
                for (a, b), (c, d) in itertools.combinations(zip(sel1, sel2), 2):
                    if (a in anc1[c]) != (b in anc2[d]):
                        ok = False
                        break
                if not ok:
                    continue
                cost = (len(n1) - k) + (len(n2) - k)
                for a, b in zip(sel1, sel2):
                    cost += rename_cost(n1[a], n2[b])
                best = min(best, cost)
    return best


def test_ted_matches_brute_force_oracle():
    rng = random.Random(42)
    for _ in range(120):
        t1 = random_tree(rng, 6)
        t2 = random_tree(rng, 6)
        fast = tree_edit_distance(t1, t2)
        slow = brute_force_ted(t1, t2)
        assert fast == pytest.approx(slow), (t1.to_sexpr(), t2.to_sexpr())


def test_ted_metric_properties():
    rng = random.Random(9)
    trees = [random_tree(rng, 6) for _ in range(12)]
    for t1 in trees:
        assert tree_edit_distance(t1, t1) == 0
    for t1, t2 in itertools.combinations(trees, 2):
        assert tree_edit_distance(t1, t2) == pytest.approx(tree_edit_distance(t2, t1))
    for t1, t2, t3 in itertools.combinations(trees[:8], 3):
        d12 = tree_edit_distance(t1, t2)
        d23 = tree_edit_distance(t2, t3)
        d13 = tree_edit_distance(t1, t3)
        assert d13 <= d12 + d23 + 1e-9


# --- rule inference -----------------------------------------------------------

def test_infer_map_style_rule(py_grammar, js_grammar):
    result = infer_rule_detailed(
        snippet("comprehension.py.txt"), snippet("comprehension_map.js.txt"),
        py_grammar, js_grammar)
    text = serialize_rule(result.rule)
    assert "list_comp" in text and "Array" in text and "map" in text
    assert result.rule.provenance == "inferred"


def test_infer_alt_style_distinct_rhs(py_grammar, js_grammar):
    map_rule = infer_rule(snippet("comprehension.py.txt"),
                          snippet("comprehension_map.js.txt"), py_grammar, js_grammar)
    alt_rule = infer_rule(snippet("comprehension.py.txt"),
                          snippet("comprehension_alt.js.txt"), py_grammar, js_grammar)
    assert map_rule.src_pattern == alt_rule.src_pattern
    assert map_rule.trg_pattern != alt_rule.trg_pattern


def test_infer_single_candidate_link_forced(py_grammar, js_grammar):
    rule = infer_rule("not x\nnot y == 0\n", "!(x);\n!(y === 0);\n",
                      py_grammar, js_grammar)
    from transpile.rules import _collect_expanders
    refs = []
    _collect_expanders(rule.trg_pattern, refs, [])
    assert [r.index for r in refs] == [1]


def test_reapplication_closure(py_grammar, js_grammar, js_pda, base_rules):
    """Applying the inferred rule back to each snippet line with base rules
    reproduces the paired target line exactly."""
    from transpile.searcher import first_candidate

    rule = infer_rule(snippet("comprehension.py.txt"),
                      snippet("comprehension_map.js.txt"), py_grammar, js_grammar)
    merged = Ruleset("merged", base_rules.rules + [rule.with_order(len(base_rules.rules))])
    src_lines = snippet("comprehension.py.txt").splitlines()
    trg_lines = snippet("comprehension_map.js.txt").splitlines()
    for src_line, trg_line in zip(src_lines, trg_lines):
        ast = parse_source(py_grammar, src_line + "\n")
        cand = first_candidate(ast, merged, js_grammar, js_pda)
        assert cand.target_text.strip() == trg_line.strip()


def test_linking_invariance_under_line_permutation(py_grammar, js_grammar):
    src = snippet("comprehension.py.txt").splitlines()
    trg = snippet("comprehension_map.js.txt").splitlines()
    fwd = infer_rule("\n".join(src) + "\n", "\n".join(trg) + "\n", py_grammar, js_grammar)
    rev = infer_rule("\n".join(reversed(src)) + "\n", "\n".join(reversed(trg)) + "\n",
                     py_grammar, js_grammar)
    assert fwd.src_pattern == rev.src_pattern
    assert fwd.trg_pattern == rev.trg_pattern


def test_one_shot_rule_fully_concrete(py_grammar, js_grammar):
    rule = infer_rule("None\n", "null;\n", py_grammar, js_grammar)
    text = serialize_rule(rule)
    assert text == ('(MatchExpand (fragment (py.none_lit (str "None"))) '
                    '(fragment (js.null_lit (str "null"))))')


def test_assignment_pair_infers_the_base_rule(py_grammar, js_grammar, base_rules):
    """Teaching assignment from a scalar line plus a list-pattern line yields
    the very rule the base ruleset ships."""
    rule = infer_rule("a = 5\n[c, d] = [e, f]\n", "a = 5;\n[c, d] = [e, f];\n",
                      py_grammar, js_grammar)
    assert any(r.rule_id == rule.rule_id for r in base_rules.rules)
