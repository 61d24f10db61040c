import itertools

import pytest

from transpile.grammar import ast_equal, node, parse_source
from transpile.rules import parse_ruleset
from transpile.transduce import (
    DerivationPath,
    StuckError,
    default_policy,
    derive,
    expand_slot,
    init_derivation,
    is_complete,
    next_path,
    to_ast,
)
from tests.test_rules import FORMAL_RULES, formal_source


@pytest.fixture()
def formal_rules():
    return parse_ruleset(FORMAL_RULES, "formal")


def test_init_derivation_assignment(py_grammar):
    ast = parse_source(py_grammar, "a = 5\n")
    tree = init_derivation(ast)
    assert tree.root.source_fragment is ast
    assert tree.cached_slot_ids() == set()  # nothing evaluated yet


def test_init_derivation_formal():
    src = formal_source()
    tree = init_derivation(src)
    assert tree.root.source_fragment.kind == "×"


def test_init_twice_independent():
    src = formal_source()
    t1, t2 = init_derivation(src), init_derivation(src)
    assert t1.root is not t2.root


def test_expand_slot_assignment_two_competitors(py_grammar, base_rules):
    ast = parse_source(py_grammar, "a = 5\n")
    tree = init_derivation(ast)
    program_alts = expand_slot(tree, tree.root, base_rules)
    stmt_slot = program_alts[0].child_slots[0]
    alts = expand_slot(tree, stmt_slot, base_rules)
    assert len(alts) >= 2
    produced_kinds = [t.produced.kind for t in alts[:2]]
    assert produced_kinds == ["assign_stmt", "declaration"]


def test_expand_slot_distribute(formal_rules):
    tree = init_derivation(formal_source())
    alts = expand_slot(tree, tree.root, formal_rules)
    assert len(alts) == 1
    assert len(alts[0].child_slots) == 4  # a, c, b, c in target order


def test_expand_slot_no_rule(formal_rules):
    tree = init_derivation(node("unknown"))
    assert expand_slot(tree, tree.root, formal_rules) == []


def test_derive_formal_example(formal_rules):
    """The transducer formal example: distribute then leaf rules."""
    tree = init_derivation(formal_source())
    partial, path = derive(tree, formal_rules)
    assert is_complete(partial)
    result = to_ast(partial)
    expected = node("Add", node("Mult", node("A"), node("C")),
                    node("Mult", node("B"), node("C")))
    assert ast_equal(result, expected)
    assert len(path.choices) == 5  # distribute + four leaf slots (c twice)


def test_derive_default_policy_prefers_plain_assignment(py_grammar, base_rules):
    ast = parse_source(py_grammar, "a = 5\n")
    tree = init_derivation(ast)
    partial, path = derive(tree, base_rules)
    result = to_ast(partial)
    assert result.children[0].kind == "assign_stmt"


def test_derive_stuck_at_comprehension(py_grammar, base_rules):
    text = "xs = [1]\nys = [w * 2 for w in xs]\n"
    ast = parse_source(py_grammar, text)
    tree = init_derivation(ast)
    with pytest.raises(StuckError) as err:
        derive(tree, base_rules)
    assert err.value.slot.source_fragment.kind == "list_comp"
    span = err.value.slot.source_fragment.span
    assert text.count("\n", 0, span[0]) + 1 == 2  # line 2


def test_laziness_cache_bounded(py_grammar, corpus_rules):
    text = "x = 1\ny = 2\nz = x + y\n"
    ast = parse_source(py_grammar, text)
    tree = init_derivation(ast)
    _, path = derive(tree, corpus_rules)
    assert tree.cached_slot_ids() == {slot_id for slot_id, _ in path.choices}


def test_expand_slot_memoized(py_grammar, base_rules):
    ast = parse_source(py_grammar, "a = 5\n")
    tree = init_derivation(ast)
    first = expand_slot(tree, tree.root, base_rules)
    second = expand_slot(tree, tree.root, base_rules)
    assert first is second


def test_single_state_invariance(py_grammar, corpus_rules):
    """Structurally identical subtrees transduce identically under a fixed
    per-slot choice policy."""
    text = "x = len(ws)\nx = len(ws)\n"
    ast = parse_source(py_grammar, text)
    tree = init_derivation(ast)
    partial, _ = derive(tree, corpus_rules)
    result = to_ast(partial)
    first, second = result.children
    assert ast_equal(first, second)


# --- enumeration oracle -----------------------------------------------------

TOY_RULES = """
(MatchExpand (fragment (s.root . . .)) (fragment (t.root .1 .2 .3)))
(MatchExpand (fragment (s.leaf)) (fragment (t.p)))
(MatchExpand (fragment (s.leaf)) (fragment (t.q)))
(MatchExpand (fragment (s.leaf)) (fragment (t.r)))
"""


def toy_source():
    return node("root", node("leaf"), node("leaf"), node("leaf"))


def test_next_path_enumerates_cross_product():
    rules = parse_ruleset(TOY_RULES, "toy")
    tree = init_derivation(toy_source())
    _, path = derive(tree, rules)
    leaf_rules = [r.rule_id for r in rules.rules[1:]]

    seen = [path.rule_ids()]
    while True:
        nxt = next_path(tree, rules, DerivationPath(tuple(path.choices)))
        if nxt is None:
            break
        path = nxt
        seen.append(path.rule_ids())

    root_id = rules.rules[0].rule_id
    expected = [
        (root_id, a, b, c)
        for a, b, c in itertools.product(leaf_rules, repeat=3)
    ]
    assert seen == expected
    assert len(seen) == len(set(seen)) == 27


def test_next_path_with_exclusion(py_grammar, base_rules):
    ast = parse_source(py_grammar, "a = 5\n")
    tree = init_derivation(ast)
    _, path = derive(tree, base_rules)
    stmt_slot_id, plain_rule = path.choices[1]
    nxt = next_path(tree, base_rules, path,
                    {(stmt_slot_id, frozenset({plain_rule}))})
    assert nxt is not None
    chosen = dict(nxt.choices)[stmt_slot_id]
    assert chosen != plain_rule  # the declaration rule


def test_next_path_exhaustion(formal_rules):
    tree = init_derivation(formal_source())
    _, path = derive(tree, formal_rules)
    # every slot has exactly one alternative: nothing to vary
    assert next_path(tree, formal_rules, path) is None
    # excluding the only rule at the root leaves nothing
    root_choice = path.choices[0]
    assert next_path(tree, formal_rules, path,
                     {(root_choice[0], frozenset({root_choice[1]}))}) is None
