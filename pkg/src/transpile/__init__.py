"""Incremental, user-customizable source-to-source transpiler toolkit.

The pipeline: parse a source program into a compact AST, search over the
derivations of a non-deterministic tree transducer for a translation that
the target grammar's pushdown automaton accepts and the unit tests pass,
and learn new translation rules from pairs of code snippets whenever the
search gets stuck.
"""

from .bundled import bundled_grammar, ruleset_text
from .checker import build_pda
from .grammar import AstNode, GrammarDef, ParseError, load_grammar, parse_source, preorder
from .inference import infer_rule, tree_edit_distance
from .printer import bloat_ratio, pretty_print
from .rules import Rule, Ruleset, match_rule, expand_rule, parse_ruleset, serialize_ruleset
from .searcher import CandidateTranslation, SearchOutcome, TestCase, first_candidate, search
from .transduce import DerivationTree, derive, init_derivation

__version__ = "0.1.0"

__all__ = [
    "AstNode",
    "CandidateTranslation",
    "DerivationTree",
    "GrammarDef",
    "ParseError",
    "Rule",
    "Ruleset",
    "SearchOutcome",
    "TestCase",
    "bloat_ratio",
    "build_pda",
    "bundled_grammar",
    "derive",
    "expand_rule",
    "first_candidate",
    "infer_rule",
    "init_derivation",
    "load_grammar",
    "match_rule",
    "parse_ruleset",
    "parse_source",
    "preorder",
    "pretty_print",
    "ruleset_text",
    "search",
    "serialize_ruleset",
    "tree_edit_distance",
    "__version__",
]
