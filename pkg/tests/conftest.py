import json
from pathlib import Path

import pytest

from transpile.bundled import bundled_grammar, ruleset_text
from transpile.checker import build_pda
from transpile.rules import parse_ruleset

REPO = Path(__file__).resolve().parent.parent
BENCHMARKS = REPO / "benchmarks"
SNIPPETS = REPO / "src" / "transpile" / "data" / "snippets"


@pytest.fixture(scope="session")
def py_grammar():
    return bundled_grammar("python_subset")


@pytest.fixture(scope="session")
def js_grammar():
    return bundled_grammar("js_subset")


@pytest.fixture(scope="session")
def js_pda(js_grammar):
    return build_pda(js_grammar)


@pytest.fixture(scope="session")
def base_rules():
    return parse_ruleset(ruleset_text("base"), "base")


@pytest.fixture(scope="session")
def corpus_rules():
    return parse_ruleset(ruleset_text("corpus"), "corpus")


@pytest.fixture(scope="session")
def benchmarks_dir():
    return BENCHMARKS


@pytest.fixture(scope="session")
def corpus_sources():
    out = {}
    for bench in sorted(BENCHMARKS.iterdir()):
        src = bench / "source"
        if src.exists():
            out[bench.name] = src.read_text()
    return out


# A tiny arithmetic grammar used across modules: the two-production example.
ARITH_GRAMMAR = json.dumps({
    "name": "arith",
    "symbol_prefix": "ar",
    "start": "expr",
    "layout": "freeform",
    "rules": {
        "expr": {"type": "seq", "items": [
            "term",
            {"type": "repeat0", "item": {"type": "seq", "items": [
                {"type": "pattern", "regex": "\\+|\u00d7"}, "term"]}},
        ]},
        "term": {"type": "choice", "items": [
            {"type": "literal", "text": "a"},
            {"type": "literal", "text": "b"},
            {"type": "literal", "text": "c"},
        ]},
    },
})


@pytest.fixture(scope="session")
def arith_grammar():
    from transpile.grammar import load_grammar
    return load_grammar(ARITH_GRAMMAR)
