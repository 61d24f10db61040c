"""Access to the grammar and ruleset files shipped inside the package."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .grammar import GrammarDef, load_grammar

GRAMMAR_NAMES = ("python_subset", "js_subset")
RULESET_NAMES = ("base", "corpus")


def grammar_text(name: str) -> str:
    return resources.files("transpile.data.grammars").joinpath(f"{name}.json").read_text()


@lru_cache(maxsize=None)
def bundled_grammar(name: str) -> GrammarDef:
    return load_grammar(grammar_text(name))


def grammar_manifest() -> dict:
    return json.loads(resources.files("transpile.data.grammars").joinpath("manifest.json").read_text())


def ruleset_text(name: str) -> str:
    return resources.files("transpile.data.rules").joinpath(f"{name}.rules").read_text()
