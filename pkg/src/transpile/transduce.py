"""Non-deterministic single-state tree transducer over a lazy derivation tree.

The derivation tree alternates slot nodes (pending translation tasks over a
source subtree) and transduction nodes (one rule applied at a slot, yielding
a target fragment with further slots).  Expansion is lazy and memoized;
derivations always expand the leftmost pending slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Union

from .grammar import AstNode, Enter, Exit, Token
from .rules import Bindings, FragmentNode, RefSlot, Rule, Ruleset, expand_rule, match_rule, specificity


@dataclass(frozen=True)
class SlotLeaf:
    slot_id: int


PartialTarget = Union[AstNode, FragmentNode, SlotLeaf]


@dataclass(frozen=True)
class SlotNode:
    slot_id: int
    source_fragment: AstNode


@dataclass(frozen=True)
class TransductionNode:
    rule_id: str
    bindings: Bindings
    produced: PartialTarget
    child_slots: tuple[SlotNode, ...]


@dataclass(frozen=True)
class DerivationPath:
    choices: tuple[tuple[int, str], ...] = ()

    def rule_ids(self) -> tuple[str, ...]:
        return tuple(rule_id for _, rule_id in self.choices)

    def extended(self, slot_id: int, rule_id: str) -> "DerivationPath":
        return DerivationPath(self.choices + ((slot_id, rule_id),))


class StuckError(Exception):
    """No rule applies at a pending slot: the user-prompt trigger."""

    def __init__(self, slot: SlotNode, partial: PartialTarget, path: DerivationPath):
        span = slot.source_fragment.span
        super().__init__(f"no rule applies at {slot.source_fragment.kind!r} (span {span})")
        self.slot = slot
        self.partial = partial
        self.path = path


class DerivationTree:
    def __init__(self, source: AstNode):
        self.root = SlotNode(slot_id=0, source_fragment=source)
        self._slots: dict[int, SlotNode] = {0: self.root}
        self._cache: dict[int, tuple[tuple[str, ...], list[TransductionNode]]] = {}
        self._next_id = 1

    def slot(self, slot_id: int) -> SlotNode:
        return self._slots[slot_id]

    def cached_slot_ids(self) -> set[int]:
        return set(self._cache)

    def _new_slot(self, source: AstNode) -> SlotNode:
        s = SlotNode(slot_id=self._next_id, source_fragment=source)
        self._next_id += 1
        self._slots[s.slot_id] = s
        return s


def init_derivation(source: AstNode) -> DerivationTree:
    return DerivationTree(source)


def _instantiate(tree: DerivationTree, fragment) -> tuple[PartialTarget, list[SlotNode]]:
    slots: list[SlotNode] = []

    def build(frag) -> PartialTarget:
        if isinstance(frag, RefSlot):
            s = tree._new_slot(frag.source)
            slots.append(s)
            return SlotLeaf(s.slot_id)
        if isinstance(frag, FragmentNode):
            return FragmentNode(frag.kind, tuple(build(c) for c in frag.children))
        return frag  # concrete AstNode terminal

    return build(fragment), slots


def expand_slot(tree: DerivationTree, slot: SlotNode, ruleset: Ruleset) -> list[TransductionNode]:
    """All applicable rules at a slot, in specificity order; memoized."""
    key = tuple(r.rule_id for r in ruleset.rules)
    hit = tree._cache.get(slot.slot_id)
    if hit is not None and hit[0] == key:
        return hit[1]
    out: list[TransductionNode] = []
    for rule in sorted(ruleset.rules, key=specificity):
        bindings = match_rule(rule, slot.source_fragment)
        if bindings is None:
            continue
        produced, child_slots = _instantiate(tree, expand_rule(rule, bindings))
        out.append(TransductionNode(rule.rule_id, bindings, produced, tuple(child_slots)))
    tree._cache[slot.slot_id] = (key, out)
    return out


def substitute(partial: PartialTarget, chosen: dict[int, TransductionNode]) -> PartialTarget:
    """Replace chosen slots by their produced fragments, recursively."""
    if isinstance(partial, SlotLeaf):
        t = chosen.get(partial.slot_id)
        return substitute(t.produced, chosen) if t else partial
    if isinstance(partial, FragmentNode):
        return FragmentNode(partial.kind, tuple(substitute(c, chosen) for c in partial.children))
    return partial


def is_complete(partial: PartialTarget) -> bool:
    if isinstance(partial, SlotLeaf):
        return False
    if isinstance(partial, FragmentNode):
        return all(is_complete(c) for c in partial.children)
    return True


def to_ast(partial: PartialTarget) -> AstNode:
    if isinstance(partial, SlotLeaf):
        raise ValueError("derivation is incomplete: pending slot remains")
    if isinstance(partial, FragmentNode):
        return AstNode(kind=partial.kind, children=tuple(to_ast(c) for c in partial.children))
    return partial


ChoicePolicy = Callable[[SlotNode, list[TransductionNode]], int]


def default_policy(slot: SlotNode, alternatives: list[TransductionNode]) -> int:
    return 0


def derive(
    tree: DerivationTree,
    ruleset: Ruleset,
    choice_policy: ChoicePolicy = default_policy,
) -> tuple[PartialTarget, DerivationPath]:
    """Leftmost derivation under a rule-choice policy.

    Raises StuckError when a pending slot has no applicable rule, carrying
    the partial target and the path so far.
    """
    pending: list[SlotNode] = [tree.root]
    chosen: dict[int, TransductionNode] = {}
    path = DerivationPath()
    while pending:
        slot = pending.pop(0)
        alts = expand_slot(tree, slot, ruleset)
        if not alts:
            raise StuckError(slot, substitute(SlotLeaf(tree.root.slot_id), chosen), path)
        t = alts[choice_policy(slot, alts)]
        chosen[slot.slot_id] = t
        path = path.extended(slot.slot_id, t.rule_id)
        pending = list(t.child_slots) + pending
    return substitute(SlotLeaf(tree.root.slot_id), chosen), path


def replay(tree: DerivationTree, ruleset: Ruleset, path: DerivationPath):
    """Decision points along a recorded path: (slot, alternatives, chosen index)."""
    pending: list[SlotNode] = [tree.root]
    points = []
    for slot_id, rule_id in path.choices:
        slot = pending.pop(0)
        assert slot.slot_id == slot_id, "path does not belong to this tree"
        alts = expand_slot(tree, slot, ruleset)
        idx = next(i for i, t in enumerate(alts) if t.rule_id == rule_id)
        points.append((slot, alts, idx))
        pending = list(alts[idx].child_slots) + pending
    return points


def _complete_from(
    tree: DerivationTree,
    ruleset: Ruleset,
    prefix: list[tuple[int, str]],
    pending: list[SlotNode],
    excluded: dict[int, set[str]],
) -> Optional[DerivationPath]:
    """Depth-first completion taking the first allowed alternative everywhere."""
    stack: list[tuple[SlotNode, list[TransductionNode], int, list[SlotNode]]] = []
    choices = list(prefix)
    while True:
        if not pending:
            return DerivationPath(tuple(choices))
        slot = pending[0]
        alts = expand_slot(tree, slot, ruleset)
        idx = _first_allowed(slot, alts, 0, excluded)
        while idx is None:
            if not stack:
                return None
            slot, alts, prev_idx, pending = stack.pop()
            choices.pop()
            idx = _first_allowed(slot, alts, prev_idx + 1, excluded)
        stack.append((slot, alts, idx, pending))
        t = alts[idx]
        choices.append((slot.slot_id, t.rule_id))
        pending = list(t.child_slots) + pending[1:]


def _first_allowed(slot: SlotNode, alts: list[TransductionNode], start: int,
                   excluded: dict[int, set[str]]) -> Optional[int]:
    banned = excluded.get(slot.slot_id, set())
    for i in range(start, len(alts)):
        if alts[i].rule_id not in banned:
            return i
    return None


def next_path(
    tree: DerivationTree,
    ruleset: Ruleset,
    previous: DerivationPath,
    pivot_constraints: set[tuple[int, frozenset[str]]] = frozenset(),
) -> Optional[DerivationPath]:
    """Next derivation in priority order differing at or after the earliest
    constrained slot; None when the alternatives are exhausted."""
    excluded: dict[int, set[str]] = {}
    for slot_id, rule_ids in pivot_constraints:
        excluded.setdefault(slot_id, set()).update(rule_ids)
    points = replay(tree, ruleset, previous)
    if excluded:
        constrained = [i for i, (slot, _, _) in enumerate(points) if slot.slot_id in excluded]
        start = constrained[0] if constrained else 0
    else:
        start = 0
    for i in range(len(points) - 1, start - 1, -1):
        slot, alts, idx = points[i]
        pick = _first_allowed(slot, alts, idx + 1, excluded)
        if pick is None:
            continue
        # rebuild pending as it stood before decision i
        pending = [tree.root]
        for slot_j, alts_j, idx_j in points[:i]:
            assert pending[0].slot_id == slot_j.slot_id
            pending = list(alts_j[idx_j].child_slots) + pending[1:]
        prefix = [(s.slot_id, a[j].rule_id) for s, a, j in points[:i]]
        t = alts[pick]
        completed = _complete_from(
            tree, ruleset,
            prefix + [(slot.slot_id, t.rule_id)],
            list(t.child_slots) + pending[1:],
            excluded,
        )
        if completed is not None:
            return completed
    return None


def fragment_events(partial: PartialTarget) -> Iterator[object]:
    """Preorder traversal events of a partial target, slots as boundaries."""
    if isinstance(partial, SlotLeaf):
        yield SlotBoundary(partial.slot_id)
        return
    if isinstance(partial, FragmentNode):
        yield Enter(partial.kind)
        for child in partial.children:
            yield from fragment_events(child)
        yield Exit()
        return
    if partial.is_terminal:
        yield Token(partial.text)
        return
    yield Enter(partial.kind)
    for child in partial.children or ():
        yield from fragment_events(child)
    yield Exit()


@dataclass(frozen=True)
class SlotBoundary:
    slot_id: int


@dataclass(frozen=True)
class EndOfInput:
    pass
