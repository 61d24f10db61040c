"""Non-deterministic pushdown automaton validating partial target ASTs.

The automaton is parameterized by the target grammar.  Its input is the
preorder event stream of transduced fragments; pending slots suspend a
stack obligation that is checked when the slot's content arrives in a later
transduction step.  Stacks, logs and obligation tables are persistent cons
lists, so a configuration snapshot is O(1) and stepping never mutates.

A valid parse tree, including grammar levels elided in the collapsed AST
and terminals the rules left unspecified, is reconstructed from the
instruction log of an accepting run.
"""

from __future__ import annotations

from dataclasses import dataclass, replace  # replace kept for the public step()
from typing import Iterable, Optional, Union

from .grammar import (
    AstNode,
    Enter,
    Exit,
    GrammarDef,
    Literal,
    NonTerminalRef,
    Opt,
    OrderedChoice,
    Pattern,
    PegExpr,
    Repeat0,
    Repeat1,
    Seq,
    Token,
    check_left_recursion,
)
from .transduce import EndOfInput, PartialTarget, SlotBoundary, fragment_events

ROOT_SLOT = 0

START = "start"
ACCEPT = "accept"
ERROR = "error"


class IncompleteLog(Exception):
    pass


# Stack symbols beyond plain grammar expressions ---------------------------

@dataclass(frozen=True)
class CloseNT:
    kind: str
    virtual: bool


@dataclass(frozen=True)
class RepFrame:
    rep_id: tuple[str, int]
    child: PegExpr
    last_count: int


StackSymbol = Union[PegExpr, CloseNT, RepFrame]

# cons-list helpers --------------------------------------------------------

Cons = Optional[tuple]


def cons(head, tail: Cons) -> Cons:
    return (head, tail)


def cons_iter(cell: Cons):
    while cell is not None:
        yield cell[0]
        cell = cell[1]


def cons_find(cell: Cons, key):
    for k, v in cons_iter(cell):
        if k == key:
            return v
    return None


# Instruction records -------------------------------------------------------
# ("open", (kind, virtual), step) | ("close", kind, step)
# ("token", text, step)           | ("choice", (prod, occ, alt), step)
# ("enter_rep", (prod, occ), step) | ("exit_rep", (prod, occ), step)
# ("suspend", slot_id, step) | ("begin_slot", slot_id, step) | ("end_slot", slot_id, step)

Record = tuple


@dataclass(frozen=True)
class PdaConfig:
    state: str = START
    stack: Cons = None
    log: Cons = None                 # newest record first
    obligations: Cons = None         # (slot_id, NonTerminalRef) pairs
    vchain: frozenset = frozenset()  # non-terminals virtually expanded since last consumption
    suspended: int = 0
    consumed: int = 0


_KEEP = object()


def _cfg(base: PdaConfig, state=None, stack=_KEEP, log=_KEEP, obligations=_KEEP,
         vchain=None, suspended=None, consumed=None) -> PdaConfig:
    return PdaConfig(
        state if state is not None else base.state,
        base.stack if stack is _KEEP else stack,
        base.log if log is _KEEP else log,
        base.obligations if obligations is _KEEP else obligations,
        vchain if vchain is not None else base.vchain,
        suspended if suspended is not None else base.suspended,
        consumed if consumed is not None else base.consumed,
    )

def snapshot(cfg: PdaConfig) -> PdaConfig:
    """Configurations are persistent; a snapshot is the configuration itself."""
    return cfg


class Pda:
    def __init__(self, grammar: GrammarDef):
        check_left_recursion(grammar.productions, skip=grammar.left_assoc)
        self.grammar = grammar
        self.bodies: dict[str, PegExpr] = {}
        self.unit_bodies: dict[str, Optional[PegExpr]] = {}
        self.choice_ann: dict[int, tuple[str, int]] = {}
        self.rep_ann: dict[int, tuple[str, int]] = {}
        for name, body in grammar.productions.items():
            pda_body = self._derive_body(name, body)
            self.bodies[name] = pda_body
            self._annotate(name, pda_body, counters={"choice": 0, "rep": 0})
        from .grammar import _nullable
        self.nullable: dict[str, bool] = {
            name: _nullable(body, grammar.productions, frozenset())
            for name, body in grammar.productions.items()
        }
        for name, body in grammar.productions.items():
            # virtual expansions (nodes elided by AST collapsing) can only be
            # single-child chain links, so they derive exactly one element
            unit = self._unit(body)
            self.unit_bodies[name] = unit
            if unit is not None:
                self._annotate(name, unit, counters={"choice": 500, "rep": 500})

    def _unit(self, expr: PegExpr) -> Optional[PegExpr]:
        if isinstance(expr, (NonTerminalRef, Literal, Pattern)):
            return expr
        if isinstance(expr, (Repeat0, Repeat1, Opt)):
            return self._unit(expr.child)
        if isinstance(expr, OrderedChoice):
            alts = []
            for alt in expr.alternatives:
                u = self._unit(alt)
                if u is not None:
                    alts.append(u)
            if not alts:
                return None
            return alts[0] if len(alts) == 1 else OrderedChoice(tuple(alts))
        if isinstance(expr, Seq):
            from .grammar import _nullable
            viable = []
            for i, child in enumerate(expr.children):
                others_nullable = all(
                    _nullable(other, self.grammar.productions, frozenset())
                    for j, other in enumerate(expr.children) if j != i
                )
                if not others_nullable:
                    continue
                u = self._unit(child)
                if u is not None:
                    viable.append(u)
            if not viable:
                return None
            return viable[0] if len(viable) == 1 else OrderedChoice(tuple(viable))
        raise AssertionError(expr)

    def _derive_body(self, name: str, body: PegExpr) -> PegExpr:
        if name not in self.grammar.left_assoc:
            return body
        # Left-associative folds derive left-recursive alternatives,
        # p -> <base> / (<base> | p) <group>, matching the parser's fold
        # shape: the left operand of a fold node is a base or a deeper fold.
        base, repeat = body.children  # validated at load time
        group = repeat.child
        group_items = group.children if isinstance(group, Seq) else (group,)
        rec = Seq((OrderedChoice((base, NonTerminalRef(name))), *group_items))
        return OrderedChoice((base, rec))

    def _annotate(self, prod: str, expr: PegExpr, counters: dict) -> None:
        if isinstance(expr, OrderedChoice):
            self.choice_ann[id(expr)] = (prod, counters["choice"])
            counters["choice"] += 1
            for alt in expr.alternatives:
                self._annotate(prod, alt, counters)
        elif isinstance(expr, Seq):
            for child in expr.children:
                self._annotate(prod, child, counters)
        elif isinstance(expr, (Repeat0, Repeat1, Opt)):
            self.rep_ann[id(expr)] = (prod, counters["rep"])
            counters["rep"] += 1
            self._annotate(prod, expr.child, counters)


def build_pda(grammar: GrammarDef) -> Pda:
    return Pda(grammar)


def initial_config(pda: Pda) -> PdaConfig:
    """Fresh configuration: the stack holds the grammar's start symbol,
    recorded as the root slot's obligation (the whole program is pending)."""
    return PdaConfig(
        stack=cons(NonTerminalRef(pda.grammar.start_symbol), None),
        obligations=cons((ROOT_SLOT, NonTerminalRef(pda.grammar.start_symbol)), None),
    )


InputEvent = Union[Enter, Token, Exit, SlotBoundary, EndOfInput]


def step(pda: Pda, cfg: PdaConfig, event: InputEvent, step_index: int = 0,
         cap: int = 32) -> list[PdaConfig]:
    """All successor configurations after consuming one event, in priority
    order.  A dead end yields the (absorbing) Error configuration."""
    if cfg.state == ERROR:
        return [cfg]
    results = _successors(pda, cfg, event, step_index, cap)
    if not results:
        return [_cfg(cfg, state=ERROR)]
    return results


def _successors(pda: Pda, cfg: PdaConfig, event: InputEvent, step_index: int,
                cap: int) -> list[PdaConfig]:
    results: list[PdaConfig] = []
    work: list[PdaConfig] = [cfg]
    while work and len(results) < cap:
        c = work.pop()
        if c.state != START:
            continue
        top = c.stack[0] if c.stack is not None else None
        rest = c.stack[1] if c.stack is not None else None

        if top is None:
            if isinstance(event, EndOfInput) and c.suspended == 0:
                results.append(_cfg(c, state=ACCEPT, consumed=c.consumed + 1))
            continue

        if isinstance(top, Seq):
            stack = rest
            for child in reversed(top.children):
                stack = cons(child, stack)
            work.append(_cfg(c, stack=stack))
            continue

        if isinstance(top, Opt):
            skip = _cfg(c, stack=rest)
            take = _cfg(c, stack=cons(top.child, rest))
            work.append(skip)   # popped later: greedy branch explored first
            work.append(take)
            continue

        if isinstance(top, (Repeat0, Repeat1)):
            rep_id = pda.rep_ann.get(id(top), ("?", -1))
            frame = RepFrame(rep_id, top.child, -1)
            if isinstance(top, Repeat1):
                log = cons(("enter_rep", rep_id, step_index), c.log)
                work.append(_cfg(c, stack=cons(top.child, cons(frame, rest)), log=log))
            else:
                work.append(_cfg(c, stack=cons(frame, rest)))
            continue

        if isinstance(top, RepFrame):
            exit_log = cons(("exit_rep", top.rep_id, step_index), c.log)
            exit_cfg = _cfg(c, stack=rest, log=exit_log)
            work.append(exit_cfg)  # explored after the greedy iteration branch
            if c.consumed != top.last_count:
                frame = RepFrame(top.rep_id, top.child, c.consumed)
                enter_log = cons(("enter_rep", top.rep_id, step_index), c.log)
                work.append(_cfg(c, stack=cons(top.child, cons(frame, rest)), log=enter_log))
            continue

        if isinstance(top, OrderedChoice):
            prod, occ = pda.choice_ann.get(id(top), ("?", -1))
            for alt_idx in range(len(top.alternatives) - 1, -1, -1):
                log = cons(("choice", (prod, occ, alt_idx), step_index), c.log)
                work.append(_cfg(c, stack=cons(top.alternatives[alt_idx], rest), log=log))
            continue

        if isinstance(top, CloseNT):
            if top.virtual:
                log = cons(("close", top.kind, step_index), c.log)
                work.append(_cfg(c, stack=rest, log=log))
            elif isinstance(event, Exit):
                log = cons(("close", top.kind, step_index), c.log)
                results.append(_cfg(c, stack=rest, log=log,
                                       vchain=frozenset(), consumed=c.consumed + 1))
            continue

        if isinstance(top, NonTerminalRef):
            name = top.name
            if isinstance(event, EndOfInput) and pda.nullable.get(name):
                log = cons(("close", name, step_index),
                           cons(("open", (name, True), step_index), c.log))
                work.append(_cfg(c, stack=rest, log=log))
                continue
            if isinstance(event, Enter) and event.kind == name:
                log = cons(("open", (name, False), step_index), c.log)
                stack = cons(self_body(pda, name), cons(CloseNT(name, False), rest))
                results.append(_cfg(c, stack=stack, log=log,
                                       vchain=frozenset(), consumed=c.consumed + 1))
            if isinstance(event, SlotBoundary):
                log = cons(("suspend", event.slot_id, step_index), c.log)
                obligations = cons((event.slot_id, top), c.obligations)
                results.append(_cfg(c, stack=rest, log=log, obligations=obligations,
                                       vchain=frozenset(), suspended=c.suspended + 1,
                                       consumed=c.consumed + 1))
                continue
            unit = pda.unit_bodies.get(name)
            if unit is not None and name not in c.vchain:
                log = cons(("open", (name, True), step_index), c.log)
                stack = cons(unit, cons(CloseNT(name, True), rest))
                work.append(_cfg(c, stack=stack, log=log, vchain=c.vchain | {name}))
            continue

        if isinstance(top, Literal):
            if isinstance(event, Token) and (event.text == top.text or event.text is None):
                log = cons(("token", top.text, step_index), c.log)
                results.append(_cfg(c, stack=rest, log=log,
                                       vchain=frozenset(), consumed=c.consumed + 1))
            continue

        if isinstance(top, Pattern):
            if isinstance(event, Token):
                if event.text is None:
                    # missing terminal at a pattern position: cannot materialize
                    log = cons(("token", None, step_index), c.log)
                    results.append(_cfg(c, stack=rest, log=log,
                                           vchain=frozenset(), consumed=c.consumed + 1))
                elif top.compiled().fullmatch(event.text) and \
                        event.text not in pda.grammar.word_tokens:
                    log = cons(("token", event.text, step_index), c.log)
                    results.append(_cfg(c, stack=rest, log=log,
                                           vchain=frozenset(), consumed=c.consumed + 1))
            continue

        raise AssertionError(top)
    return results


def self_body(pda: Pda, name: str) -> PegExpr:
    return pda.bodies[name]


@dataclass(frozen=True)
class Verdict:
    ok: bool
    configs: list[PdaConfig]

    @property
    def rejected(self) -> bool:
        return not self.ok


def _dfs_feed(pda: Pda, cfg: PdaConfig, events: list[InputEvent], step_index: int,
              max_nodes: int = 1_000_000):
    """Depth-first exploration over the event sequence with persistent-stack
    backtracking; yields fully-consuming, drained configurations in
    ordered-choice priority order.  ``max_nodes`` bounds pathological inputs."""
    stack: list[tuple[PdaConfig, int]] = [(cfg, 0)]
    nodes = 0
    while stack:
        nodes += 1
        if nodes > max_nodes:
            return
        c, i = stack.pop()
        if i == len(events):
            yield from _drain(pda, c, step_index, cap=8)
            continue
        for succ in reversed(_successors(pda, c, events[i], step_index, cap=256)):
            stack.append((succ, i + 1))


def feed_slot(pda: Pda, configs: Iterable[PdaConfig], slot_id: int,
              events: list[InputEvent], step_index: int, cap: int = 64) -> list[PdaConfig]:
    """Validate one transduction step: the fragment produced for a suspended
    slot, checked against that slot's recorded stack obligation."""
    out: list[PdaConfig] = []
    seen: set = set()
    for cfg in configs:
        if cfg.state != START:
            continue
        obligation = cons_find(cfg.obligations, slot_id)
        if obligation is None:
            continue
        outer_stack = cfg.stack
        suspended = cfg.suspended
        if slot_id == ROOT_SLOT:
            # the initial stack holds the root task itself; feeding it
            # consumes that symbol rather than a boundary suspension
            if outer_stack is not None and outer_stack[0] == obligation:
                outer_stack = outer_stack[1]
        else:
            suspended -= 1
        seed = replace(
            cfg,
            stack=cons(obligation, None),
            log=cons(("begin_slot", slot_id, step_index), cfg.log),
            suspended=suspended,
        )
        for drained in _dfs_feed(pda, seed, events, step_index):
            key = (drained.stack, outer_stack, drained.obligations, drained.suspended)
            if key in seen:
                continue
            seen.add(key)
            out.append(replace(
                drained,
                stack=outer_stack,
                log=cons(("end_slot", slot_id, step_index), drained.log),
            ))
            if len(out) >= cap:
                return out
    return out


def _drain(pda: Pda, cfg: PdaConfig, step_index: int, cap: int) -> list[PdaConfig]:
    """Configurations reachable by epsilon moves alone that have emptied the
    working stack (end of a fragment)."""
    results: list[PdaConfig] = []
    work = [cfg]
    while work and len(results) < cap:
        c = work.pop()
        top = c.stack[0] if c.stack is not None else None
        rest = c.stack[1] if c.stack is not None else None
        if top is None:
            results.append(c)
            continue
        if isinstance(top, Seq):
            stack = rest
            for child in reversed(top.children):
                stack = cons(child, stack)
            work.append(_cfg(c, stack=stack))
        elif isinstance(top, Opt):
            work.append(_cfg(c, stack=rest))
        elif isinstance(top, RepFrame):
            log = cons(("exit_rep", top.rep_id, step_index), c.log)
            work.append(_cfg(c, stack=rest, log=log))
        elif isinstance(top, Repeat0):
            work.append(_cfg(c, stack=rest))
        elif isinstance(top, CloseNT) and top.virtual:
            log = cons(("close", top.kind, step_index), c.log)
            work.append(_cfg(c, stack=rest, log=log))
        elif isinstance(top, OrderedChoice):
            prod, occ = pda.choice_ann.get(id(top), ("?", -1))
            for alt_idx in range(len(top.alternatives) - 1, -1, -1):
                log = cons(("choice", (prod, occ, alt_idx), step_index), c.log)
                work.append(_cfg(c, stack=cons(top.alternatives[alt_idx], rest), log=log))
        # literals, patterns, refs, real closes, Repeat1 require input: dead here
    return results


def validate_increment(pda: Pda, configs: list[PdaConfig], slot_id: int,
                       fragment: PartialTarget, step_index: int, cap: int = 64) -> Verdict:
    """Feed the newly produced fragment of one transduction step."""
    events = list(fragment_events(fragment))
    survivors = feed_slot(pda, configs, slot_id, events, step_index, cap)
    live = [c for c in survivors if c.state == START]
    return Verdict(ok=bool(live), configs=live)


def finish(pda: Pda, configs: Iterable[PdaConfig]) -> list[PdaConfig]:
    """End of input: accept configurations with an empty stack and no
    undischarged slot obligations."""
    out = []
    for cfg in configs:
        for c in _successors(pda, cfg, EndOfInput(), step_index=-1, cap=4):
            if c.state == ACCEPT:
                out.append(c)
    return out


def accepts_traversal(pda: Pda, events: list[InputEvent]) -> Optional[PdaConfig]:
    """Run a complete preorder traversal through the automaton; the first
    accepting configuration, or None."""
    configs = feed_slot(pda, [initial_config(pda)], ROOT_SLOT, events, step_index=0)
    accepted = finish(pda, configs)
    return accepted[0] if accepted else None


# ---------------------------------------------------------------------------
# Parse-tree reconstruction
# ---------------------------------------------------------------------------

@dataclass
class ParseTree:
    root: AstNode
    token_steps: list[int]  # producing transduction step per terminal, in order


def _chronological(log: Cons) -> list[Record]:
    return list(reversed(list(cons_iter(log))))


def _segments(records: list[Record]) -> tuple[list[Record], dict[int, list[Record]]]:
    """Split a chronological log into the root segment plus one segment per
    transduction step (fed slot).  Segments are flat and sequential."""
    segments: dict[int, list[Record]] = {}
    top: list[Record] = []
    current: Optional[int] = None
    depth = 0
    for rec in records:
        op = rec[0]
        if op == "begin_slot":
            depth += 1
            if depth == 1:
                current = rec[1]
                segments[current] = []
                continue
        elif op == "end_slot":
            depth -= 1
            if depth == 0:
                current = None
                continue
        if current is None:
            top.append(rec)
        else:
            segments[current].append(rec)
    return top, segments


def reconstruct_parse_tree(config: PdaConfig) -> ParseTree:
    """Rebuild the full target parse tree from an accepting run's log."""
    if config.state != ACCEPT:
        raise IncompleteLog("log does not belong to an accepting configuration")
    records = _chronological(config.log)
    top, segments = _segments(records)
    if not segments:
        raise IncompleteLog("log has no slot segments")
    token_steps: list[int] = []

    def render(segment: list[Record]) -> list[AstNode]:
        stack: list[tuple[str, list[AstNode]]] = [("", [])]
        for rec in segment:
            op = rec[0]
            if op == "open":
                kind, _virtual = rec[1]
                stack.append((kind, []))
            elif op == "close":
                kind, children = stack.pop()
                stack[-1][1].append(AstNode(kind=kind, children=tuple(children)))
            elif op == "token":
                stack[-1][1].append(AstNode(kind="", text=rec[1], children=None))
                token_steps.append(rec[2])
            elif op == "suspend":
                sub = segments.get(rec[1])
                if sub is None:
                    raise IncompleteLog(f"slot {rec[1]} was never expanded")
                stack[-1][1].extend(render(sub))
        if len(stack) != 1:
            raise IncompleteLog("unbalanced open/close records")
        return stack[0][1]

    root_segment = segments.get(ROOT_SLOT)
    if root_segment is None:
        raise IncompleteLog("missing root segment")
    roots = render(root_segment)
    if len(roots) != 1:
        raise IncompleteLog("root segment did not reduce to one tree")
    return ParseTree(root=roots[0], token_steps=token_steps)


def dump_trace(config: PdaConfig) -> str:
    """Line-oriented instruction trace in final parse order (golden format)."""
    records = _chronological(config.log)
    top, segments = _segments(records)
    lines: list[str] = []

    def emit(segment: list[Record]) -> None:
        for rec in segment:
            op = rec[0]
            if op == "open":
                kind, virtual = rec[1]
                lines.append(f"Open({kind})" + ("*" if virtual else ""))
            elif op == "close":
                lines.append(f"Close({rec[1]})")
            elif op == "token":
                lines.append(f"Token({rec[1]!r})")
            elif op == "choice":
                prod, occ, alt = rec[1]
                lines.append(f"Chose({prod}#{occ}, {alt})")
            elif op == "enter_rep":
                prod, occ = rec[1]
                lines.append(f"EnterRepeat({prod}#{occ})")
            elif op == "exit_rep":
                prod, occ = rec[1]
                lines.append(f"ExitRepeat({prod}#{occ})")
            elif op == "suspend":
                sub = segments.get(rec[1])
                if sub is not None:
                    emit(sub)
                else:
                    lines.append(f"Pending(slot={rec[1]})")
    root = segments.get(ROOT_SLOT)
    if root is not None:
        emit(root)
    else:
        emit(top)
    return "\n".join(lines) + "\n"
