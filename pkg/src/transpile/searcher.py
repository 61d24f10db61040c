"""Test-based search over syntactically valid candidate translations.

Candidates come from a depth-first enumeration of leftmost derivations,
pruned incrementally by the target-grammar automaton.  Each candidate is
executed against unit tests; failures with a line number localize to the
derivation steps that printed that line, and the searcher swaps rule
choices there (one at a time, then two, ...) until the tests pass, the
retry limit is reached, or a slot runs out of alternatives.
"""

from __future__ import annotations

import re
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from itertools import combinations, product
from pathlib import Path
from typing import Iterator, Optional

from .checker import (
    ParseTree,
    Pda,
    PdaConfig,
    finish,
    initial_config,
    reconstruct_parse_tree,
    validate_increment,
)
from .grammar import AstNode, GrammarDef, line_of_offset
from .printer import PrintStyle, DEFAULT_STYLE, print_tokens
from .rules import Ruleset
from .transduce import (
    DerivationPath,
    DerivationTree,
    SlotNode,
    TransductionNode,
    expand_slot,
    init_derivation,
)


# ---------------------------------------------------------------------------
# Candidate generation (derivation search under syntax filtering)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSpan:
    step: int
    rule_id: str
    source_span: Optional[tuple[int, int]]
    target_spans: tuple[tuple[int, int], ...]
    target_lines: tuple[int, ...]


@dataclass
class CandidateTranslation:
    index: int
    target_text: str
    rule_mapping: list[StepSpan]
    path: DerivationPath
    parse_tree: ParseTree
    step_slots: list[SlotNode]  # slot expanded at each step


class StuckSearch(Exception):
    def __init__(self, slot: SlotNode, reason: str):
        span = slot.source_fragment.span
        super().__init__(f"{reason} at {slot.source_fragment.kind!r} (span {span})")
        self.slot = slot
        self.reason = reason


BEAM = 16
WIDE_BEAM = 2048


def _cons_to_list(cell) -> list:
    out = []
    while cell is not None:
        out.append(cell[0])
        cell = cell[1]
    out.reverse()
    return out


class CandidateGenerator:
    """Enumerates complete, syntax-valid derivations in priority order.

    ``forced`` pins a rule choice per source node (hard); ``preferred``
    reorders alternatives to try a rule first (soft).  Ordering is
    otherwise the transducer's specificity order, explored depth-first.
    """

    def __init__(self, source: AstNode, ruleset: Ruleset, grammar: GrammarDef,
                 pda: Pda, style: PrintStyle = DEFAULT_STYLE):
        self.source = source
        self.ruleset = ruleset
        self.grammar = grammar
        self.pda = pda
        self.style = style
        self.tree: DerivationTree = init_derivation(source)
        self._trail: Optional[list[list]] = None  # frames of the last candidate

    def _wide_replay(self, feeds: list[tuple[int, object]]) -> list:
        configs = [initial_config(self.pda)]
        for step_index, (slot_id, fragment) in enumerate(feeds):
            verdict = validate_increment(
                self.pda, configs, slot_id, fragment, step_index, cap=WIDE_BEAM)
            if not verdict.ok:
                return []
            configs = verdict.configs
        return configs

    def candidates(self, forced: Optional[dict[int, str]] = None,
                   preferred: Optional[dict[int, str]] = None,
                   resume: bool = False) -> Iterator[CandidateTranslation]:
        """Yield complete, syntax-valid candidates depth-first.

        With ``resume`` the derivation restarts from the last yielded
        candidate's snapshot at the first step whose choice differs, instead
        of re-validating the unchanged prefix.
        """
        forced = forced or {}
        preferred = preferred or {}
        tree = self.tree
        first_no_rule: Optional[SlotNode] = None
        best_rejected: Optional[SlotNode] = None
        produced = 0

        def order(slot: SlotNode, alts: list[TransductionNode]) -> list[int]:
            node_key = id(slot.source_fragment)
            if node_key in forced:
                return [i for i, t in enumerate(alts) if t.rule_id == forced[node_key]]
            want = preferred.get(node_key)
            if want is not None:
                idxs = [i for i, t in enumerate(alts) if t.rule_id == want]
                return idxs + [i for i in range(len(alts)) if i not in idxs]
            return list(range(len(alts)))

        # frame: [pending, configs, alt order, next position, path-cons,
        #         slots-cons, feeds-cons, depth, beam-truncation flag]
        start_frame = [
            [tree.root], [initial_config(self.pda)], None, 0, None, None, None, 0, False,
        ]
        stack: list[list] = [start_frame]
        if resume and self._trail:
            stack = self._resume_stack(forced, preferred) or stack
        while stack:
            frame = stack[-1]
            pending, configs, order_idx, pos, path, slots_c, feeds, depth, truncated = frame
            if not pending:
                stack.pop()
                accepted = finish(self.pda, configs)
                if accepted:
                    produced += 1
                    self._trail = [list(f) for f in stack] + [list(frame)]
                    yield self._assemble_from(produced, path, accepted[0], slots_c, depth)
                continue
            slot = pending[0]
            alts = expand_slot(tree, slot, self.ruleset)
            if order_idx is None:
                order_idx = order(slot, alts)
                frame[2] = order_idx
                if not alts and first_no_rule is None:
                    first_no_rule = slot
            advanced = False
            while pos < len(order_idx):
                t = alts[order_idx[pos]]
                pos += 1
                verdict = validate_increment(
                    self.pda, configs, slot.slot_id, t.produced, depth, cap=BEAM)
                new_configs = verdict.configs
                if not verdict.ok and truncated and len(configs) >= BEAM:
                    # a saturated beam may have dropped the surviving branch
                    # upstream; re-validate the whole prefix exactly before
                    # rejecting
                    new_configs = self._wide_replay(
                        _cons_to_list(feeds) + [(slot.slot_id, t.produced)])
                if new_configs:
                    frame[3] = pos
                    new_pending = list(t.child_slots) + pending[1:]
                    stack.append([
                        new_pending, new_configs, None, 0,
                        ((slot.slot_id, t.rule_id), path),
                        (slot, slots_c),
                        ((slot.slot_id, t.produced), feeds),
                        depth + 1,
                        truncated or len(new_configs) >= BEAM,
                    ])
                    advanced = True
                    break
                best_rejected = slot
            if not advanced:
                stack.pop()
        if produced == 0:
            if first_no_rule is not None:
                raise StuckSearch(first_no_rule, "no rule applies")
            if best_rejected is not None:
                raise StuckSearch(best_rejected, "all rule choices are syntactically invalid")
            raise StuckSearch(tree.root, "no derivation found")

    def _resume_stack(self, forced: dict[int, str],
                      preferred: dict[int, str]) -> Optional[list[list]]:
        """Frames of the last yielded candidate up to (excluding) the first
        step whose choice would change under the new forced/preferred maps."""
        trail = self._trail
        for i, frame in enumerate(trail[:-1]):
            slot = frame[0][0]
            node_key = id(slot.source_fragment)
            chosen = trail[i + 1][4][0][1]  # rule chosen at this step
            want = forced.get(node_key, preferred.get(node_key, chosen))
            if want != chosen:
                return [list(f) for f in trail[:i]] + [
                    [frame[0], frame[1], None, 0, frame[4], frame[5], frame[6],
                     frame[7], frame[8]]
                ]
        return None

    def _assemble_from(self, index: int, path_cons, config: PdaConfig,
                       slots_cons, depth: int) -> CandidateTranslation:
        choices = _cons_to_list(path_cons)
        slots = _cons_to_list(slots_cons)
        assert len(choices) == len(slots) == depth
        return self._assemble(index, DerivationPath(tuple(choices)), config, slots)

    def _assemble(self, index: int, path: DerivationPath, config: PdaConfig,
                  slots: list[SlotNode]) -> CandidateTranslation:
        pt = reconstruct_parse_tree(config)
        text, tokens = print_tokens(pt.root, self.grammar, self.style)
        by_step: dict[int, list[tuple[int, int]]] = {}
        for i, tok in enumerate(tokens):
            step = pt.token_steps[tok.index] if tok.index < len(pt.token_steps) else -1
            by_step.setdefault(step, []).append((tok.start, tok.end))
        mapping: list[StepSpan] = []
        for step, (slot_id, rule_id) in enumerate(path.choices):
            spans = tuple(by_step.get(step, ()))
            lines = tuple(sorted({line_of_offset(text, s) for s, _ in spans}))
            mapping.append(StepSpan(
                step=step,
                rule_id=rule_id,
                source_span=slots[step].source_fragment.span,
                target_spans=spans,
                target_lines=lines,
            ))
        return CandidateTranslation(
            index=index,
            target_text=text,
            rule_mapping=mapping,
            path=path,
            parse_tree=pt,
            step_slots=slots,
        )


# ---------------------------------------------------------------------------
# Test running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunnerProfile:
    command: tuple[str, ...]
    suffix: str
    prelude: str = ""
    error_patterns: tuple[str, ...] = ()
    timeout: float = 10.0


NODE_RUNNER = RunnerProfile(
    command=("node",),
    suffix=".js",
    prelude='"use strict";\n',
    error_patterns=(
        r"^\s+at .*?:(?P<line>\d+):\d+",
        r"^[^\s:]*\.js:(?P<line>\d+)$",
    ),
)

PYTHON_RUNNER = RunnerProfile(
    command=("python3",),
    suffix=".py",
    error_patterns=(r'File ".*?", line (?P<line>\d+)',),
)


class RunnerUnavailable(Exception):
    pass


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class, despite the spec-given name

    case_id: str
    driver_source: str
    driver_target: str
    expected_output: str


@dataclass
class TestReport:
    __test__ = False

    verdict: str  # "pass" | "runtime_error" | "output_mismatch"
    line: Optional[int] = None       # program line for runtime errors
    message: str = ""
    stdout: str = ""
    stderr: str = ""
    duration: float = 0.0
    case_id: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def run_program(runner: RunnerProfile, text: str, workdir: Optional[Path] = None) -> tuple[int, str, str]:
    with tempfile.NamedTemporaryFile(
        "w", suffix=runner.suffix, dir=workdir, delete=False
    ) as handle:
        handle.write(text)
        path = handle.name
    try:
        proc = subprocess.run(
            [*runner.command, path],
            capture_output=True,
            text=True,
            timeout=runner.timeout,
        )
        return proc.returncode, proc.stdout, proc.stderr
    except FileNotFoundError as exc:
        raise RunnerUnavailable(str(runner.command)) from exc
    except subprocess.TimeoutExpired:
        return -1, "", "timeout"
    finally:
        Path(path).unlink(missing_ok=True)


def _extract_line(stderr: str, patterns: tuple[str, ...]) -> Optional[int]:
    for pattern in patterns:
        for m in re.finditer(pattern, stderr, re.MULTILINE):
            return int(m.group("line"))
    return None


def _first_error_message(stderr: str) -> str:
    for line in stderr.splitlines():
        if "Error" in line:
            return line.strip()
    return stderr.strip().splitlines()[-1] if stderr.strip() else ""


def run_tests(candidate: CandidateTranslation, tests: list[TestCase],
              runner: RunnerProfile = NODE_RUNNER) -> TestReport:
    """Execute the candidate with each test driver; first failure wins."""
    program_lines = candidate.target_text.count("\n")
    prelude_lines = runner.prelude.count("\n")
    start = time.monotonic()
    for case in tests:
        text = runner.prelude + candidate.target_text + case.driver_target
        code, stdout, stderr = run_program(runner, text)
        duration = time.monotonic() - start
        if code != 0:
            raw_line = _extract_line(stderr, runner.error_patterns)
            line = None
            if raw_line is not None:
                line = raw_line - prelude_lines
                if not (1 <= line <= program_lines):
                    line = None
            return TestReport(
                verdict="runtime_error", line=line,
                message=_first_error_message(stderr) or f"exit code {code}",
                stdout=stdout, stderr=stderr, duration=duration, case_id=case.case_id,
            )
        if stdout.splitlines() != case.expected_output.splitlines():
            first_diff = _first_differing_line(stdout, case.expected_output)
            return TestReport(
                verdict="output_mismatch", line=None,
                message=f"output differs at line {first_diff}",
                stdout=stdout, duration=duration, case_id=case.case_id,
            )
    return TestReport(verdict="pass", duration=time.monotonic() - start)


def _first_differing_line(got: str, want: str) -> int:
    got_lines = got.splitlines()
    want_lines = want.splitlines()
    for i in range(max(len(got_lines), len(want_lines))):
        a = got_lines[i] if i < len(got_lines) else None
        b = want_lines[i] if i < len(want_lines) else None
        if a != b:
            return i + 1
    return 0


# ---------------------------------------------------------------------------
# Fault localization
# ---------------------------------------------------------------------------

class NoLocation(Exception):
    pass


def localize_fault(report: TestReport, candidate: CandidateTranslation) -> list[int]:
    """Derivation step indices whose printed tokens touch the faulty line."""
    if report.line is None:
        raise NoLocation(report.message)
    steps = [
        span.step for span in candidate.rule_mapping
        if report.line in span.target_lines
    ]
    if not steps:
        raise NoLocation(f"line {report.line} maps to no derivation step")
    return steps


# ---------------------------------------------------------------------------
# The search loop
# ---------------------------------------------------------------------------

@dataclass
class SearchOutcome:
    status: str  # "success" | "stuck" | "exhausted"
    candidate: Optional[CandidateTranslation] = None
    retries: int = 0
    reports: list[TestReport] = field(default_factory=list)
    stuck_span: Optional[tuple[int, int]] = None
    stuck_kind: str = ""
    tested_paths: list[tuple[str, ...]] = field(default_factory=list)
    candidates: list[CandidateTranslation] = field(default_factory=list)


MAX_COMBOS_PER_K = 512


def search(
    source: AstNode,
    ruleset: Ruleset,
    tests: list[TestCase],
    grammar: GrammarDef,
    pda: Pda,
    retry_limit: int = 20,
    runner: RunnerProfile = NODE_RUNNER,
    style: PrintStyle = DEFAULT_STYLE,
    forced: Optional[dict[int, str]] = None,
) -> SearchOutcome:
    gen = CandidateGenerator(source, ruleset, grammar, pda, style)
    global_iter = gen.candidates(forced=dict(forced or {}))
    tested: set[tuple[str, ...]] = set()
    tested_paths: list[tuple[str, ...]] = []
    reports: list[TestReport] = []
    candidates: list[CandidateTranslation] = []

    def stuck(slot_or_span, kind: str) -> SearchOutcome:
        return SearchOutcome(
            status="stuck",
            candidate=None,
            retries=len(reports),
            reports=reports,
            stuck_span=slot_or_span,
            stuck_kind=kind,
            tested_paths=tested_paths,
            candidates=candidates,
        )

    try:
        candidate = next(global_iter)
    except StuckSearch as exc:
        return stuck(exc.slot.source_fragment.span, exc.slot.source_fragment.kind)
    except StopIteration:
        return SearchOutcome(status="stuck", reports=reports)

    while True:
        key = candidate.path.rule_ids()
        tested.add(key)
        tested_paths.append(key)
        candidate.index = len(tested_paths)
        candidates.append(candidate)
        report = run_tests(candidate, tests, runner)
        reports.append(report)
        if report.passed:
            return SearchOutcome(
                status="success", candidate=candidate, retries=len(reports),
                reports=reports, tested_paths=tested_paths, candidates=candidates,
            )
        if len(reports) >= retry_limit:
            return SearchOutcome(
                status="exhausted", candidate=candidate, retries=len(reports),
                reports=reports, tested_paths=tested_paths, candidates=candidates,
            )
        try:
            segment = localize_fault(report, candidate)
        except NoLocation:
            segment = None
        nxt = None
        if segment is not None:
            nxt = _next_segment_candidate(gen, candidate, segment, tested, forced or {})
            if nxt is None:
                span = _segment_span(candidate, segment)
                return stuck(span, "no alternatives left on the fault line")
        else:
            for cand in global_iter:
                if cand.path.rule_ids() not in tested:
                    nxt = cand
                    break
            if nxt is None:
                return SearchOutcome(
                    status="exhausted", candidate=candidate, retries=len(reports),
                    reports=reports, tested_paths=tested_paths, candidates=candidates,
                )
        candidate = nxt


def _segment_span(candidate: CandidateTranslation, segment: list[int]) -> Optional[tuple[int, int]]:
    spans = [candidate.rule_mapping[s].source_span for s in segment
             if candidate.rule_mapping[s].source_span]
    if not spans:
        return None
    return (min(s for s, _ in spans), max(e for _, e in spans))


def _next_segment_candidate(
    gen: CandidateGenerator,
    base: CandidateTranslation,
    segment: list[int],
    tested: set[tuple[str, ...]],
    hard_forced: dict[int, str],
) -> Optional[CandidateTranslation]:
    """Enumerate candidates changing 1, then 2, ... rule choices within the
    fault segment, keeping the base path's choices elsewhere."""
    base_prefs = {
        id(slot.source_fragment): rule_id
        for slot, (_, rule_id) in zip(base.step_slots, base.path.choices)
    }
    seg_nodes = []
    for step in segment:
        slot = base.step_slots[step]
        node_key = id(slot.source_fragment)
        if node_key in hard_forced:
            continue
        alts = expand_slot(gen.tree, slot, gen.ruleset)
        current = base.path.choices[step][1]
        others = [t.rule_id for t in alts if t.rule_id != current]
        if others:
            seg_nodes.append((node_key, others))
    for k in range(1, len(seg_nodes) + 1):
        tried = 0
        for combo in combinations(range(len(seg_nodes)), k):
            option_lists = [seg_nodes[i][1] for i in combo]
            for assignment in product(*option_lists):
                if tried >= MAX_COMBOS_PER_K:
                    break
                tried += 1
                forced = dict(hard_forced)
                for slot_pos, rule_id in zip(combo, assignment):
                    forced[seg_nodes[slot_pos][0]] = rule_id
                try:
                    for cand in gen.candidates(forced=forced, preferred=base_prefs,
                                               resume=True):
                        if cand.path.rule_ids() not in tested:
                            return cand
                        break  # only the first valid candidate per assignment
                except StuckSearch:
                    continue
    return None


# ---------------------------------------------------------------------------
# One-shot translation (drivers, translate-only mode)
# ---------------------------------------------------------------------------

def first_candidate(source: AstNode, ruleset: Ruleset, grammar: GrammarDef,
                    pda: Pda, style: PrintStyle = DEFAULT_STYLE) -> CandidateTranslation:
    gen = CandidateGenerator(source, ruleset, grammar, pda, style)
    return next(gen.candidates())
