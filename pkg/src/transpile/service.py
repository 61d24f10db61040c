"""HTTP session service: the backend for the translation inspector and
rule editor.  Sessions are in-memory; rulesets persist to disk on mutation
with optimistic version checks (409 on conflict)."""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import bundled
from .checker import build_pda
from .grammar import AstNode, ParseError, line_of_offset, parse_source
from .inference import InferenceError, infer_rule_detailed
from .printer import bloat_ratio
from .rules import (
    DanglingReference,
    DanglingTemplateIndex,
    Expander,
    NTExpander,
    NTExpanderTpl,
    Reference,
    Rule,
    Ruleset,
    parse_ruleset,
    serialize_rule,
    serialize_ruleset,
    validate_rule,
    _collect_matchers,
    _collect_expanders,
    _with_id,
)
from .searcher import (
    PYTHON_RUNNER,
    CandidateTranslation,
    SearchOutcome,
    StuckSearch,
    TestCase,
    first_candidate,
    run_program,
    search,
)


# ---------------------------------------------------------------------------
# Ruleset persistence
# ---------------------------------------------------------------------------

class RulesetStore:
    def __init__(self, directory: Path):
        self.directory = directory
        self.lock = threading.Lock()
        self.versions: dict[str, int] = {}
        self.rulesets: dict[str, Ruleset] = {}
        directory.mkdir(parents=True, exist_ok=True)
        for path in sorted(directory.glob("*.rules")):
            name = path.stem
            self.rulesets[name] = parse_ruleset(path.read_text(), name)
            self.versions[name] = 1
        for name in bundled.RULESET_NAMES:
            if name not in self.rulesets:
                self.rulesets[name] = parse_ruleset(bundled.ruleset_text(name), name)
                self.versions[name] = 1

    def get(self, name: str) -> Ruleset:
        if name not in self.rulesets:
            raise HTTPException(404, f"ruleset {name!r} not found")
        return self.rulesets[name]

    def version(self, name: str) -> int:
        return self.versions.get(name, 0)

    def save(self, name: str, ruleset: Ruleset, expect_version: Optional[int]) -> int:
        with self.lock:
            current = self.versions.get(name, 0)
            if expect_version is not None and expect_version != current:
                raise HTTPException(409, f"ruleset {name!r} is at version {current}, "
                                         f"request expected {expect_version}")
            self.rulesets[name] = ruleset
            self.versions[name] = current + 1
            (self.directory / f"{name}.rules").write_text(serialize_ruleset(ruleset))
            return self.versions[name]


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------

@dataclass
class Session:
    session_id: str
    source_text: str
    ruleset_name: str
    source_ast: AstNode
    tests: list[TestCase] = field(default_factory=list)
    retry_limit: int = 20
    outcomes: list[SearchOutcome] = field(default_factory=list)
    candidates: list[CandidateTranslation] = field(default_factory=list)
    pending_prompt: Optional[dict] = None
    overrides: dict[int, str] = field(default_factory=dict)  # node id -> rule id
    lock: threading.Lock = field(default_factory=threading.Lock)


def find_node(root: AstNode, span: tuple[int, int], occurrence: int = 0) -> Optional[AstNode]:
    """Resolve a slot locator (source span, occurrence index) to a node."""
    hits = [n for n in root.walk() if not n.is_terminal and n.span == tuple(span)]
    if occurrence < len(hits):
        return hits[occurrence]
    return None


# ---------------------------------------------------------------------------
# API models (v1)
# ---------------------------------------------------------------------------

class SessionRequest(BaseModel):
    v: int = 1
    source: str
    rules: str = "corpus"
    driver: Optional[str] = None
    expected: Optional[str] = None
    retry_limit: int = 20


class OverrideItem(BaseModel):
    source_span: tuple[int, int]
    occurrence: int = 0
    rule_id: str


class OverridesRequest(BaseModel):
    v: int = 1
    overrides: list[OverrideItem]


class SnippetsRequest(BaseModel):
    v: int = 1
    src_lines: str
    trg_lines: str


class RulesetCreate(BaseModel):
    v: int = 1
    name: str
    text: str


class PatchLinks(BaseModel):
    v: int = 1
    version: int
    links: dict[int, int]  # reference position (1-based, preorder) -> capture index


# ---------------------------------------------------------------------------
# App factory
# ---------------------------------------------------------------------------

def create_app(rulesets_dir: Path = Path("rules")) -> FastAPI:
    app = FastAPI(title="transpile service", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    store = RulesetStore(rulesets_dir)
    sessions: dict[str, Session] = {}
    src_grammar = bundled.bundled_grammar("python_subset")
    tgt_grammar = bundled.bundled_grammar("js_subset")
    pda = build_pda(tgt_grammar)

    def outcome_payload(session: Session, outcome: SearchOutcome) -> dict:
        payload: dict[str, Any] = {
            "status": outcome.status,
            "retries": outcome.retries,
            "candidate_count": len(session.candidates),
            "reports": [
                {"verdict": r.verdict, "line": r.line, "message": r.message}
                for r in outcome.reports
            ],
        }
        if outcome.candidate is not None:
            payload["candidate_index"] = session.candidates.index(outcome.candidate) + 1
            payload["target_text"] = outcome.candidate.target_text
            payload["bloat"] = round(
                bloat_ratio(session.source_text, outcome.candidate.target_text), 3)
        if outcome.status == "stuck":
            payload["prompt"] = session.pending_prompt
        return payload

    def run_session_search(session: Session) -> SearchOutcome:
        ruleset = store.get(session.ruleset_name)
        forced = dict(session.overrides) or None
        if session.tests:
            outcome = search(
                session.source_ast, ruleset, session.tests, tgt_grammar, pda,
                retry_limit=session.retry_limit, forced=forced)
        else:
            try:
                cand = first_candidate(session.source_ast, ruleset, tgt_grammar, pda) \
                    if not forced else _forced_candidate(session, ruleset)
                outcome = SearchOutcome(status="success", candidate=cand,
                                        retries=0, candidates=[cand])
            except StuckSearch as exc:
                outcome = SearchOutcome(
                    status="stuck",
                    stuck_span=exc.slot.source_fragment.span,
                    stuck_kind=exc.slot.source_fragment.kind,
                )
        session.outcomes.append(outcome)
        for cand in outcome.candidates:
            session.candidates.append(cand)
        if outcome.status == "stuck":
            span = outcome.stuck_span
            session.pending_prompt = {
                "span": span,
                "kind": outcome.stuck_kind,
                "line": line_of_offset(session.source_text, span[0]) if span else None,
                "snippet": session.source_text[span[0]:span[1]] if span else "",
            }
        else:
            session.pending_prompt = None
        return outcome

    def _forced_candidate(session: Session, ruleset: Ruleset) -> CandidateTranslation:
        from .searcher import CandidateGenerator
        gen = CandidateGenerator(session.source_ast, ruleset, tgt_grammar, pda)
        return next(gen.candidates(forced=dict(session.overrides)))

    @app.post("/sessions", status_code=201)
    def create_session(req: SessionRequest):
        store.get(req.rules)
        try:
            ast = parse_source(src_grammar, req.source)
        except ParseError as exc:
            raise HTTPException(422, f"source does not parse: {exc}")
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            source_text=req.source,
            ruleset_name=req.rules,
            source_ast=ast,
            retry_limit=req.retry_limit,
        )
        if req.driver:
            expected = req.expected
            if expected is None:
                code, expected, err = run_program(PYTHON_RUNNER, req.source + req.driver)
                if code != 0:
                    raise HTTPException(422, f"source run failed: {err[:200]}")
            try:
                driver_ast = parse_source(src_grammar, req.driver)
                driver_cand = first_candidate(
                    driver_ast, store.get(req.rules), tgt_grammar, pda)
            except (ParseError, StuckSearch) as exc:
                raise HTTPException(422, f"driver cannot be prepared: {exc}")
            session.tests = [TestCase("t1", req.driver, driver_cand.target_text, expected)]
        sessions[session.session_id] = session
        with session.lock:
            outcome = run_session_search(session)
        return {"v": 1, "session_id": session.session_id,
                "outcome": outcome_payload(session, outcome)}

    def get_session_or_404(session_id: str) -> Session:
        if session_id not in sessions:
            raise HTTPException(404, "session not found")
        return sessions[session_id]

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = get_session_or_404(session_id)
        return {
            "v": 1,
            "session_id": session.session_id,
            "source": session.source_text,
            "rules": session.ruleset_name,
            "candidate_count": len(session.candidates),
            "pending_prompt": session.pending_prompt,
            "outcomes": [outcome_payload(session, o) for o in session.outcomes],
        }

    @app.get("/sessions/{session_id}/candidates/{index}")
    def get_candidate(session_id: str, index: int):
        session = get_session_or_404(session_id)
        if not (1 <= index <= len(session.candidates)):
            raise HTTPException(404, "candidate index out of range")
        cand = session.candidates[index - 1]
        mapping = []
        for span in cand.rule_mapping:
            for target_span in span.target_spans:
                mapping.append({
                    "target_span": list(target_span),
                    "target_line": line_of_offset(cand.target_text, target_span[0]),
                    "source_span": list(span.source_span) if span.source_span else None,
                    "source_line": (line_of_offset(session.source_text, span.source_span[0])
                                    if span.source_span else None),
                    "rule_id": span.rule_id,
                    "step": span.step,
                })
        return {"v": 1, "index": index, "text": cand.target_text, "mapping": mapping}

    @app.post("/sessions/{session_id}/overrides")
    def post_overrides(session_id: str, req: OverridesRequest):
        session = get_session_or_404(session_id)
        ruleset = store.get(session.ruleset_name)
        with session.lock:
            for item in req.overrides:
                node = find_node(session.source_ast, item.source_span, item.occurrence)
                if node is None:
                    raise HTTPException(422, f"no node at span {item.source_span}")
                try:
                    ruleset.by_id(item.rule_id)
                except KeyError:
                    raise HTTPException(422, f"rule {item.rule_id!r} not in active ruleset")
                session.overrides[id(node)] = item.rule_id
            outcome = run_session_search(session)
        return {"v": 1, "outcome": outcome_payload(session, outcome)}

    @app.post("/sessions/{session_id}/snippets")
    def post_snippets(session_id: str, req: SnippetsRequest):
        session = get_session_or_404(session_id)
        try:
            result = infer_rule_detailed(
                req.src_lines, req.trg_lines, src_grammar, tgt_grammar)
        except (InferenceError, ParseError) as exc:
            raise HTTPException(422, f"inference failed: {exc}")
        ruleset = store.get(session.ruleset_name)
        if all(r.rule_id != result.rule.rule_id for r in ruleset.rules):
            new_rule = result.rule.with_order(len(ruleset.rules))
            updated = Ruleset(ruleset.name, ruleset.rules + [new_rule])
            store.save(session.ruleset_name, updated, expect_version=None)
        with session.lock:
            outcome = run_session_search(session)
        return {
            "v": 1,
            "rule": rule_payload(result.rule),
            "notes": result.notes,
            "ambiguous": result.ambiguous,
            "outcome": outcome_payload(session, outcome),
        }

    @app.get("/rulesets")
    def list_rulesets():
        return {
            "v": 1,
            "rulesets": [
                {"name": name, "version": store.version(name), "rules": len(rs.rules)}
                for name, rs in sorted(store.rulesets.items())
            ],
        }

    @app.post("/rulesets", status_code=201)
    def create_ruleset(req: RulesetCreate):
        if req.name in store.rulesets:
            raise HTTPException(409, f"ruleset {req.name!r} already exists")
        try:
            ruleset = parse_ruleset(req.text, req.name)
        except Exception as exc:
            raise HTTPException(422, f"ruleset does not parse: {exc}")
        version = store.save(req.name, ruleset, expect_version=None)
        return {"v": 1, "name": req.name, "version": version, "rules": len(ruleset.rules)}

    @app.get("/rulesets/{name}/rules/{rule_id}")
    def get_rule(name: str, rule_id: str):
        ruleset = store.get(name)
        try:
            rule = ruleset.by_id(rule_id)
        except KeyError:
            raise HTTPException(404, "rule not found")
        return {"v": 1, "version": store.version(name), **rule_payload(rule)}

    @app.patch("/rulesets/{name}/rules/{rule_id}")
    def patch_rule(name: str, rule_id: str, req: PatchLinks):
        ruleset = store.get(name)
        current = store.version(name)
        if req.version != current:
            raise HTTPException(409, f"ruleset {name!r} is at version {current}, "
                                     f"request expected {req.version}")
        try:
            rule = ruleset.by_id(rule_id)
        except KeyError:
            raise HTTPException(404, "rule not found")
        new_expander = _relink(rule.trg_pattern, req.links)
        candidate = Rule(rule.src_pattern, new_expander,
                         provenance="hand_edited", source_order=rule.source_order)
        try:
            validate_rule(candidate)
        except (DanglingReference, DanglingTemplateIndex) as exc:
            raise HTTPException(422, f"invalid links: {exc}")
        candidate = _with_id(candidate)
        rules = [candidate if r.rule_id == rule_id else r for r in ruleset.rules]
        version = store.save(name, Ruleset(name, rules), expect_version=req.version)
        return {"v": 1, "version": version, **rule_payload(candidate)}

    @app.get("/grammars")
    def get_grammars():
        return {"v": 1, "grammars": bundled.grammar_manifest()}

    return app


def rule_payload(rule: Rule) -> dict:
    captures: list = []
    templates: list = []
    _collect_matchers(rule.src_pattern, captures, templates)
    refs: list = []
    etpls: list = []
    _collect_expanders(rule.trg_pattern, refs, etpls)
    return {
        "rule_id": rule.rule_id,
        "provenance": rule.provenance,
        "text": serialize_rule(rule),
        "captures": [{"position": i + 1, "mode": c.mode} for i, c in enumerate(captures)],
        "references": [
            {"position": i + 1, "mode": r.mode, "capture_index": r.index}
            for i, r in enumerate(refs)
        ],
    }


def _relink(expander: Expander, links: dict[int, int]) -> Expander:
    counter = [0]

    def walk(e: Expander) -> Expander:
        if isinstance(e, Reference):
            counter[0] += 1
            new_index = links.get(counter[0], e.index)
            return Reference(e.mode, new_index)
        if isinstance(e, NTExpander):
            return NTExpander(e.symbol, tuple(walk(c) for c in e.children))
        if isinstance(e, NTExpanderTpl):
            return NTExpanderTpl(e.index, tuple(walk(c) for c in e.children))
        return e

    return walk(expander)
