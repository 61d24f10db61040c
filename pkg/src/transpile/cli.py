"""Command-line interface: translate, bench, infer, check, serve."""

from __future__ import annotations

import argparse
import json
import shlex
import sys
import time
from pathlib import Path

from . import bundled
from .checker import build_pda, accepts_traversal, dump_trace
from .grammar import GrammarDef, ParseError, load_grammar, parse_source, preorder
from .inference import InferenceError, infer_rule_detailed
from .printer import EmptySource, bloat_ratio
from .rules import Ruleset, parse_ruleset, serialize_rule
from .searcher import (
    NODE_RUNNER,
    PYTHON_RUNNER,
    RunnerProfile,
    StuckSearch,
    TestCase,
    first_candidate,
    run_program,
    search,
)

EXIT_OK = 0
EXIT_STUCK = 2
EXIT_EXHAUSTED = 3
EXIT_SETUP = 4


def _load_grammar_arg(arg: str) -> GrammarDef:
    if arg in bundled.GRAMMAR_NAMES:
        return bundled.bundled_grammar(arg)
    return load_grammar(Path(arg).read_text())


def _load_rules(args_rules: list[str]) -> Ruleset:
    texts = []
    for arg in args_rules:
        if arg in bundled.RULESET_NAMES:
            texts.append(bundled.ruleset_text(arg))
        else:
            texts.append(Path(arg).read_text())
    merged = "\n".join(texts)
    return parse_ruleset(merged, name="+".join(args_rules))


def _runner(arg: str | None, default: RunnerProfile) -> RunnerProfile:
    if not arg:
        return default
    cmd = tuple(shlex.split(arg))
    return RunnerProfile(
        command=cmd,
        suffix=default.suffix,
        prelude=default.prelude,
        error_patterns=default.error_patterns,
        timeout=default.timeout,
    )


def _prepare_tests(source_text: str, bench_dir: Path, *, src_grammar, ruleset,
                   tgt_grammar, pda, src_runner, trace=False) -> tuple[list[TestCase], str]:
    driver_path = bench_dir / "driver"
    if not driver_path.exists():
        raise FileNotFoundError(f"{driver_path} missing")
    driver_src = driver_path.read_text()
    expected_path = bench_dir / "expected"
    if expected_path.exists():
        expected = expected_path.read_text()
    else:
        code, expected, err = run_program(src_runner, source_text + driver_src)
        if code != 0:
            raise RuntimeError(f"source run failed: {err.strip()[:200]}")
    driver_ast = parse_source(src_grammar, driver_src)
    driver_cand = first_candidate(driver_ast, ruleset, tgt_grammar, pda)
    return [TestCase(bench_dir.name, driver_src, driver_cand.target_text, expected)], expected


def cmd_translate(args) -> int:
    src_grammar = _load_grammar_arg(args.src_grammar)
    tgt_grammar = _load_grammar_arg(args.tgt_grammar)
    ruleset = _load_rules(args.rules)
    pda = build_pda(tgt_grammar)
    source_text = Path(args.src).read_text()
    try:
        ast = parse_source(src_grammar, source_text)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_SETUP
    out_dir = Path(args.out) if args.out else Path(args.src).parent
    out_dir.mkdir(parents=True, exist_ok=True)

    if not args.tests:
        try:
            cand = first_candidate(ast, ruleset, tgt_grammar, pda)
        except StuckSearch as exc:
            _write_stuck(out_dir, source_text, exc)
            return EXIT_STUCK
        _write_candidate(out_dir, cand, args.trace)
        print(cand.target_text, end="")
        return EXIT_OK

    try:
        tests, _ = _prepare_tests(
            source_text, Path(args.tests), src_grammar=src_grammar, ruleset=ruleset,
            tgt_grammar=tgt_grammar, pda=pda, src_runner=_runner(args.src_runner, PYTHON_RUNNER))
    except (StuckSearch, FileNotFoundError, RuntimeError) as exc:
        print(f"test setup error: {exc}", file=sys.stderr)
        return EXIT_SETUP
    outcome = search(ast, ruleset, tests, tgt_grammar, pda,
                     retry_limit=args.retry_limit,
                     runner=_runner(args.tgt_runner, NODE_RUNNER))
    _write_retry_log(out_dir, outcome)
    if outcome.status == "success":
        _write_candidate(out_dir, outcome.candidate, args.trace)
        print(outcome.candidate.target_text, end="")
        return EXIT_OK
    if outcome.status == "stuck":
        _write_stuck_outcome(out_dir, source_text, outcome)
        print(f"stuck: cannot translate span {outcome.stuck_span} "
              f"({outcome.stuck_kind})", file=sys.stderr)
        return EXIT_STUCK
    print(f"exhausted after {outcome.retries} candidates", file=sys.stderr)
    return EXIT_EXHAUSTED


def _write_candidate(out_dir: Path, cand, trace: bool) -> None:
    (out_dir / "translated.js").write_text(cand.target_text)
    mapping = [
        {
            "step": s.step,
            "rule_id": s.rule_id,
            "source_span": s.source_span,
            "target_spans": list(s.target_spans),
            "target_lines": list(s.target_lines),
        }
        for s in cand.rule_mapping
    ]
    (out_dir / "rule_mapping.json").write_text(json.dumps(mapping, indent=2))


def _write_retry_log(out_dir: Path, outcome) -> None:
    lines = [
        f"candidate {i + 1}: {rep.verdict} line={rep.line} {rep.message}"
        for i, rep in enumerate(outcome.reports)
    ]
    (out_dir / "retry_log.txt").write_text("\n".join(lines) + "\n" if lines else "")


def _write_stuck(out_dir: Path, source_text: str, exc: StuckSearch) -> None:
    span = exc.slot.source_fragment.span
    payload = {"span": span, "kind": exc.slot.source_fragment.kind, "reason": exc.reason}
    if span:
        payload["line"] = source_text.count("\n", 0, span[0]) + 1
        payload["snippet"] = source_text[span[0]:span[1]]
    (out_dir / "stuck.json").write_text(json.dumps(payload, indent=2))


def _write_stuck_outcome(out_dir: Path, source_text: str, outcome) -> None:
    payload = {"span": outcome.stuck_span, "kind": outcome.stuck_kind}
    if outcome.stuck_span:
        payload["line"] = source_text.count("\n", 0, outcome.stuck_span[0]) + 1
        payload["snippet"] = source_text[outcome.stuck_span[0]:outcome.stuck_span[1]]
    (out_dir / "stuck.json").write_text(json.dumps(payload, indent=2))


def cmd_bench(args) -> int:
    src_grammar = _load_grammar_arg(args.src_grammar)
    tgt_grammar = _load_grammar_arg(args.tgt_grammar)
    ruleset = _load_rules(args.rules)
    pda = build_pda(tgt_grammar)
    src_runner = _runner(args.src_runner, PYTHON_RUNNER)
    tgt_runner = _runner(args.tgt_runner, NODE_RUNNER)
    rows = []
    corpus = Path(args.corpus)
    bench_dirs = sorted(d for d in corpus.iterdir() if (d / "source").exists())
    for bench in bench_dirs:
        source_text = (bench / "source").read_text()
        row = {"benchmark": bench.name}
        started = time.monotonic()
        try:
            ast = parse_source(src_grammar, source_text)
            # probe for untranslatable constructs before preparing the driver,
            # so missing rules surface as Stuck rather than a setup error
            first_candidate(ast, ruleset, tgt_grammar, pda)
            tests, _ = _prepare_tests(
                source_text, bench, src_grammar=src_grammar, ruleset=ruleset,
                tgt_grammar=tgt_grammar, pda=pda, src_runner=src_runner)
            outcome = search(ast, ruleset, tests, tgt_grammar, pda,
                             retry_limit=args.retry_limit, runner=tgt_runner)
            row["status"] = outcome.status
            row["retries"] = outcome.retries
            if outcome.status == "success":
                row["bloat"] = round(bloat_ratio(source_text, outcome.candidate.target_text), 3)
            elif outcome.status == "stuck":
                row["stuck_span"] = outcome.stuck_span
                row["stuck_kind"] = outcome.stuck_kind
            row["paths"] = [list(p) for p in outcome.tested_paths]
        except StuckSearch as exc:
            row["status"] = "stuck"
            row["stuck_kind"] = exc.slot.source_fragment.kind
            row["stuck_span"] = exc.slot.source_fragment.span
        except (ParseError, RuntimeError, FileNotFoundError, EmptySource) as exc:
            row["status"] = "setup_error"
            row["error"] = str(exc)[:200]
        row["seconds"] = round(time.monotonic() - started, 3)
        rows.append(row)
        print(f"{row['benchmark']:<20} {row['status']:<12} "
              f"retries={row.get('retries', '-'):<4} bloat={row.get('bloat', '-')} "
              f"{row['seconds']}s")
    solved = [r for r in rows if r.get("status") == "success"]
    accuracy = (len(solved) / len(rows) * 100) if rows else None
    bloats = [r["bloat"] for r in solved if "bloat" in r]
    mean_bloat = sum(bloats) / len(bloats) if bloats else None
    summary = {
        "benchmarks": len(rows),
        "accuracy_percent": accuracy if accuracy is not None else "N/A",
        "mean_bloat": round(mean_bloat, 3) if mean_bloat is not None else "N/A",
        "mean_seconds": round(sum(r["seconds"] for r in rows) / len(rows), 3) if rows else "N/A",
        "rows": rows,
    }
    print(f"accuracy: {summary['accuracy_percent']}%  mean bloat: {summary['mean_bloat']}  "
          f"mean time: {summary['mean_seconds']}s")
    if args.report:
        Path(args.report).write_text(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_infer(args) -> int:
    src_grammar = _load_grammar_arg(args.src_grammar)
    tgt_grammar = _load_grammar_arg(args.tgt_grammar)
    src_lines = Path(args.src_snippets).read_text()
    tgt_lines = Path(args.tgt_snippets).read_text()
    try:
        result = infer_rule_detailed(src_lines, tgt_lines, src_grammar, tgt_grammar)
    except (InferenceError, ParseError) as exc:
        print(f"inference failed: {exc}", file=sys.stderr)
        return EXIT_SETUP
    text = serialize_rule(result.rule)
    print(text)
    for note in result.notes:
        print(f"# note: {note}", file=sys.stderr)
    if args.append_to:
        with open(args.append_to, "a") as fh:
            fh.write("\n# provenance: inferred\n")
            fh.write(text + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    grammar = _load_grammar_arg(args.grammar)
    text = Path(args.file).read_text()
    try:
        ast = parse_source(grammar, text)
    except ParseError as exc:
        print(f"syntax error: {exc}", file=sys.stderr)
        return EXIT_STUCK
    pda = build_pda(grammar)
    config = accepts_traversal(pda, preorder(ast))
    if config is None:
        print("automaton rejected the parse traversal", file=sys.stderr)
        return EXIT_STUCK
    print("ok")
    if args.trace:
        print(dump_trace(config), end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(rulesets_dir=Path(args.rulesets_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transpile")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--src-grammar", default="python_subset")
        p.add_argument("--tgt-grammar", default="js_subset")
        p.add_argument("--rules", action="append", default=None,
                       help="bundled ruleset name or path; repeatable, concatenated in order")
        p.add_argument("--retry-limit", type=int, default=20)
        p.add_argument("--src-runner", default=None)
        p.add_argument("--tgt-runner", default=None)
        p.add_argument("--trace", action="store_true")

    p = sub.add_parser("translate", help="translate one source file")
    shared(p)
    p.add_argument("--src", required=True)
    p.add_argument("--tests", default=None, help="benchmark directory with driver/expected")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("bench", help="run a benchmark corpus")
    shared(p)
    p.add_argument("corpus")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("infer", help="infer a rule from snippet files")
    p.add_argument("--src-grammar", default="python_subset")
    p.add_argument("--tgt-grammar", default="js_subset")
    p.add_argument("--src-snippets", required=True)
    p.add_argument("--tgt-snippets", required=True)
    p.add_argument("--append-to", default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("check", help="syntax-validate a target file")
    p.add_argument("--grammar", default="js_subset")
    p.add_argument("--trace", action="store_true")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--rulesets-dir", default="rules")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "rules", None) is None and hasattr(args, "rules"):
        args.rules = ["corpus"]
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SETUP


if __name__ == "__main__":
    sys.exit(main())
