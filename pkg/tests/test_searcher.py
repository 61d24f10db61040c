import shutil

import pytest

from transpile.grammar import parse_source
from transpile.searcher import (
    PYTHON_RUNNER,
    NoLocation,
    TestCase,
    TestReport,
    first_candidate,
    localize_fault,
    run_program,
    run_tests,
    search,
)

node_missing = shutil.which("node") is None
pytestmark = pytest.mark.skipif(node_missing, reason="node runtime unavailable")


@pytest.fixture(scope="module")
def words_setup(py_grammar, js_grammar, js_pda, corpus_rules, benchmarks_dir):
    src = (benchmarks_dir / "words" / "source").read_text()
    drv = (benchmarks_dir / "words" / "driver").read_text()
    code, expected, _ = run_program(PYTHON_RUNNER, src + drv)
    assert code == 0
    driver_cand = first_candidate(parse_source(py_grammar, drv), corpus_rules,
                                  js_grammar, js_pda)
    tests = [TestCase("words", drv, driver_cand.target_text, expected)]
    return src, tests


def test_first_candidate_fails_line2_undefined(py_grammar, js_grammar, js_pda,
                                               corpus_rules, words_setup):
    src, tests = words_setup
    cand = first_candidate(parse_source(py_grammar, src), corpus_rules, js_grammar, js_pda)
    report = run_tests(cand, tests)
    assert report.verdict == "runtime_error"
    assert report.line == 2
    assert "trwords" in report.message and "not defined" in report.message


def test_search_words_succeeds_within_limit(py_grammar, js_grammar, js_pda,
                                            corpus_rules, words_setup):
    src, tests = words_setup
    outcome = search(parse_source(py_grammar, src), corpus_rules, tests,
                     js_grammar, js_pda, retry_limit=20)
    assert outcome.status == "success"
    assert 2 <= outcome.retries <= 20
    assert outcome.reports[0].verdict == "runtime_error"
    assert outcome.reports[0].line == 2
    assert "let trwords" in outcome.candidate.target_text


def test_search_stuck_without_comprehension_rule(py_grammar, js_grammar, js_pda,
                                                 corpus_rules, words_setup, benchmarks_dir):
    src, tests = words_setup
    from transpile.rules import Ruleset, serialize_rule
    reduced = Ruleset("reduced", [
        r.with_order(i) for i, r in enumerate(
            r for r in corpus_rules.rules if "list_comp" not in serialize_rule(r))
    ])
    outcome = search(parse_source(py_grammar, src), reduced, tests,
                     js_grammar, js_pda, retry_limit=20)
    assert outcome.status == "stuck"
    line = src.count("\n", 0, outcome.stuck_span[0]) + 1
    assert line == 2


def test_in_test_retry_picks_object_membership(py_grammar, js_grammar, js_pda,
                                               corpus_rules):
    """`x in y` has three target choices; only the object-key form passes
    when y is a dictionary at runtime."""
    src = ("def hit(d):\n"
           "    if \"k\" in d:\n"
           "        return 1\n"
           "    return 0\n")
    drv = "print(hit({\"k\": 5}))\nprint(hit({}))\n"
    code, expected, _ = run_program(PYTHON_RUNNER, src + drv)
    assert code == 0
    driver_cand = first_candidate(parse_source(py_grammar, drv), corpus_rules,
                                  js_grammar, js_pda)
    tests = [TestCase("t", drv, driver_cand.target_text, expected)]
    outcome = search(parse_source(py_grammar, src), corpus_rules, tests,
                     js_grammar, js_pda, retry_limit=20)
    assert outcome.status == "success"
    assert '"k" in d' in outcome.candidate.target_text
    # the indexOf form was tried first and failed at runtime
    assert outcome.retries >= 2


def test_output_mismatch_report(py_grammar, js_grammar, js_pda, corpus_rules):
    src = "def three():\n    return 3\n"
    drv = "print(three())\n"
    cand = first_candidate(parse_source(py_grammar, src + drv), corpus_rules,
                           js_grammar, js_pda)
    report = run_tests(cand, [TestCase("t", drv, "", "4\n")])
    assert report.verdict == "output_mismatch"
    assert "line 1" in report.message


def test_localize_fault_maps_line_to_steps(py_grammar, js_grammar, js_pda,
                                           corpus_rules, words_setup):
    src, tests = words_setup
    cand = first_candidate(parse_source(py_grammar, src), corpus_rules, js_grammar, js_pda)
    report = run_tests(cand, tests)
    steps = localize_fault(report, cand)
    assert steps
    src_spans = [cand.rule_mapping[s].source_span for s in steps]
    lines = {src.count("\n", 0, s[0]) + 1 for s in src_spans if s}
    assert 2 in lines


def test_localize_no_location():
    cand_report = TestReport(verdict="output_mismatch", line=None)
    with pytest.raises(NoLocation):
        localize_fault(cand_report, None)


def test_retry_schedule_and_uniqueness(py_grammar, js_grammar, js_pda,
                                       corpus_rules, words_setup):
    src, tests = words_setup
    outcome = search(parse_source(py_grammar, src), corpus_rules, tests,
                     js_grammar, js_pda, retry_limit=20)
    paths = outcome.tested_paths
    assert len(paths) == len(set(paths))  # no duplicates
    for k, path in enumerate(paths[1:], start=1):
        diffs = min(
            sum(1 for a, b in zip(path, prev) if a != b) + abs(len(path) - len(prev))
            for prev in paths[:k]
        )
        assert diffs <= k


def test_search_deterministic(py_grammar, js_grammar, js_pda, corpus_rules, words_setup):
    src, tests = words_setup
    ast1 = parse_source(py_grammar, src)
    ast2 = parse_source(py_grammar, src)
    o1 = search(ast1, corpus_rules, tests, js_grammar, js_pda, retry_limit=20)
    o2 = search(ast2, corpus_rules, tests, js_grammar, js_pda, retry_limit=20)
    assert o1.status == o2.status == "success"
    assert o1.retries == o2.retries
    assert o1.candidate.target_text == o2.candidate.target_text


def test_exhausted_contains_exactly_limit_reports(py_grammar, js_grammar, js_pda,
                                                  corpus_rules):
    # an impossible expectation fails every candidate without a fault line,
    # so the searcher retries globally until the budget runs out; three
    # assignments give eight let/plain variants, more than the limit
    src = "x = 1\ny = 2\nz = 3\nprint(x + y + z)\n"
    drv = "print(0)\n"
    driver_cand = first_candidate(parse_source(py_grammar, drv), corpus_rules,
                                  js_grammar, js_pda)
    tests = [TestCase("t", drv, driver_cand.target_text, "unreachable\n")]
    outcome = search(parse_source(py_grammar, src), corpus_rules, tests,
                     js_grammar, js_pda, retry_limit=4)
    assert outcome.status == "exhausted"
    assert len(outcome.reports) == 4
    assert outcome.reports[-1].verdict == "output_mismatch"


def test_runner_unavailable(py_grammar, js_grammar, js_pda, corpus_rules):
    from transpile.searcher import RunnerProfile, RunnerUnavailable

    ghost = RunnerProfile(command=("definitely-not-a-real-binary",), suffix=".js")
    cand = first_candidate(parse_source(py_grammar, "x = 1\n"), corpus_rules,
                           js_grammar, js_pda)
    with pytest.raises(RunnerUnavailable):
        run_tests(cand, [TestCase("t", "", "", "")], ghost)


def test_timeout_reported_as_runtime_error(py_grammar, js_grammar, js_pda, corpus_rules):
    from transpile.searcher import RunnerProfile

    slow = RunnerProfile(command=("node",), suffix=".js",
                         prelude='"use strict";\n', timeout=0.5)
    src = "def spin():\n    while 1 > 0:\n        pass\n    return 0\n"
    cand = first_candidate(parse_source(py_grammar, src + "spin()\n"),
                           corpus_rules, js_grammar, js_pda)
    report = run_tests(cand, [TestCase("t", "", "", "")], slow)
    assert report.verdict == "runtime_error"
    assert report.line is None


def test_longer_program_integration(py_grammar, js_grammar, js_pda, corpus_rules):
    """A multi-function program combining dict iteration, membership tests,
    string methods, folds and casts translates within a generous budget."""
    src = (
        "def normalize(words):\n"
        "    out = []\n"
        "    for w in words:\n"
        "        out.append(w.lower())\n"
        "    return out\n"
        "\n"
        "def tally(words):\n"
        "    counts = {}\n"
        "    for w in words:\n"
        "        if w in counts:\n"
        "            counts[w] = counts[w] + 1\n"
        "        else:\n"
        "            counts[w] = 1\n"
        "    return counts\n"
        "\n"
        "def most_common(words):\n"
        "    counts = tally(normalize(words))\n"
        "    best = \"\"\n"
        "    best_n = 0\n"
        "    for k in counts:\n"
        "        if counts[k] > best_n:\n"
        "            best_n = counts[k]\n"
        "            best = k\n"
        "    return best\n"
    )
    drv = 'print(most_common(["Cat", "dog", "cat", "BIRD", "cat"]))\n'
    code, expected, _ = run_program(PYTHON_RUNNER, src + drv)
    assert code == 0
    driver_cand = first_candidate(parse_source(py_grammar, drv), corpus_rules,
                                  js_grammar, js_pda)
    outcome = search(parse_source(py_grammar, src), corpus_rules,
                     [TestCase("t", drv, driver_cand.target_text, expected)],
                     js_grammar, js_pda, retry_limit=30)
    assert outcome.status == "success"
    # the dict loop must have adapted to key iteration after the
    # for-of attempt failed at runtime
    assert "for (let k in counts)" in outcome.candidate.target_text
