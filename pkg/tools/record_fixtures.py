#!/usr/bin/env python3
"""Record service payloads used by the frontend test suite.

Drives the HTTP service in-process through the motivating example and the
snippet-teaching flow, dumping each response under frontend/fixtures/.
"""

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from transpile.service import create_app  # noqa: E402

FIXTURES = REPO / "frontend" / "fixtures"
SNIPPETS = REPO / "src" / "transpile" / "data" / "snippets"


def dump(name: str, payload) -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / name).write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {name}")


def main() -> None:
    rules_dir = Path(tempfile.mkdtemp())
    app = create_app(rulesets_dir=rules_dir)
    client = TestClient(app)

    source = (REPO / "benchmarks" / "words" / "source").read_text()
    driver = (REPO / "benchmarks" / "words" / "driver").read_text()

    # full search under the corpus ruleset
    r = client.post("/sessions", json={"source": source, "driver": driver,
                                       "rules": "corpus"})
    session = r.json()
    dump("session_success.json", session)
    n = session["outcome"]["candidate_index"]
    candidate = client.get(f"/sessions/{session['session_id']}/candidates/{n}").json()
    candidate["source"] = source
    dump("candidate.json", candidate)

    # stuck prompt under base rules, then teach with both snippet styles
    r = client.post("/sessions", json={"source": source, "driver": driver,
                                       "rules": "base"})
    stuck = r.json()
    dump("session_stuck.json", stuck)

    comp_src = (SNIPPETS / "comprehension.py.txt").read_text()
    for style, fname in (("comprehension_map.js.txt", "snippets_map.json"),
                         ("comprehension_alt.js.txt", "snippets_alt.json")):
        rr = client.post("/sessions", json={"source": source, "driver": driver,
                                            "rules": "base"})
        sid = rr.json()["session_id"]
        resp = client.post(f"/sessions/{sid}/snippets", json={
            "src_lines": comp_src,
            "trg_lines": (SNIPPETS / style).read_text(),
        })
        dump(fname, resp.json())

    # rule-editor payload: a rule with several references
    from transpile.bundled import ruleset_text
    from transpile.rules import parse_ruleset

    rs = parse_ruleset(ruleset_text("corpus"), "corpus")
    rule = next(x for x in rs.rules if "for_of_stmt" in str(x.trg_pattern))
    detail = client.get(f"/rulesets/corpus/rules/{rule.rule_id}").json()
    dump("rule_detail.json", detail)


if __name__ == "__main__":
    main()
    record_meta()


def record_meta() -> None:
    from transpile.bundled import ruleset_text
    from transpile.rules import parse_ruleset, serialize_rule

    rs = parse_ruleset(ruleset_text("corpus"), "corpus")
    comp = next(r for r in rs.rules
                if "list_comp" in serialize_rule(r) and "map" in serialize_rule(r))
    dump("meta.json", {"comprehension_rule_id": comp.rule_id})
