import json

import pytest

from magma.cli import EXIT_AUDIT, EXIT_OK, EXIT_PROVIDER, EXIT_STORE, EXIT_USAGE, main, read_interactions

from conftest import DATA

HIKE = str(DATA / "melanie_hike.json")
MINI = str(DATA / "mini.json")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    import os
    for key in list(os.environ):
        if key.startswith("MAGMA_"):
            monkeypatch.delenv(key)


@pytest.fixture
def store(tmp_path):
    return ["--store", str(tmp_path / "store")]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestWorkflow:
    def test_ingest_consolidate_query_audit(self, capsys, store):
        code, out, _ = run(capsys, "ingest", HIKE, *store)
        assert code == EXIT_OK and out.startswith("ingested 10 events")
        code, out, _ = run(capsys, "consolidate", *store)
        assert code == EXIT_OK and "0 remaining" in out
        code, out, _ = run(capsys, "query", "When did Melanie go on the hike after the roadtrip?",
                           "--now", "2023-10-20", *store)
        assert code == EXIT_OK
        assert "<t:2023-10-19" in out
        assert "Answer: 19 October 2023" in out
        code, out, _ = run(capsys, "audit", *store)
        assert code == EXIT_OK and out.strip().endswith("0 violations")

    def test_yesterday_query(self, capsys, store):
        run(capsys, "ingest", HIKE, *store)
        code, out, _ = run(capsys, "query", "what did Melanie do yesterday?", "--now", "2023-10-20",
                           "--no-answer", "--json", *store)
        payload = json.loads(out)
        assert code == EXIT_OK
        start, end = payload["diagnostics"]["window"]
        assert (start, end) == (1697673600, 1697759999)   # 2023-10-19 00:00:00 .. 23:59:59
        assert "<t:2023-10-19" in payload["context"]
        assert "answer" not in payload and payload["config_hash"]

    def test_json_envelope(self, capsys, store):
        code, out, _ = run(capsys, "ingest", HIKE, "--json", *store)
        payload = json.loads(out)
        assert payload["version"] == "0.1.0" and len(payload["ids"]) == 10

    def test_persisted_between_runs(self, capsys, store):
        run(capsys, "ingest", HIKE, *store)
        code, out, _ = run(capsys, "ingest", HIKE, *store)
        # replaying older turns into a store that already holds later ones is refused
        assert code == EXIT_STORE and "store error" in out + _


class TestExitCodes:
    def test_bad_set(self, capsys, store):
        assert run(capsys, "config", "--set", "gamma")[0] == EXIT_USAGE

    def test_unknown_key(self, capsys):
        code, _, err = run(capsys, "config", "--set", "warp=9")
        assert code == EXIT_USAGE and "warp" in err

    def test_usage_error(self, capsys):
        assert run(capsys, "frobnicate")[0] == EXIT_USAGE

    def test_query_empty_store(self, capsys, store):
        code, _, err = run(capsys, "query", "anything", "--now", "2023-01-01", *store)
        assert code != EXIT_OK and err

    def test_provider_missing(self, capsys, store):
        code, _, err = run(capsys, "consolidate", "--set", "mock=false", "--set",
                           'providers={"embedder": {"endpoint": "http://127.0.0.1:9"}}', *store)
        assert code == EXIT_PROVIDER and "extractor" in err

    def test_answer_error_exit(self, capsys, store, tmp_path):
        run(capsys, "ingest", HIKE, *store)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"mock": False, "providers": {
            "embedder": {"endpoint": "http://127.0.0.1:9"},
            "answerer": {"endpoint": "http://127.0.0.1:9", "max_retries": 0}}}))
        code, _, err = run(capsys, "query", "hike", "--config", str(cfg), *store)
        assert code == EXIT_PROVIDER

    def test_audit_violation(self, capsys, store, tmp_path):
        run(capsys, "ingest", HIKE, *store)
        graph = tmp_path / "store" / "graph.jsonl"
        lines = graph.read_text().splitlines()
        # forge a causal edge pointing backwards in time
        extra = {"kind": "edge", "src": "ev-000005", "dst": "ev-000001", "edge_type": "CAUSAL",
                 "confidence": 0.9, "origin": "CONSOLIDATION", "created_at": 0}
        footer = json.loads(lines[-1])
        footer["edges"] = footer.get("edges", 0) + 1
        graph.write_text("\n".join(lines[:-1] + [json.dumps(extra), json.dumps(footer)]) + "\n")
        code, out, _ = run(capsys, "audit", *store)
        assert code == EXIT_AUDIT
        assert "ev-000005" in out and out.strip().endswith("1 violations")

    def test_corrupt_store(self, capsys, store, tmp_path):
        run(capsys, "ingest", HIKE, *store)
        graph = tmp_path / "store" / "graph.jsonl"
        graph.write_text(graph.read_text().splitlines()[0] + "\n")
        code, _, err = run(capsys, "audit", *store)
        assert code == EXIT_STORE and "footer" in err


class TestEvalCommand:
    def test_ablate_no_causal(self, capsys, tmp_path):
        out_file = tmp_path / "r.json"
        code, out, _ = run(capsys, "eval", MINI, "--ablate", "no-causal", "--out", str(out_file))
        assert code == EXIT_OK and "variant: no-causal" in out
        report = json.loads(out_file.read_text())
        assert all(r["subgraph_edges"].get("CAUSAL", 0) == 0 for r in report["samples"])

    def test_no_adaptive_note(self, capsys):
        code, out, _ = run(capsys, "eval", MINI, "--ablate", "no-adaptive", "--no-judge")
        assert code == EXIT_OK and "uniform edge weights" in out

    def test_config_command(self, capsys):
        code, out, _ = run(capsys, "config", "--json", "--set", "hops=3")
        assert code == EXIT_OK and json.loads(out)["config"]["hops"] == 3


class TestReadInteractions:
    def test_formats(self, tmp_path):
        rows = [{"speaker": "a", "text": "x", "timestamp": 1}]
        for name, text in [("l.json", json.dumps(rows)), ("t.json", json.dumps({"turns": rows})),
                           ("o.json", json.dumps(rows[0])), ("j.jsonl", json.dumps(rows[0]) + "\n")]:
            p = tmp_path / name
            p.write_text(text)
            assert read_interactions(p) == rows
