import json
import urllib.error
import urllib.request

import pytest

from magma.cli import read_interactions
from magma.config import EngineConfig
from magma.engine import Engine
from magma.errors import ProviderError
from magma.providers import MockProvider, load_rules
from magma.service import MemoryService

from conftest import DATA

TURNS = read_interactions(DATA / "melanie_hike.json")


def call(service, method, path, body=None, raw=None):
    data = raw if raw is not None else (json.dumps(body).encode() if body is not None else None)
    req = urllib.request.Request(service.url + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


@pytest.fixture
def service():
    engine = Engine.in_memory(EngineConfig())
    with MemoryService(engine, worker=False) as svc:
        yield svc


class TestRoutes:
    def test_health_envelope(self, service):
        status, body = call(service, "GET", "/health")
        assert status == 200 and body["status"] == "ok" and body["events"] == 0
        assert body["version"] == "0.1.0" and len(body["config_hash"]) == 16

    def test_ingest_then_audit(self, service):
        status, body = call(service, "POST", "/ingest", {"turns": TURNS})
        assert status == 200 and len(body["ids"]) == 10
        status, body = call(service, "POST", "/consolidate", {})
        assert status == 200 and body["remaining"] == 0
        status, body = call(service, "GET", "/audit")
        assert status == 200 and body["count"] == 0

    def test_query_mirrors_engine(self, service):
        call(service, "POST", "/ingest", {"turns": TURNS})
        q = "When did Melanie go on the hike after the roadtrip?"
        status, body = call(service, "POST", "/query", {"question": q, "now": "2023-10-20"})
        direct = service.engine.query(q, "2023-10-20")
        assert status == 200
        assert body["context"] == direct.context and body["answer"] == direct.answer == "19 October 2023"

    def test_single_interaction(self, service):
        status, body = call(service, "POST", "/ingest",
                            {"speaker": "a", "text": "hello", "timestamp": "2024-01-01T00:00:00Z"})
        assert status == 200 and body["ids"] == ["ev-000001"]

    def test_out_of_order_409(self, service):
        call(service, "POST", "/ingest", {"turns": TURNS})
        status, _ = call(service, "POST", "/ingest", {"text": "old", "timestamp": "2000-01-01"})
        assert status == 409

    def test_empty_memory_404(self, service):
        assert call(service, "POST", "/query", {"question": "hi"})[0] == 404

    def test_unknown_route(self, service):
        assert call(service, "GET", "/nope")[0] == 404


class TestBadRequests:
    @pytest.mark.parametrize("path, body, field", [
        ("/ingest", {"timestamp": 1}, "text"),
        ("/ingest", {"text": "x"}, "timestamp"),
        ("/ingest", {"text": "x", "timestamp": "not a date"}, "timestamp"),
        ("/ingest", {"turns": "x"}, "turns"),
        ("/query", {"question": 3}, "question"),
        ("/query", {"question": "q", "answer": "yes"}, "answer"),
        ("/consolidate", {"max_items": -1}, "max_items"),
    ])
    def test_field_named(self, service, path, body, field):
        status, reply = call(service, "POST", path, body)
        assert status == 400 and reply["field"] == field and reply["error"]

    def test_malformed_json(self, service):
        status, reply = call(service, "POST", "/ingest", raw=b"{nope")
        assert status == 400 and "malformed JSON" in reply["error"]

    def test_non_object(self, service):
        assert call(service, "POST", "/query", [1, 2])[0] == 400


class TestProviderFailure:
    def test_answerer_down_502(self):
        rules = load_rules()

        class Down:
            def complete(self, system, user):
                raise ProviderError("answerer unreachable")

        providers = {r: MockProvider(r, rules[r]) for r in ("extractor", "reasoner", "judge")}
        providers["answerer"] = Down()
        engine = Engine.in_memory(EngineConfig(), providers=providers)
        with MemoryService(engine, worker=False) as svc:
            call(svc, "POST", "/ingest", {"turns": TURNS})
            status, body = call(svc, "POST", "/query", {"question": "hike", "now": "2023-10-20"})
        assert status == 502
        assert body["error"] == "answerer unreachable" and body["context"]


class TestWorker:
    def test_background_consolidation(self):
        import time
        engine = Engine.in_memory(EngineConfig())
        with MemoryService(engine, idle_wait=0.01) as svc:
            call(svc, "POST", "/ingest", {"turns": TURNS})
            deadline = time.time() + 10
            while time.time() < deadline and call(svc, "GET", "/health")[1]["queue"]:
                time.sleep(0.02)
            assert call(svc, "GET", "/health")[1]["queue"] == 0
            assert call(svc, "GET", "/audit")[1]["count"] == 0

    def test_stop_persists(self, tmp_path):
        engine = Engine(EngineConfig(store_path=str(tmp_path / "s")))
        with MemoryService(engine, worker=False) as svc:
            call(svc, "POST", "/ingest", {"turns": TURNS[:3]})
        reopened = Engine(EngineConfig(store_path=str(tmp_path / "s")))
        assert len(reopened.store.graph.nodes) == 3
