import json
from collections import Counter

import pytest

from magma.consolidate import ConsolidationConfig, Consolidator
from magma.graph import CONSOLIDATED, FAILED
from magma.ingest import Interaction, ingest_many
from magma.model import EdgeType
from magma.providers import CountingProvider, MockProvider, load_rules
from magma.store import MemoryStore

RULES = load_rules()


def providers(reasoner_rules=None):
    return (MockProvider("extractor", RULES["extractor"]),
            MockProvider("reasoner", reasoner_rules or RULES["reasoner"]))


def build(texts, encoder, episode="s1"):
    store = MemoryStore(64, 0.2)
    turns = [Interaction.create("Caroline", t, f"2023-05-25T16:{i:02d}:00Z", episode)
             for i, t in enumerate(texts)]
    ingest_many(store, turns, encoder)
    return store


def edges(store):
    return Counter(json.dumps(e.to_dict(), sort_keys=True) for e in store.graph.edges)


class Garbage:
    def __init__(self):
        self.calls = 0

    def complete(self, system, user):
        self.calls += 1
        return "not json at all"


class TestConsolidateOne:
    def test_entity_link(self, encoder):
        store = build(["I met Melanie at the park."], encoder)
        Consolidator(store, *providers()).run_worker()
        assert list(store.graph.entities) == ["ent:melanie"]
        assert store.graph.edge_count(EdgeType.ENTITY) == 1

    def test_identical_embeddings_make_semantic_edge(self, encoder):
        store = build(["we hiked the canyon trail", "we hiked the canyon trail"], encoder)
        Consolidator(store, *providers()).run_worker()
        (e,) = store.graph.edges_of("ev-000001", EdgeType.SEMANTIC)
        assert e.confidence == pytest.approx(1.0)

    def test_rain_causes_cancellation(self, encoder):
        store = build(["It rained all weekend.", "So we had to cancel the picnic."], encoder)
        Consolidator(store, *providers(), ConsolidationConfig(delta_causal=0.5)).run_worker()
        (e,) = [e for e in store.graph.edges if e.edge_type is EdgeType.CAUSAL]
        assert (e.src, e.dst, e.confidence) == ("ev-000001", "ev-000002", 0.9)

    def test_delta_filters_low_confidence(self, encoder):
        store = build(["It rained all weekend.", "So we had to cancel the picnic."], encoder)
        Consolidator(store, *providers(), ConsolidationConfig(delta_causal=0.95)).run_worker()
        assert store.graph.edge_count(EdgeType.CAUSAL) == 0

    def test_backward_claim_is_reoriented(self, encoder):
        rules = {"rules": [{"cause": "cancel", "effect": "rain", "confidence": 0.8}]}
        store = build(["It rained all weekend.", "So we had to cancel the picnic."], encoder)
        Consolidator(store, *providers(rules)).run_worker()
        (e,) = [e for e in store.graph.edges if e.edge_type is EdgeType.CAUSAL]
        assert (e.src, e.dst) == ("ev-000001", "ev-000002")

    def test_attributes_filled(self, encoder):
        store = build(["Melanie plays the clarinet"], encoder)
        Consolidator(store, *providers()).run_worker()
        a = store.graph.nodes["ev-000001"].attributes
        assert a.entities == ("Melanie",) and a.topic == "music" and a.speaker == "Caroline"
        # re-indexed: the topic is now searchable
        assert store.keywords.search(["music"], 3)[0][0] == "ev-000001"

    def test_never_touches_content_time_or_backbone(self, encoder):
        store = build(["It rained.", "We cancelled.", "Melanie called."], encoder)
        before = {n: (x.content, x.timestamp, x.embedding) for n, x in store.graph.nodes.items()}
        chain = store.graph.backbone()
        Consolidator(store, *providers()).run_worker()
        after = {n: (x.content, x.timestamp, x.embedding) for n, x in store.graph.nodes.items()}
        assert before == after and store.graph.backbone() == chain
        assert store.graph.audit() == []

    def test_reconsolidation_skipped_unless_forced(self, encoder):
        store = build(["It rained."], encoder)
        ex, re_ = providers()
        spy = CountingProvider(ex)
        c = Consolidator(store, spy, re_)
        c.consolidate_one("ev-000001")
        assert c.consolidate_one("ev-000001").skipped and spy.calls == 1
        c.consolidate_one("ev-000001", force=True)
        assert spy.calls == 2

    def test_double_processing_is_idempotent(self, encoder):
        texts = ["It rained in Boston.", "We cancel the picnic.", "Melanie plays violin.",
                 "Melanie plays violin.", "The roadtrip was long.", "Then a hike."]
        once, twice = build(texts, encoder), build(texts, encoder)
        Consolidator(once, *providers()).run_worker()
        c = Consolidator(twice, *providers())
        for node in sorted(twice.graph.nodes):
            c.consolidate_one(node, force=True)
            c.consolidate_one(node, force=True)
        assert edges(once) == edges(twice)

    def test_redelivery_in_any_order_adds_nothing(self, encoder):
        texts = ["It rained in Boston.", "We cancel the picnic.", "Melanie plays violin.",
                 "The roadtrip was long.", "Then a hike.", "Boston got rain again.",
                 "Melanie had to cancel the concert."] * 3
        store = build(texts, encoder)
        c = Consolidator(store, *providers())
        c.run_worker()
        before = edges(store)
        for node in sorted(store.graph.nodes, reverse=True):
            c.consolidate_one(node, force=True)
        assert edges(store) == before

    def test_pairs_must_touch_focal_event(self, encoder):
        class Gossip:
            """Reasoner that only ever links the two earliest events."""
            def complete(self, system, user):
                return json.dumps({"causal_pairs": [
                    {"src": "ev-000001", "dst": "ev-000002", "confidence": 0.9}]})

        store = build(["a", "b", "c"], encoder)
        c = Consolidator(store, MockProvider("extractor", RULES["extractor"]), Gossip())
        c.consolidate_one("ev-000003")
        assert store.graph.edge_count(EdgeType.CAUSAL) == 0
        c.consolidate_one("ev-000002")
        assert store.graph.edge_count(EdgeType.CAUSAL) == 1

    def test_reasoner_sees_no_later_events(self, encoder):
        seen = []

        class Spy:
            def complete(self, system, user):
                seen.append(user)
                return '{"causal_pairs": []}'

        store = build(["Boston one", "Boston two", "Boston three"], encoder)
        c = Consolidator(store, MockProvider("extractor", RULES["extractor"]), Spy())
        c.run_worker()
        calls = len(seen)
        c.consolidate_one("ev-000002", force=True)
        assert len(seen) == calls + 1
        assert "[ref:ev-000001]" in seen[-1] and "ev-000003" not in seen[-1]

    def test_history_capped(self, encoder):
        store = build([f"note {i}" for i in range(14)], encoder)
        c = Consolidator(store, *providers())
        c.run_worker()
        assert len(c._history(store.graph.nodes["ev-000014"])) == 10


class TestFailurePolicy:
    def test_garbage_marks_failed_and_requeues_once(self, encoder):
        store = build(["It rained."], encoder)
        bad = Garbage()
        c = Consolidator(store, bad, MockProvider("reasoner", RULES["reasoner"]),
                         ConsolidationConfig(max_retries=1))
        first = c.run_worker(max_items=1)
        assert first == 1 and store.graph.status["ev-000001"] == FAILED
        assert len(store.queue) == 1          # re-queued once
        c.run_worker()
        assert len(store.queue) == 0          # second failure is final
        # retries: (1 + max_retries) attempts, each with one repair retry
        assert bad.calls == 2 * 2 * 2

    def test_schema_violation_counts_as_failure(self, encoder):
        class NoTopic:
            def complete(self, system, user):
                return json.dumps({"entities": [], "relationships": [], "semantic_facts": [],
                                   "dates_mentioned": [], "speaker": "x", "summary": "y"})

        store = build(["It rained."], encoder)
        report = Consolidator(store, NoTopic(), MockProvider("reasoner", {})).handle("ev-000001")
        assert report.failed and "topic" in report.error


class TestWorker:
    def test_drains_up_to_max(self, encoder):
        store = build(["a", "b", "c"], encoder)
        assert Consolidator(store, *providers()).run_worker(max_items=10) == 3
        assert len(store.queue) == 0
        assert all(s == CONSOLIDATED for s in store.graph.status.values())

    def test_empty_queue(self, encoder):
        store = MemoryStore(64)
        assert Consolidator(store, *providers()).run_worker(max_items=5) == 0

    def test_crash_and_restart(self, encoder, tmp_path):
        texts = ["It rained in Boston.", "We cancel the picnic.", "Melanie plays violin."]
        baseline = build(texts, encoder)
        Consolidator(baseline, *providers()).run_worker()

        path = tmp_path / "s"
        store = MemoryStore.open(path, dim=64)
        ingest_many(store, [Interaction.create("Caroline", t, f"2023-05-25T16:{i:02d}:00Z", "s1")
                            for i, t in enumerate(texts)], encoder)
        seen = []

        def crash_before_second_ack(report):
            seen.append(report.node_id)
            if len(seen) == 2:
                raise KeyboardInterrupt("simulated crash")

        with pytest.raises(KeyboardInterrupt):
            Consolidator(store, *providers()).run_worker(after_item=crash_before_second_ack)
        store.save()

        restarted = MemoryStore.open(path)
        assert restarted.queue.pending() == ["ev-000002", "ev-000003"]
        ex = CountingProvider(providers()[0])
        Consolidator(restarted, ex, providers()[1]).run_worker()
        # item 2 finished its writes before the crash, so redelivery skips it
        assert ex.calls == 1
        assert edges(restarted) == edges(baseline)
        assert restarted.graph.audit() == []
