"""Slow path: attribute extraction, entity links, semantic and causal edges.

Provider calls happen outside the write gate; each node's writes are then
applied in one gated block. Every step is idempotent, so re-delivering a
queue item is harmless.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable

from .errors import DegenerateEntityError, EdgeRejectedError, ProviderError, StoreError
from .graph import CONSOLIDATED, FAILED, PENDING
from .model import AttributeSet, EdgeType, EventNode, Origin, TypedEdge
from .prompts import reasoner_prompt
from .providers import ChatProvider, CausalPair, extract_attributes, parse_causal_pairs
from .store import MemoryStore

logger = logging.getLogger(__name__)

HISTORY_CAP = 10
# the reasoner's neighbourhood walks these; CAUSAL is left out because it is our own output
_REASONER_VIEW = (EdgeType.TEMPORAL, EdgeType.SEMANTIC, EdgeType.ENTITY)


@dataclass(frozen=True)
class ConsolidationConfig:
    theta_sim: float = 0.20
    delta_causal: float = 0.5
    hops: int = 2
    semantic_top_m: int = 5
    max_retries: int = 2

    def __post_init__(self) -> None:
        for name in ("theta_sim", "delta_causal"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.hops < 1:
            raise ValueError("hops must be >= 1")
        if self.semantic_top_m < 0 or self.max_retries < 0:
            raise ValueError("counts must be non-negative")


@dataclass
class ConsolidationReport:
    node_id: str
    attributes_set: bool = False
    edges_added: dict[str, int] = field(default_factory=lambda: {t.value: 0 for t in EdgeType})
    provider_calls: int = 0
    skipped: bool = False
    failed: bool = False
    requeued: bool = False
    error: str = ""


class _Counting:
    def __init__(self, inner: ChatProvider):
        self.inner = inner
        self.calls = 0

    def complete(self, system: str, user: str) -> str:
        self.calls += 1
        return self.inner.complete(system, user)


class Consolidator:
    def __init__(self, store: MemoryStore, extractor: ChatProvider, reasoner: ChatProvider,
                 config: ConsolidationConfig = ConsolidationConfig()):
        self.store = store
        self.extractor = extractor
        self.reasoner = reasoner
        self.config = config
        self._attempts: dict[str, int] = {}

    # -- one node ---------------------------------------------------------

    def consolidate_one(self, node_id: str, force: bool = False) -> ConsolidationReport:
        graph = self.store.graph
        report = ConsolidationReport(node_id)
        with self.store.gate.read():
            node = graph.get(node_id)
            status = graph.status.get(node_id, PENDING)
        if status == CONSOLIDATED and not force:
            report.skipped = True
            return report

        extractor, reasoner = _Counting(self.extractor), _Counting(self.reasoner)
        try:
            attrs = self._extract(node, extractor)
            # entity and semantic links go in first so the reasoner sees them
            with self.store.gate.write():
                self._apply_links(node, attrs, report)
            pairs = self._infer_causal(node, attrs, reasoner)
        except ProviderError as exc:
            report.provider_calls = extractor.calls + reasoner.calls
            report.failed = True
            report.error = str(exc)
            return report
        report.provider_calls = extractor.calls + reasoner.calls

        with self.store.gate.write():
            self._apply_causal(node, pairs, report)
            graph.status[node_id] = CONSOLIDATED
        return report

    def _extract(self, node: EventNode, provider: ChatProvider) -> AttributeSet:
        prev = self._previous_summary(node)
        last: ProviderError | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                attrs = extract_attributes(provider, node.attributes.speaker, node.content, prev)
                if not attrs.speaker:
                    attrs = replace(attrs, speaker=node.attributes.speaker)
                return attrs
            except ProviderError as exc:
                last = exc
        raise ProviderError(f"extraction failed for {node.id}: {last}")

    def _previous_summary(self, node: EventNode) -> str:
        graph = self.store.graph
        with self.store.gate.read():
            for e in graph.edges_of(node.id, EdgeType.TEMPORAL):
                if e.dst == node.id:
                    return graph.nodes[e.src].attributes.summary
        return ""

    def _history(self, node: EventNode) -> list[str]:
        if node.episode_id is None:
            return []
        graph = self.store.graph
        mates = [n for n in graph.nodes.values()
                 if n.episode_id == node.episode_id and n.id != node.id
                 and (n.timestamp, n.id) < (node.timestamp, node.id) and n.attributes.summary]
        mates.sort(key=lambda n: (n.timestamp, n.id))
        return [n.attributes.summary for n in mates[-HISTORY_CAP:]]

    def _infer_causal(self, node: EventNode, attrs: AttributeSet,
                      provider: ChatProvider) -> list[CausalPair]:
        graph = self.store.graph
        key = graph.order_key(node.id)
        # Only events up to the focal one, reached without CAUSAL edges: that view does
        # not change as later events are consolidated, so redelivery adds nothing new.
        with self.store.gate.read():
            local = graph.neighborhood(
                node.id, self.config.hops, _REASONER_VIEW,
                admit=lambda n: n not in graph.nodes or graph.order_key(n) <= key)
            events = sorted((graph.nodes[n] for n in local.node_ids if n in graph.nodes),
                            key=lambda n: (n.timestamp, n.id))
            history = self._history(node)
        events = [EventNode(n.id, n.content, n.timestamp, n.embedding,
                            attrs if n.id == node.id else n.attributes, n.episode_id,
                            n.timestamp_text) for n in events]
        if len(events) < 2:
            return []
        system, user = reasoner_prompt(node.id, events, history)
        last: ProviderError | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                listed = {n.id for n in events}
                return [p for p in parse_causal_pairs(provider.complete(system, user))
                        if p.src in listed and p.dst in listed and node.id in (p.src, p.dst)]
            except ProviderError as exc:
                last = exc
        raise ProviderError(f"causal inference failed for {node.id}: {last}")

    def _admit(self, edge: TypedEdge, report: ConsolidationReport) -> None:
        try:
            if self.store.graph.add_edge(edge):
                report.edges_added[edge.edge_type.value] += 1
        except EdgeRejectedError as exc:
            logger.debug("edge rejected: %s", exc)

    def _apply_links(self, node: EventNode, attrs: AttributeSet,
                     report: ConsolidationReport) -> None:
        """Attributes, ENTITY edges and SEMANTIC edges."""
        store, graph = self.store, self.store.graph
        stamp = node.timestamp
        current = graph.get(node.id)
        if current.attributes != attrs:
            store.update_event(EventNode(current.id, current.content, current.timestamp,
                                         current.embedding, attrs, current.episode_id,
                                         current.timestamp_text))
        report.attributes_set = True

        for mention in attrs.entities:
            try:
                ent = graph.upsert_entity(mention)
            except (DegenerateEntityError, StoreError):
                continue
            self._admit(TypedEdge(node.id, ent.id, EdgeType.ENTITY, 1.0, Origin.CONSOLIDATION,
                                  stamp), report)

        for other, sim in self._semantic_candidates(node):
            self._admit(TypedEdge(node.id, other, EdgeType.SEMANTIC, min(1.0, sim),
                                  Origin.CONSOLIDATION, stamp), report)

    def _apply_causal(self, node: EventNode, pairs: list[CausalPair],
                      report: ConsolidationReport) -> None:
        graph = self.store.graph
        for p in pairs:
            if p.confidence < self.config.delta_causal or p.src == p.dst:
                continue
            if p.src not in graph.nodes or p.dst not in graph.nodes:
                continue
            src, dst = sorted((p.src, p.dst), key=graph.order_key)
            self._admit(TypedEdge(src, dst, EdgeType.CAUSAL, min(1.0, max(0.0, p.confidence)),
                                  Origin.CONSOLIDATION, node.timestamp), report)

    def _semantic_candidates(self, node: EventNode) -> list[tuple[str, float]]:
        """Earlier events whose cosine with ``node`` exceeds theta_sim, best first."""
        cfg, store = self.config, self.store
        if cfg.semantic_top_m == 0:
            return []
        sims = store.vectors.similarity(node.embedding)
        key = (node.timestamp, node.id)
        out = []
        for idx, other in enumerate(store.vectors.ids()):
            if other == node.id or (store.graph.nodes[other].timestamp, other) >= key:
                continue
            s = float(sims[idx])
            if s > cfg.theta_sim and s >= store.graph.theta_sim:
                out.append((other, s))
        out.sort(key=lambda kv: (-kv[1], kv[0]))
        return out[: cfg.semantic_top_m]

    # -- failure policy ---------------------------------------------------

    def handle(self, node_id: str) -> ConsolidationReport:
        """Consolidate with the failure policy: one re-queue, then give up."""
        report = self.consolidate_one(node_id)
        if report.failed:
            attempts = self._attempts.get(node_id, 0) + 1
            self._attempts[node_id] = attempts
            with self.store.gate.write():
                self.store.graph.status[node_id] = FAILED
                if attempts == 1:
                    self.store.queue.enqueue(node_id)
                    report.requeued = True
        return report

    # -- worker -----------------------------------------------------------

    def run_worker(self, max_items: int | None = None, *,
                   stop: Callable[[], bool] | None = None,
                   after_item: Callable[[ConsolidationReport], None] | None = None,
                   idle_wait: float = 0.2) -> int:
        """Drain the queue. ``max_items=None`` with a ``stop`` callback runs until
        ``stop()`` returns True; otherwise the worker returns when the queue is
        empty or ``max_items`` items have been processed."""
        processed = 0
        queue = self.store.queue
        while max_items is None or processed < max_items:
            if stop is not None and stop():
                break
            node_id = queue.claim()
            if node_id is None:
                if stop is None:
                    break
                time.sleep(idle_wait)
                continue
            try:
                report = self.handle(node_id)
                if after_item is not None:
                    after_item(report)
            except BaseException:
                queue.release(node_id)
                raise
            queue.ack(node_id)
            processed += 1
        return processed
