"""Intent-weighted beam search over the typed graph."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..graph import MemoryGraph
from ..model import EdgeType, EventNode, Intent, TypedEdge

WeightTable = Mapping[Intent, Mapping[EdgeType, float]]

DEFAULT_WEIGHTS: dict[Intent, dict[EdgeType, float]] = {
    Intent.WHY: {EdgeType.CAUSAL: 4.0, EdgeType.TEMPORAL: 1.0,
                 EdgeType.SEMANTIC: 1.0, EdgeType.ENTITY: 1.5},
    Intent.WHEN: {EdgeType.TEMPORAL: 3.0, EdgeType.CAUSAL: 1.0,
                  EdgeType.SEMANTIC: 1.0, EdgeType.ENTITY: 1.0},
    Intent.ENTITY: {EdgeType.ENTITY: 4.0, EdgeType.SEMANTIC: 1.5,
                    EdgeType.CAUSAL: 1.0, EdgeType.TEMPORAL: 0.5},
    Intent.GENERAL: {t: 1.0 for t in EdgeType},
}


def uniform_weights(value: float = 1.0) -> dict[Intent, dict[EdgeType, float]]:
    return {i: {t: value for t in EdgeType} for i in Intent}


@dataclass(frozen=True)
class TraversalPolicy:
    lambda1: float = 1.0
    lambda2: float = 0.5
    weights: WeightTable = field(default_factory=lambda: DEFAULT_WEIGHTS)
    gamma: float = 0.85
    beam_width: int = 8
    max_depth: int = 5
    budget: int = 200
    drop_threshold: float = 0.15
    edge_types: frozenset[EdgeType] = frozenset(EdgeType)

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.budget < self.beam_width:
            raise ValueError("budget must be >= beam_width")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0.0 <= self.drop_threshold <= 1.0:
            raise ValueError("drop_threshold must lie in [0, 1]")
        for intent in Intent:
            row = self.weights.get(intent)
            if row is None or any(t not in row for t in EdgeType):
                raise ValueError(f"weight table incomplete for {intent.value}")

    def weight(self, intent: Intent, edge_type: EdgeType) -> float:
        return self.weights[intent][edge_type]

    def without(self, *edge_types: EdgeType) -> "TraversalPolicy":
        return replace(self, edge_types=self.edge_types - set(edge_types))


def transition_score(policy: TraversalPolicy, intent: Intent, edge_type: EdgeType,
                     similarity: float) -> float:
    return math.exp(policy.lambda1 * policy.weight(intent, edge_type)
                    + policy.lambda2 * similarity)


@dataclass(frozen=True)
class Hop:
    src: str
    dst: str
    edge_type: EdgeType
    score: float


@dataclass
class RetrievedSubgraph:
    nodes: dict[str, EventNode]
    scores: dict[str, float]
    hops: list[Hop]
    edges: list[TypedEdge]
    anchors: list[str]
    depth: int = 0

    def edge_type_counts(self) -> dict[str, int]:
        counts = {t.value: 0 for t in EdgeType}
        for e in self.edges:
            counts[e.edge_type.value] += 1
        for h in self.hops:
            if h.edge_type is EdgeType.ENTITY:
                counts[EdgeType.ENTITY.value] += 1
        return counts


def beam_search(anchors: Sequence[tuple[str, float]], intent: Intent, policy: TraversalPolicy,
                neighbors: Callable[[str], Iterable[tuple[str, EdgeType]]],
                similarity: Callable[[str], float]) -> tuple[dict[str, float], list[Hop], int]:
    """Core search, independent of storage.

    Returns best scores for every visited node, the hop that produced each
    non-anchor score, and the depth reached.
    """
    if not anchors:
        raise ValueError("traversal needs at least one anchor")
    scores: dict[str, float] = {}
    for node_id, s in anchors:
        scores.setdefault(node_id, s)
    frontier = list(scores)
    hops: list[Hop] = []
    depth = 0
    sim_cache: dict[str, float] = {}

    for _ in range(policy.max_depth):
        if len(scores) >= policy.budget or not frontier:
            break
        best: dict[str, tuple[float, str, EdgeType]] = {}
        for u in frontier:
            carried = scores[u] * policy.gamma
            for v, etype in neighbors(u):
                if v in scores or etype not in policy.edge_types:
                    continue
                if v not in sim_cache:
                    sim_cache[v] = similarity(v)
                s = carried + transition_score(policy, intent, etype, sim_cache[v])
                prev = best.get(v)
                if prev is None or s > prev[0] or (s == prev[0] and (u, etype.value) < (prev[1], prev[2].value)):
                    best[v] = (s, u, etype)
        if not best:
            break
        cutoff = policy.drop_threshold * max(b[0] for b in best.values())
        ranked = sorted((kv for kv in best.items() if kv[1][0] >= cutoff),
                        key=lambda kv: (-kv[1][0], kv[0]))
        room = min(policy.beam_width, policy.budget - len(scores))
        frontier = []
        for v, (s, u, etype) in ranked[:room]:
            scores[v] = s
            hops.append(Hop(u, v, etype, s))
            frontier.append(v)
        depth += 1
    return scores, hops, depth


def traverse(anchors: Sequence[tuple[str, float]], intent: Intent, query_vec: Sequence[float],
             policy: TraversalPolicy, graph: MemoryGraph) -> RetrievedSubgraph:
    q = np.asarray(query_vec, dtype=np.float64)
    qn = np.linalg.norm(q)
    q = q / qn if qn > 0 else q
    types = tuple(t for t in EdgeType if t in policy.edge_types)

    def neighbors(u: str):
        for v, etype, _ in graph.event_neighbors(u, types):
            yield v, etype

    def similarity(v: str) -> float:
        emb = np.asarray(graph.nodes[v].embedding)
        n = np.linalg.norm(emb)
        return float(emb @ q / n) if n > 0 else 0.0

    scores, hops, depth = beam_search(anchors, intent, policy, neighbors, similarity)
    nodes = {n: graph.nodes[n] for n in scores}
    edges = graph.induced_edges(nodes, policy.edge_types)
    anchor_ids = list(dict.fromkeys(a for a, _ in anchors))
    return RetrievedSubgraph(nodes, scores, hops, edges, anchor_ids, depth)
