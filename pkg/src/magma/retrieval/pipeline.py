"""Query pipeline: plan -> anchors -> traversal -> linearization."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any

from ..errors import EmptyMemoryError
from ..model import to_epoch
from ..providers import Encoder
from ..store import MemoryStore
from .anchors import AnchorConfig, find_anchors
from .linearize import LinearizedContext, TokenEstimator, estimate_tokens, linearize
from .plan import QueryPlan, build_plan
from .traverse import RetrievedSubgraph, TraversalPolicy, traverse


@dataclass
class RetrievalResult:
    context: LinearizedContext
    plan: QueryPlan
    subgraph: RetrievedSubgraph
    diagnostics: dict[str, Any] = field(default_factory=dict)


def retrieve(store: MemoryStore, query: str, session_now: Any, encoder: Encoder,
             anchor_cfg: AnchorConfig = AnchorConfig(),
             policy: TraversalPolicy = TraversalPolicy(),
             token_budget: int = 4000,
             estimator: TokenEstimator = estimate_tokens) -> RetrievalResult:
    timings: dict[str, float] = {}
    clock = time.perf_counter()

    def lap(stage: str) -> None:
        nonlocal clock
        now = time.perf_counter()
        timings[stage] = round((now - clock) * 1000.0, 3)
        clock = now

    now = to_epoch(session_now)
    embedding = encoder.embed([query])[0]
    lap("embed")
    with store.gate.read():
        graph = store.graph
        if not graph.nodes:
            raise EmptyMemoryError("no memory: the store holds no events")
        known = [e.canonical_name for e in graph.entities.values()]
        plan = build_plan(query, now, lambda _q: embedding, known)
        lap("plan")

        stamps = {n: node.timestamp for n, node in graph.nodes.items()}
        result = find_anchors(plan, store.vectors, store.keywords, store.times, stamps, anchor_cfg)
        anchors = result.anchors
        fallback = not anchors
        if fallback:
            recent = store.times.most_recent(anchor_cfg.anchor_top_k)
            anchors = [(n, 1.0 / (anchor_cfg.rrf_k + r)) for r, n in enumerate(recent, start=1)]
        lap("anchors")

        sub = traverse(anchors, plan.intent, plan.embedding, policy, graph)
        lap("traverse")

        context = linearize(sub.nodes, sub.scores, sub.edges, plan.intent, token_budget, estimator)
        lap("linearize")

    diagnostics = {
        "intent": plan.intent.value,
        "window": list(plan.window) if plan.window else None,
        "keywords": list(plan.keywords),
        "signals": {k: len(v) for k, v in result.rankings.items()},
        "anchors": [[n, s] for n, s in anchors],
        "anchor_fallback": fallback,
        "visited": len(sub.scores),
        "depth": sub.depth,
        "edge_types": sorted(t.value for t in policy.edge_types),
        "subgraph_edges": sub.edge_type_counts(),
        "hops": [[h.src, h.dst, h.edge_type.value] for h in sub.hops],
        "tokens": context.token_count,
        "timings": timings,
    }
    return RetrievalResult(context, plan, sub, diagnostics)
