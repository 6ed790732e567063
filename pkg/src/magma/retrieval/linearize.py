"""Serialize a retrieved subgraph into an ordered, provenance-tagged context.

Block grammar: ``<t:ISO-8601> content <ref:id>``, one block per line. When
the token budget is exceeded, low-salience blocks are elided and each maximal
run of elided blocks collapses into ``...N intermediate events...``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from ..errors import BudgetInfeasibleError
from ..model import EdgeType, EventNode, Intent, TypedEdge, iso

TokenEstimator = Callable[[str], int]


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def render_block(node: EventNode) -> str:
    content = " ".join(node.content.split())
    return f"<t:{iso(node.timestamp)}> {content} <ref:{node.id}>"


def brevity_code(n: int) -> str:
    return f"...{n} intermediate events..."


@dataclass(frozen=True)
class Block:
    node_id: str
    timestamp: int
    text: str
    salience: float
    elided: bool = False


@dataclass
class LinearizedContext:
    blocks: list[Block]
    rendered: str
    token_count: int
    token_budget: int
    references: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        return self.rendered

    def kept(self) -> list[Block]:
        return [b for b in self.blocks if not b.elided]


def causal_order(nodes: Mapping[str, EventNode], edges: Iterable[TypedEdge]) -> list[str]:
    """Kahn's algorithm over CAUSAL edges; ready nodes leave in timestamp order."""
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for e in edges:
        if e.edge_type is EdgeType.CAUSAL and e.src in nodes and e.dst in nodes:
            succ[e.src].append(e.dst)
            indeg[e.dst] += 1
    heap = [(nodes[n].timestamp, n) for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        _, n = heapq.heappop(heap)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, (nodes[m].timestamp, m))
    if len(order) < len(nodes):
        # a cycle slipped in; append the remainder chronologically
        rest = sorted((n for n in nodes if n not in set(order)),
                      key=lambda n: (nodes[n].timestamp, n))
        order.extend(rest)
    return order


def order_nodes(nodes: Mapping[str, EventNode], edges: Iterable[TypedEdge],
                intent: Intent) -> list[str]:
    if intent is Intent.WHY:
        return causal_order(nodes, edges)
    return sorted(nodes, key=lambda n: (nodes[n].timestamp, n))


def _render(blocks: list[Block]) -> str:
    lines: list[str] = []
    run = 0
    for b in blocks:
        if b.elided:
            run += 1
            continue
        if run:
            lines.append(brevity_code(run))
            run = 0
        lines.append(b.text)
    if run:
        lines.append(brevity_code(run))
    return "\n".join(lines)


def linearize(nodes: Mapping[str, EventNode], scores: Mapping[str, float],
              edges: Iterable[TypedEdge], intent: Intent, token_budget: int,
              estimator: TokenEstimator = estimate_tokens) -> LinearizedContext:
    if not nodes:
        raise ValueError("cannot linearize an empty subgraph")
    edges = list(edges)
    order = order_nodes(nodes, edges, intent)
    blocks = [Block(n, nodes[n].timestamp, render_block(nodes[n]), float(scores.get(n, 0.0)))
              for n in order]
    top = min(range(len(blocks)), key=lambda i: (-blocks[i].salience, blocks[i].node_id))
    # fixed elision sequence: lowest salience first, ties by id
    victims = sorted((i for i in range(len(blocks)) if i != top),
                     key=lambda i: (blocks[i].salience, blocks[i].node_id))

    rendered = _render(blocks)
    tokens = estimator(rendered)
    for i in victims:
        if tokens <= token_budget:
            break
        b = blocks[i]
        blocks[i] = Block(b.node_id, b.timestamp, b.text, b.salience, True)
        rendered = _render(blocks)
        tokens = estimator(rendered)
    if tokens > token_budget:
        raise BudgetInfeasibleError(
            f"budget infeasible: {token_budget} tokens cannot hold the top block ({tokens} needed)")
    refs = [b.node_id for b in blocks if not b.elided]
    return LinearizedContext(blocks, rendered, tokens, token_budget, refs)
