"""Typed multigraph over event and entity nodes.

Events are chained by an append-only TEMPORAL backbone. CAUSAL, SEMANTIC and
ENTITY edges are layered on top by consolidation. Adjacency is kept per edge
type in both directions so neighbourhood queries never scan the edge set.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict, deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .errors import (
    DimensionMismatchError,
    DuplicateNodeError,
    EdgeRejectedError,
    OutOfOrderEventError,
    PersistenceError,
    UnknownNodeError,
)
from .model import EdgeType, EntityNode, EventNode, Origin, TypedEdge

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

PENDING = "pending"
CONSOLIDATED = "consolidated"
FAILED = "consolidation-failed"


@dataclass(frozen=True)
class Violation:
    rule: str
    ids: tuple[str, ...]
    message: str = ""

    def __str__(self) -> str:
        return f"{self.rule}: {', '.join(self.ids)}" + (f" ({self.message})" if self.message else "")


@dataclass(frozen=True)
class Subgraph:
    node_ids: frozenset[str]
    edges: tuple[TypedEdge, ...]


class MemoryGraph:
    """Node/edge storage with per-type adjacency and a temporal backbone.

    The graph itself is not thread-safe; :class:`magma.store.MemoryStore`
    wraps it in a single-writer gate.
    """

    def __init__(self, dim: int = 384, theta_sim: float = 0.20, clamp_out_of_order: bool = False):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = dim
        self.theta_sim = theta_sim
        self.clamp_out_of_order = clamp_out_of_order
        self.nodes: dict[str, EventNode] = {}
        self.entities: dict[str, EntityNode] = {}
        self.status: dict[str, str] = {}
        self.last_event_id: str | None = None
        self._edges: dict[tuple[str, str, EdgeType], TypedEdge] = {}
        # edge_type -> node -> edges touching node (either end)
        self._adj: dict[EdgeType, dict[str, list[TypedEdge]]] = {
            t: defaultdict(list) for t in EdgeType
        }

    # -- basic accessors ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes or node_id in self.entities

    @property
    def edges(self) -> list[TypedEdge]:
        return list(self._edges.values())

    def edge_count(self, edge_type: EdgeType | None = None) -> int:
        if edge_type is None:
            return len(self._edges)
        return sum(1 for k in self._edges if k[2] is edge_type)

    def has_edge(self, src: str, dst: str, edge_type: EdgeType) -> bool:
        return self._key(src, dst, edge_type) in self._edges

    def get(self, node_id: str) -> EventNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node_id!r}") from None

    def edges_of(self, node_id: str, edge_type: EdgeType) -> list[TypedEdge]:
        return list(self._adj[edge_type].get(node_id, ()))

    def order_key(self, node_id: str) -> tuple[int, str]:
        return (self.nodes[node_id].timestamp, node_id)

    # -- mutation -----------------------------------------------------------

    def add_event(self, node: EventNode) -> str:
        if node.id in self.nodes or node.id in self.entities:
            raise DuplicateNodeError(f"duplicate node id {node.id!r}")
        if len(node.embedding) != self.dim:
            raise DimensionMismatchError(
                f"embedding has dimension {len(node.embedding)}, store expects {self.dim}")
        prev = self.nodes.get(self.last_event_id) if self.last_event_id else None
        if prev is not None and node.timestamp < prev.timestamp:
            if not self.clamp_out_of_order:
                raise OutOfOrderEventError(
                    f"out-of-order event: {node.id} at {node.timestamp} precedes tail "
                    f"{prev.id} at {prev.timestamp}")
            node = replace(node, timestamp=prev.timestamp)
        self.nodes[node.id] = node
        self.status[node.id] = PENDING
        if prev is not None:
            self._insert(TypedEdge(prev.id, node.id, EdgeType.TEMPORAL, 1.0,
                                   Origin.FAST_PATH, node.timestamp))
        self.last_event_id = node.id
        return node.id

    def replace_event(self, node: EventNode) -> None:
        """Swap in a new value for an existing event (attributes only)."""
        old = self.get(node.id)
        if old.timestamp != node.timestamp or old.content != node.content \
                or old.embedding != node.embedding:
            raise EdgeRejectedError("only attributes of an event may change")
        self.nodes[node.id] = node

    def upsert_entity(self, mention: str) -> EntityNode:
        fresh = EntityNode.from_mention(mention)
        if fresh.id in self.nodes:
            raise DuplicateNodeError(f"entity id collides with event {fresh.id!r}")
        current = self.entities.get(fresh.id)
        merged = fresh if current is None else current.with_alias(mention.strip())
        self.entities[fresh.id] = merged
        return merged

    def add_edge(self, edge: TypedEdge) -> bool:
        """Admit ``edge``. Returns False when the same (src, dst, type) exists."""
        edge = self._canonical(edge)
        if edge.key in self._edges:
            return False
        self._validate(edge)
        self._insert(edge)
        return True

    def _canonical(self, edge: TypedEdge) -> TypedEdge:
        if edge.edge_type is EdgeType.SEMANTIC and edge.dst < edge.src:
            return replace(edge, src=edge.dst, dst=edge.src)
        return edge

    def _key(self, src: str, dst: str, edge_type: EdgeType) -> tuple[str, str, EdgeType]:
        if edge_type is EdgeType.SEMANTIC and dst < src:
            src, dst = dst, src
        return (src, dst, edge_type)

    def _validate(self, edge: TypedEdge) -> None:
        t = edge.edge_type
        if not 0.0 <= edge.confidence <= 1.0:
            raise EdgeRejectedError(f"confidence {edge.confidence} outside [0, 1]")
        if edge.src == edge.dst:
            raise EdgeRejectedError("self loops are not allowed")
        if t is EdgeType.ENTITY:
            if edge.src not in self.nodes or edge.dst not in self.entities:
                raise EdgeRejectedError(
                    f"ENTITY edge must join an event to an entity: {edge.src} -> {edge.dst}")
            return
        for end in (edge.src, edge.dst):
            if end not in self.nodes:
                raise EdgeRejectedError(f"dangling endpoint {end!r}")
        if t is EdgeType.TEMPORAL:
            raise EdgeRejectedError("TEMPORAL edges are owned by the backbone")
        if t is EdgeType.SEMANTIC and edge.confidence < self.theta_sim:
            raise EdgeRejectedError(
                f"semantic confidence {edge.confidence:.3f} below threshold {self.theta_sim}")
        if t is EdgeType.CAUSAL and self.order_key(edge.src) >= self.order_key(edge.dst):
            raise EdgeRejectedError("CAUSAL edge must point from earlier to later event")

    def _insert(self, edge: TypedEdge) -> None:
        self._edges[edge.key] = edge
        self._adj[edge.edge_type][edge.src].append(edge)
        self._adj[edge.edge_type][edge.dst].append(edge)

    # -- traversal helpers --------------------------------------------------

    def incident(self, node_id: str, edge_types: Iterable[EdgeType] | None = None
                 ) -> Iterator[tuple[str, TypedEdge]]:
        """Yield ``(neighbour, edge)`` over the chosen types, ignoring direction."""
        for t in (EdgeType if edge_types is None else edge_types):
            for e in self._adj[t].get(node_id, ()):
                yield e.other(node_id), e

    def event_neighbors(self, node_id: str, edge_types: Iterable[EdgeType] | None = None
                        ) -> Iterator[tuple[str, EdgeType, TypedEdge]]:
        """Event-to-event steps. Two events sharing an entity are one ENTITY hop apart.

        For ENTITY hops the yielded edge is the neighbour's link to the shared
        entity.
        """
        types = tuple(EdgeType) if edge_types is None else tuple(edge_types)
        for t in types:
            if t is EdgeType.ENTITY:
                for ent_edge in self._adj[t].get(node_id, ()):
                    for far in self._adj[t].get(ent_edge.dst, ()):
                        if far.src != node_id:
                            yield far.src, t, far
            else:
                for e in self._adj[t].get(node_id, ()):
                    yield e.other(node_id), t, e

    def neighborhood(self, center: str, hops: int = 2,
                     edge_types: Iterable[EdgeType] | None = None,
                     admit: Callable[[str], bool] | None = None) -> Subgraph:
        """Breadth-first closure around ``center``; ``admit`` can veto nodes other than the centre."""
        if center not in self:
            raise UnknownNodeError(f"unknown node {center!r}")
        if hops < 1:
            raise ValueError("hops must be >= 1")
        types = tuple(EdgeType) if edge_types is None else tuple(edge_types)
        seen = {center}
        frontier = deque([(center, 0)])
        while frontier:
            node, depth = frontier.popleft()
            if depth == hops:
                continue
            for other, _ in self.incident(node, types):
                if other not in seen and (admit is None or admit(other)):
                    seen.add(other)
                    frontier.append((other, depth + 1))
        induced = tuple(e for k, e in self._edges.items()
                        if k[2] in types and k[0] in seen and k[1] in seen)
        return Subgraph(frozenset(seen), induced)

    def induced_edges(self, node_ids: Iterable[str],
                      edge_types: Iterable[EdgeType] | None = None) -> list[TypedEdge]:
        ids = set(node_ids)
        types = set(EdgeType if edge_types is None else edge_types)
        out: dict[tuple, TypedEdge] = {}
        for n in ids:
            for t in types:
                if t is EdgeType.ENTITY:
                    continue
                for e in self._adj[t].get(n, ()):
                    if e.src in ids and e.dst in ids:
                        out[e.key] = e
        return sorted(out.values(), key=lambda e: (e.edge_type.value, e.src, e.dst))

    def backbone(self) -> list[str]:
        """Event ids in backbone order (head to tail)."""
        if not self.nodes:
            return []
        incoming = {e.dst for e in self._edges.values() if e.edge_type is EdgeType.TEMPORAL}
        heads = sorted(n for n in self.nodes if n not in incoming)
        if not heads:
            return []
        chain, node, seen = [], heads[0], set()
        while node is not None and node not in seen:
            seen.add(node)
            chain.append(node)
            outs = [e.dst for e in self._adj[EdgeType.TEMPORAL].get(node, ()) if e.src == node]
            node = outs[0] if outs else None
        return chain

    # -- audit --------------------------------------------------------------

    def audit(self) -> list[Violation]:
        out: list[Violation] = []
        for node in self.nodes.values():
            if len(node.embedding) != self.dim:
                out.append(Violation("embedding dimension", (node.id,),
                                     f"{len(node.embedding)} != {self.dim}"))
        for ent in self.entities.values():
            if ent.canonical_name not in ent.aliases:
                out.append(Violation("entity aliases", (ent.id,)))

        live: list[TypedEdge] = []
        for e in self._edges.values():
            if e.edge_type is EdgeType.ENTITY:
                ok = e.src in self.nodes and e.dst in self.entities
                if not ok:
                    rule = "dangling endpoint" if (e.src not in self or e.dst not in self) \
                        else "entity bipartite"
                    out.append(Violation(rule, (e.src, e.dst), e.edge_type.value))
                    continue
            elif e.src not in self.nodes or e.dst not in self.nodes:
                out.append(Violation("dangling endpoint", (e.src, e.dst), e.edge_type.value))
                continue
            if not 0.0 <= e.confidence <= 1.0:
                out.append(Violation("confidence range", (e.src, e.dst), str(e.confidence)))
            live.append(e)

        in_deg: dict[str, int] = defaultdict(int)
        out_deg: dict[str, int] = defaultdict(int)
        for e in live:
            t = e.edge_type
            if t is EdgeType.TEMPORAL:
                in_deg[e.dst] += 1
                out_deg[e.src] += 1
                if self.nodes[e.src].timestamp > self.nodes[e.dst].timestamp:
                    out.append(Violation("temporal order", (e.src, e.dst)))
            elif t is EdgeType.SEMANTIC:
                if e.confidence < self.theta_sim:
                    out.append(Violation("semantic threshold", (e.src, e.dst),
                                         f"{e.confidence:.4f} < {self.theta_sim}"))
                if e.dst < e.src:
                    out.append(Violation("semantic endpoint order", (e.src, e.dst)))
            elif t is EdgeType.CAUSAL:
                if self.order_key(e.src) >= self.order_key(e.dst):
                    out.append(Violation("causal orientation", (e.src, e.dst)))

        for n in sorted(self.nodes):
            if in_deg[n] > 1 or out_deg[n] > 1:
                out.append(Violation("temporal chain", (n,),
                                     f"in={in_deg[n]} out={out_deg[n]}"))
        if self.nodes:
            chain = self.backbone()
            if len(chain) != len(self.nodes):
                out.append(Violation("temporal chain", tuple(sorted(set(self.nodes) - set(chain)))
                                     or (), "backbone does not cover every event"))
            elif self.last_event_id != chain[-1]:
                out.append(Violation("temporal tail", (str(self.last_event_id), chain[-1])))
        elif self.last_event_id is not None:
            out.append(Violation("temporal tail", (self.last_event_id,), "empty graph"))
        return out

    # -- persistence --------------------------------------------------------

    def records(self) -> Iterator[dict[str, Any]]:
        yield {"kind": "header", "version": FORMAT_VERSION, "dim": self.dim,
               "theta_sim": self.theta_sim, "last_event_id": self.last_event_id}
        for node in self.nodes.values():
            yield {"kind": "node", **node.to_dict(), "status": self.status.get(node.id, PENDING)}
        for ent in self.entities.values():
            yield {"kind": "entity", **ent.to_dict()}
        for e in self._edges.values():
            yield {"kind": "edge", **e.to_dict()}
        yield {"kind": "footer", "nodes": len(self.nodes), "entities": len(self.entities),
               "edges": len(self._edges)}

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
                fh.write("\n")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path, clamp_out_of_order: bool = False) -> "MemoryGraph":
        """Read a file written by :meth:`save`.

        Records are inserted raw, so a hand-edited file that breaks invariants
        still loads and :meth:`audit` reports the damage.
        """
        graph: MemoryGraph | None = None
        footer: dict[str, Any] | None = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise PersistenceError(f"invalid JSON: {exc.msg}", lineno, line[:80]) from None
                if not isinstance(rec, dict) or "kind" not in rec:
                    raise PersistenceError("record without kind", lineno, line[:80])
                kind = rec["kind"]
                try:
                    if kind == "header":
                        if graph is not None:
                            raise PersistenceError("second header", lineno)
                        graph = cls(int(rec["dim"]), float(rec["theta_sim"]), clamp_out_of_order)
                        graph.last_event_id = rec.get("last_event_id")
                        continue
                    if graph is None:
                        raise PersistenceError("missing header", lineno)
                    if footer is not None:
                        raise PersistenceError("record after footer", lineno)
                    if kind == "footer":
                        footer = rec
                    elif kind == "node":
                        node = EventNode.from_dict(rec)
                        if node.id in graph.nodes:
                            raise PersistenceError(f"duplicate node {node.id}", lineno)
                        graph.nodes[node.id] = node
                        graph.status[node.id] = rec.get("status", PENDING)
                    elif kind == "entity":
                        ent = EntityNode.from_dict(rec)
                        graph.entities[ent.id] = ent
                    elif kind == "edge":
                        edge = TypedEdge.from_dict(rec)
                        if edge.key in graph._edges:
                            raise PersistenceError(f"duplicate edge {edge.key}", lineno)
                        graph._insert(edge)
                    else:
                        logger.debug("skipping unknown record kind %r on line %d", kind, lineno)
                except PersistenceError:
                    raise
                except (KeyError, TypeError, ValueError) as exc:
                    raise PersistenceError(f"bad {kind} record: {exc}", lineno, line[:80]) from None
        if graph is None:
            raise PersistenceError("empty or truncated file: no header")
        if footer is None:
            raise PersistenceError("truncated file: no footer record")
        counts = (len(graph.nodes), len(graph.entities), len(graph._edges))
        expected = (footer.get("nodes"), footer.get("entities"), footer.get("edges"))
        if counts != expected:
            raise PersistenceError(f"record counts {counts} disagree with footer {expected}")
        return graph
