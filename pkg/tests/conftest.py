from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import pytest

from magma.config import EngineConfig
from magma.graph import MemoryGraph
from magma.model import EdgeType, EventNode, Origin, TypedEdge, to_epoch
from magma.providers import HashingEncoder
from magma.store import MemoryStore

DATA = Path(__file__).resolve().parents[1] / "src" / "magma" / "data"
T0 = to_epoch("2024-01-01T00:00:00Z")


def unit(dim: int, hot: int) -> tuple[float, ...]:
    v = [0.0] * dim
    v[hot % dim] = 1.0
    return tuple(v)


def event(n: int, ts: int | None = None, dim: int = 8, content: str | None = None,
          embedding: Sequence[float] | None = None, episode: str | None = None) -> EventNode:
    return EventNode(f"ev-{n:06d}", content or f"event number {n}",
                     T0 + 60 * n if ts is None else ts,
                     tuple(embedding) if embedding is not None else unit(dim, n),
                     episode_id=episode)


def chain_graph(n: int, dim: int = 8, theta: float = 0.2) -> MemoryGraph:
    g = MemoryGraph(dim, theta)
    for i in range(1, n + 1):
        g.add_event(event(i, dim=dim))
    return g


def edge(src: str, dst: str, etype: EdgeType, conf: float = 1.0) -> TypedEdge:
    return TypedEdge(src, dst, etype, conf, Origin.MANUAL, 0)


def random_store(rng: np.random.Generator, n: int, dim: int = 16) -> MemoryStore:
    """Store with a backbone plus random CAUSAL, SEMANTIC and ENTITY edges."""
    store = MemoryStore(dim, 0.2)
    g = store.graph
    for i in range(1, n + 1):
        vec = rng.normal(size=dim)
        store.insert_event(event(i, ts=T0 + 10 * i, embedding=vec / np.linalg.norm(vec)))
    ids = sorted(g.nodes)
    for _ in range(n):
        a, b = rng.choice(len(ids), 2, replace=False)
        src, dst = sorted((ids[a], ids[b]))
        g.add_edge(edge(src, dst, EdgeType.CAUSAL, float(rng.uniform(0.5, 1))))
        g.add_edge(edge(src, dst, EdgeType.SEMANTIC, float(rng.uniform(0.2, 1))))
    for k in range(max(1, n // 5)):
        ent = g.upsert_entity(f"Person{k}")
        for j in rng.choice(len(ids), 3, replace=False):
            g.add_edge(edge(ids[j], ent.id, EdgeType.ENTITY))
    return store


@pytest.fixture
def encoder() -> HashingEncoder:
    return HashingEncoder(64)


@pytest.fixture
def small_config(tmp_path) -> EngineConfig:
    return EngineConfig(store_path=str(tmp_path / "store"), dim=64)


# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
