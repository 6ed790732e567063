"""Anchor selection by weighted reciprocal rank fusion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

from .plan import QueryPlan

SIGNALS = ("vector", "keyword", "time")


@dataclass(frozen=True)
class AnchorConfig:
    rrf_k: float = 60.0
    vector_top_k: int = 20
    keyword_top_k: int = 20
    anchor_top_k: int = 8
    list_weights: Mapping[str, float] = field(
        default_factory=lambda: {"vector": 1.0, "keyword": 3.0, "time": 1.0})

    def __post_init__(self) -> None:
        if self.rrf_k <= 0:
            raise ValueError("rrf_k must be positive")
        if min(self.vector_top_k, self.keyword_top_k, self.anchor_top_k) < 1:
            raise ValueError("top-k values must be >= 1")
        unknown = set(self.list_weights) - set(SIGNALS)
        if unknown:
            raise ValueError(f"unknown signals {sorted(unknown)}")


def fuse_rankings(rankings: Mapping[str, Sequence[str]], k: float = 60.0,
                  weights: Mapping[str, float] | None = None) -> dict[str, float]:
    """sum over signals of weight / (k + rank); ranks are 1-based."""
    fused: dict[str, float] = {}
    for signal, ranked in rankings.items():
        w = 1.0 if weights is None else weights.get(signal, 1.0)
        for rank, node_id in enumerate(ranked, start=1):
            fused[node_id] = fused.get(node_id, 0.0) + w / (k + rank)
    return fused


def top_k(scores: Mapping[str, float], k: int) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


class _Searchable(Protocol):
    def search(self, query, top_k: int) -> list[tuple[str, float]]: ...


class _Windowed(Protocol):
    def window(self, start: int, end: int) -> list[str]: ...


@dataclass
class AnchorResult:
    anchors: list[tuple[str, float]]
    rankings: dict[str, list[str]]
    fallback: bool = False


def gather_signals(plan: QueryPlan, vectors: _Searchable, keywords: _Searchable,
                   times: _Windowed, timestamps: Mapping[str, int],
                   cfg: AnchorConfig) -> dict[str, list[str]]:
    rankings: dict[str, list[str]] = {}
    # a zero or negative cosine is not a hit
    vec = [n for n, s in vectors.search(plan.embedding, cfg.vector_top_k) if s > 0.0]
    if vec:
        rankings["vector"] = vec
    if plan.keywords:
        key = [n for n, _ in keywords.search(plan.keywords, cfg.keyword_top_k)]
        if key:
            rankings["keyword"] = key
    if plan.window is not None:
        in_window = times.window(*plan.window)
        # recency: newest first
        ranked = sorted(in_window, key=lambda n: (-timestamps[n], n))
        if ranked:
            rankings["time"] = ranked
    return rankings


def find_anchors(plan: QueryPlan, vectors: _Searchable, keywords: _Searchable,
                 times: _Windowed, timestamps: Mapping[str, int],
                 cfg: AnchorConfig = AnchorConfig()) -> AnchorResult:
    """Fuse the available signals and keep the best ``anchor_top_k`` nodes.

    An empty result means no signal returned anything; the caller decides
    what to fall back on.
    """
    rankings = gather_signals(plan, vectors, keywords, times, timestamps, cfg)
    fused = fuse_rankings(rankings, cfg.rrf_k, cfg.list_weights)
    return AnchorResult(top_k(fused, cfg.anchor_top_k), rankings)
