"""Query decomposition into intent, time window, dense vector and keywords."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from ..index import tokenize
from ..model import Intent
from .intent import classify_intent
from .timeparse import Window, parse_time

_QUESTION_WORDS = frozenset(
    "when where why how whose whom many much did does do can could would should will "
    "tell me something anything ever".split())


@dataclass(frozen=True)
class QueryPlan:
    raw: str
    intent: Intent
    window: Window | None
    embedding: tuple[float, ...]
    keywords: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.window is not None and self.window[0] > self.window[1]:
            raise ValueError("time window is inverted")


def extract_keywords(query: str) -> tuple[str, ...]:
    return tuple(dict.fromkeys(t for t in tokenize(query) if t not in _QUESTION_WORDS))


def build_plan(query: str, session_now, embed: Callable[[str], Sequence[float]],
               known_entities: Iterable[str] = ()) -> QueryPlan:
    if not query.strip():
        raise ValueError("empty query")
    return QueryPlan(
        raw=query,
        intent=classify_intent(query, known_entities),
        window=parse_time(query, session_now),
        embedding=tuple(float(x) for x in embed(query)),
        keywords=extract_keywords(query),
    )
