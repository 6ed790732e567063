"""Dense, sparse and temporal indexes over event nodes."""

from __future__ import annotations

import bisect
import math
import re
from collections import Counter, defaultdict
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatchError

# Fixed list; changing it changes keyword ranks.
STOPWORDS = frozenset("""
a an the and or but if of at by for with about to from in on into over
is are was were be been do does did have has had i me my we our you
your he she it they them this that these those what which who
""".split())
assert len(STOPWORDS) == 50

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lower-case, split on non-alphanumerics, drop stopwords."""
    return [t for t in _TOKEN.findall(text.lower()) if t not in STOPWORDS]


def _rank(scores: dict[str, float], top_k: int) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]


class VectorIndex:
    """Exact cosine search by brute-force matrix product."""

    def __init__(self, dim: int):
        self.dim = dim
        self._ids: list[str] = []
        self._pos: dict[str, int] = {}
        self._unit = np.zeros((0, dim), dtype=np.float64)
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._pos

    def ids(self) -> list[str]:
        return list(self._ids)

    @staticmethod
    def _normalize(vec: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def add(self, node_id: str, embedding: Sequence[float]) -> None:
        vec = np.asarray(embedding, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DimensionMismatchError(f"expected dimension {self.dim}, got {vec.shape}")
        if node_id in self._pos:
            self._unit[self._pos[node_id]] = self._normalize(vec)
            return
        if self._n == len(self._unit):
            grown = np.zeros((max(16, 2 * len(self._unit)), self.dim))
            grown[: self._n] = self._unit[: self._n]
            self._unit = grown
        self._unit[self._n] = self._normalize(vec)
        self._pos[node_id] = self._n
        self._ids.append(node_id)
        self._n += 1

    def similarity(self, query_vec: Sequence[float]) -> np.ndarray:
        """Cosine of ``query_vec`` against every stored vector, in insertion order."""
        q = np.asarray(query_vec, dtype=np.float64)
        if q.shape != (self.dim,):
            raise DimensionMismatchError(f"query has dimension {q.shape}, index expects {self.dim}")
        return self._unit[: self._n] @ self._normalize(q)

    def cosine(self, a: str, b: str) -> float:
        return float(self._unit[self._pos[a]] @ self._unit[self._pos[b]])

    def vector(self, node_id: str) -> np.ndarray:
        return self._unit[self._pos[node_id]]

    def search(self, query_vec: Sequence[float], top_k: int) -> list[tuple[str, float]]:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        sims = self.similarity(query_vec)
        if self._n == 0:
            return []
        ids = np.asarray(self._ids)
        # lexsort: last key is primary
        order = np.lexsort((ids, -sims))[:top_k]
        return [(self._ids[i], float(sims[i])) for i in order]


class KeywordIndex:
    """Inverted index scored by sum of tf * ln(1 + N/df) over query terms."""

    def __init__(self) -> None:
        self.postings: dict[str, dict[str, int]] = defaultdict(dict)
        self.doc_lengths: dict[str, int] = {}
        self._terms: dict[str, Counter] = {}

    def __len__(self) -> int:
        return len(self.doc_lengths)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.doc_lengths

    def add(self, node_id: str, texts: Iterable[str]) -> None:
        """Index (or re-index) a document built from ``texts``."""
        if node_id in self.doc_lengths:
            self.remove(node_id)
        counts = Counter(t for text in texts for t in tokenize(text))
        for term, tf in counts.items():
            self.postings[term][node_id] = tf
        self._terms[node_id] = counts
        self.doc_lengths[node_id] = sum(counts.values())

    def remove(self, node_id: str) -> None:
        for term in self._terms.pop(node_id, ()):
            plist = self.postings.get(term)
            if plist is not None:
                plist.pop(node_id, None)
                if not plist:
                    del self.postings[term]
        self.doc_lengths.pop(node_id, None)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + len(self.doc_lengths) / df) if df else 0.0

    def search(self, keywords: Iterable[str], top_k: int) -> list[tuple[str, float]]:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        terms = dict.fromkeys(t for kw in keywords for t in tokenize(kw))
        scores: dict[str, float] = defaultdict(float)
        for term in terms:
            plist = self.postings.get(term)
            if not plist:
                continue
            weight = self.idf(term)
            for node_id, tf in plist.items():
                scores[node_id] += tf * weight
        return _rank(scores, top_k)


class TimeIndex:
    """Events sorted by (timestamp, id) for window filtering."""

    def __init__(self) -> None:
        self._keys: list[tuple[int, str]] = []

    def __len__(self) -> int:
        return len(self._keys)

    def add(self, node_id: str, timestamp: int) -> None:
        bisect.insort(self._keys, (timestamp, node_id))

    def window(self, start: int, end: int) -> list[str]:
        """Ids with ``start <= timestamp <= end`` in ascending time."""
        if start > end:
            raise ValueError(f"inverted window [{start}, {end}]")
        lo = bisect.bisect_left(self._keys, (start, ""))
        hi = bisect.bisect_left(self._keys, (end + 1, ""))
        return [node_id for _, node_id in self._keys[lo:hi]]

    def most_recent(self, k: int) -> list[str]:
        return [node_id for _, node_id in reversed(self._keys[-k:])] if k > 0 else []
