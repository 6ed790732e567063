import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magma.errors import DimensionMismatchError
from magma.index import STOPWORDS, KeywordIndex, TimeIndex, VectorIndex, tokenize


class TestTokenize:
    def test_stopword_list_size(self):
        assert len(STOPWORDS) == 50

    def test_splits_on_non_alphanumeric_and_folds_case(self):
        assert tokenize("Melanie's CLARINET, re-tuned!") == ["melanie", "s", "clarinet", "re", "tuned"]

    def test_unicode_letters_kept(self):
        assert tokenize("Café Zürich") == ["café", "zürich"]

    def test_all_stopwords(self):
        assert tokenize("what is the") == []


class TestVectorIndex:
    def test_self_match(self):
        idx = VectorIndex(3)
        idx.add("a", [1, 0, 0])
        idx.add("b", [0, 1, 0])
        (top, score), _ = idx.search([1, 0, 0], 2)
        assert top == "a" and score == pytest.approx(1.0)

    def test_orthogonal_scores_zero(self):
        idx = VectorIndex(2)
        idx.add("a", [1, 0])
        assert idx.search([0, 1], 1) == [("a", 0.0)]

    def test_dimension_mismatch(self):
        idx = VectorIndex(3)
        with pytest.raises(DimensionMismatchError):
            idx.add("a", [1, 0])
        idx.add("a", [1, 0, 0])
        with pytest.raises(DimensionMismatchError):
            idx.search([1, 0], 1)

    def test_ties_by_id(self):
        idx = VectorIndex(2)
        for n in ("c", "a", "b"):
            idx.add(n, [1, 1])
        assert [n for n, _ in idx.search([1, 1], 3)] == ["a", "b", "c"]

    def test_readd_overwrites(self):
        idx = VectorIndex(2)
        idx.add("a", [1, 0])
        idx.add("a", [0, 1])
        assert len(idx) == 1 and idx.search([0, 1], 1)[0][1] == pytest.approx(1.0)

    @pytest.mark.parametrize("n, k", [(50, 5), (200, 200)])
    def test_matches_full_scan(self, n, k):
        rng = np.random.default_rng(n)
        vecs = {f"n{i:03d}": rng.normal(size=16) for i in range(n)}
        idx = VectorIndex(16)
        for node_id, v in vecs.items():
            idx.add(node_id, v)
        q = rng.normal(size=16)

        def cos(a, b):
            return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

        oracle = sorted(((nid, cos(v, q)) for nid, v in vecs.items()), key=lambda t: (-t[1], t[0]))[:k]
        got = idx.search(q, k)
        assert [g[0] for g in got] == [o[0] for o in oracle]
        assert np.allclose([g[1] for g in got], [o[1] for o in oracle], atol=1e-12)


def brute_keyword(docs: dict[str, str], query: list[str]) -> dict[str, float]:
    """Direct tf * ln(1 + N/df) scoring over raw documents."""
    toks = {d: tokenize(t) for d, t in docs.items()}
    n = len(docs)
    scores: dict[str, float] = {}
    for term in dict.fromkeys(t for q in query for t in tokenize(q)):
        df = sum(term in ts for ts in toks.values())
        if not df:
            continue
        for d, ts in toks.items():
            tf = ts.count(term)
            if tf:
                scores[d] = scores.get(d, 0.0) + tf * math.log(1 + n / df)
    return scores


class TestKeywordIndex:
    def test_unique_term(self):
        idx = KeywordIndex()
        idx.add("a", ["the clarinet"])
        idx.add("b", ["a violin"])
        assert idx.search(["clarinet"], 5)[0][0] == "a"

    def test_absent_term(self):
        idx = KeywordIndex()
        idx.add("a", ["violin"])
        assert idx.search(["oboe"], 5) == []

    def test_stopword_query_empty(self):
        idx = KeywordIndex()
        idx.add("a", ["the violin"])
        assert idx.search(["the", "of"], 5) == []

    def test_two_terms_match_oracle(self):
        rng = np.random.default_rng(7)
        vocab = "hike canyon violin clarinet rain picnic dog marathon project trail".split()
        docs = {f"d{i:02d}": " ".join(rng.choice(vocab, 6)) for i in range(20)}
        idx = KeywordIndex()
        for d, t in docs.items():
            idx.add(d, [t])
        oracle = brute_keyword(docs, ["hike", "canyon"])
        expect = sorted(oracle.items(), key=lambda kv: (-kv[1], kv[0]))
        got = idx.search(["hike", "canyon"], 20)
        assert [g[0] for g in got] == [e[0] for e in expect]
        assert np.allclose([g[1] for g in got], [e[1] for e in expect])

    def test_reindex_replaces_postings(self):
        idx = KeywordIndex()
        idx.add("a", ["violin"])
        idx.add("a", ["clarinet"])
        assert idx.search(["violin"], 5) == []
        assert idx.doc_lengths == {"a": 1}


class TestTimeIndex:
    def _fixture(self):
        idx = TimeIndex()
        day = 86_400
        stamps = {"a": 0, "b": day + 10, "c": day + 20, "d": day + 30, "e": 3 * day}
        for n, ts in stamps.items():
            idx.add(n, ts)
        return idx, stamps, day

    def test_all(self):
        idx, stamps, _ = self._fixture()
        assert idx.window(-1, 10**9) == ["a", "b", "c", "d", "e"]

    def test_empty_gap(self):
        idx, _, day = self._fixture()
        assert idx.window(day + 31, 3 * day - 1) == []

    def test_single_day_matches_scan(self):
        idx, stamps, day = self._fixture()
        lo, hi = day, 2 * day - 1
        oracle = sorted((n for n, t in stamps.items() if lo <= t <= hi), key=lambda n: stamps[n])
        assert idx.window(lo, hi) == oracle == ["b", "c", "d"]

    def test_inverted(self):
        with pytest.raises(ValueError):
            TimeIndex().window(5, 1)

    def test_most_recent(self):
        idx, _, _ = self._fixture()
        assert idx.most_recent(2) == ["e", "d"]

    @settings(max_examples=50)
    @given(st.lists(st.integers(0, 100), max_size=30), st.integers(0, 100), st.integers(0, 100))
    def test_window_property(self, stamps, a, b):
        lo, hi = min(a, b), max(a, b)
        idx = TimeIndex()
        for i, t in enumerate(stamps):
            idx.add(f"n{i:02d}", t)
        got = idx.window(lo, hi)
        assert sorted(got) == sorted(f"n{i:02d}" for i, t in enumerate(stamps) if lo <= t <= hi)
        assert [stamps[int(g[1:])] for g in got] == sorted(stamps[int(g[1:])] for g in got)
