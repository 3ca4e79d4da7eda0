import math
import random

import numpy as np
import pytest

from crossrank.corpus import Document, Judgments
from crossrank.errors import DataError
from crossrank.retrieval import (
    INJECTED,
    PRESELECTED,
    CandidateEntry,
    CandidateSet,
    InvertedIndex,
    grid_search_lambda,
    idf,
    minmax_to_unit,
    preselect,
    score_all,
    tfidf_score,
    weighted_rerank,
)


def doc(did, text, side="target", labels=("x",)):
    return Document(id=did, side=side, tokens=tuple(text.split()), meta_labels=frozenset(labels))


def brute_force_tfidf(docs_tokens, query_tokens, doc_id):
    """Independent evaluation of sum_t tf * ln((N+1)/(df+1) + 1)."""
    n = len(docs_tokens)
    total = 0.0
    for term in set(query_tokens):
        tf = docs_tokens[doc_id].count(term)
        if not tf:
            continue
        df = sum(1 for toks in docs_tokens.values() if term in toks)
        total += tf * math.log((n + 1) / (df + 1) + 1)
    return total


class TestInvertedIndex:
    def test_single_doc_counts(self):
        index = InvertedIndex.build([doc("d1", "a a b")])
        assert index.tf("a", "d1") == 2
        assert index.tf("b", "d1") == 1
        assert index.df("a") == 1 and index.df("b") == 1
        assert index.n_docs == 1

    def test_absent_term_empty_postings(self):
        index = InvertedIndex.build([doc("d1", "a b")])
        assert index.df("zzz") == 0
        assert index.tf("zzz", "d1") == 0

    def test_df_matches_brute_force(self):
        texts = {"d1": "a b c a", "d2": "b d", "d3": "a e e"}
        index = InvertedIndex.build([doc(k, v) for k, v in texts.items()])
        for term in "abcde":
            expected = sum(1 for t in texts.values() if term in t.split())
            assert index.df(term) == expected

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DataError):
            InvertedIndex.build([doc("d1", "a"), doc("d1", "b")])

    def test_empty_collection_rejected(self):
        with pytest.raises(DataError):
            InvertedIndex.build([])

    def test_postings_sorted_by_doc_id(self):
        index = InvertedIndex.build([doc("d3", "a"), doc("d1", "a"), doc("d2", "a")])
        assert [d for d, _ in index.postings["a"]] == ["d1", "d2", "d3"]

    def test_save_load_round_trip(self, tmp_path):
        index = InvertedIndex.build([doc("d1", "a b a"), doc("d2", "b c")])
        path = tmp_path / "index.json"
        index.save(path)
        loaded = InvertedIndex.load(path)
        assert loaded.postings == index.postings
        assert loaded.doc_lengths == index.doc_lengths

    def test_load_rejects_wrong_version(self, tmp_path):
        path = tmp_path / "index.json"
        path.write_text('{"format": "crossrank-index", "version": 99, "postings": {}, "doc_lengths": {}}')
        with pytest.raises(DataError, match="version"):
            InvertedIndex.load(path)


class TestTfidfScore:
    def test_no_matching_terms_is_zero(self):
        index = InvertedIndex.build([doc("d1", "a b")])
        assert tfidf_score(index, ["z", "q"], "d1") == 0.0

    def test_single_doc_hand_case(self):
        index = InvertedIndex.build([doc("d1", "a")])
        assert tfidf_score(index, ["a"], "d1") == pytest.approx(math.log(2.0), abs=1e-15)

    def test_matches_brute_force(self):
        texts = {"d1": "a b c a", "d2": "b d b", "d3": "a e"}
        index = InvertedIndex.build([doc(k, v) for k, v in texts.items()])
        for query in (["a", "b"], ["b", "e", "zzz"], ["c", "c", "d"]):
            for did in texts:
                got = tfidf_score(index, query, did)
                want = brute_force_tfidf({k: v.split() for k, v in texts.items()}, query, did)
                assert got == pytest.approx(want, abs=1e-12)

    def test_monotone_in_tf(self):
        # adding occurrences of a query term never decreases the score
        for extra in range(5):
            text = "a " * (1 + extra) + "b"
            index = InvertedIndex.build([doc("d1", text.strip()), doc("d2", "c")])
            lower = tfidf_score(index, ["a"], "d1")
            index2 = InvertedIndex.build([doc("d1", (text + " a").strip()), doc("d2", "c")])
            higher = tfidf_score(index2, ["a"], "d1")
            assert higher >= lower

    def test_unknown_doc_rejected(self):
        index = InvertedIndex.build([doc("d1", "a")])
        with pytest.raises(ValueError):
            tfidf_score(index, ["a"], "nope")

    def test_score_all_matches_pointwise(self):
        texts = {"d1": "a b", "d2": "b b c", "d3": "e"}
        index = InvertedIndex.build([doc(k, v) for k, v in texts.items()])
        scores = score_all(index, ["b", "c"])
        for did in ("d1", "d2"):
            assert scores[did] == pytest.approx(tfidf_score(index, ["b", "c"], did))
        assert "d3" not in scores


def toy_index_and_judgments():
    texts = {
        "d1": "apple banana apple",
        "d2": "banana cherry",
        "d3": "apple cherry cherry",
        "d4": "durian",
        "d5": "apple apple apple",
    }
    index = InvertedIndex.build([doc(k, v) for k, v in texts.items()])
    judgments = Judgments({("q1", "d2"): 2, ("q1", "d4"): 1}, doc_ids=set(texts))
    query = doc("q1", "apple cherry", side="query")
    return index, judgments, query, texts


class TestPreselect:
    def test_n_larger_than_corpus_takes_all(self):
        index, judgments, query, texts = toy_index_and_judgments()
        cand = preselect(index, query, 100, judgments)
        assert sorted(cand.doc_ids()) == sorted(texts)

    def test_relevant_always_present_once(self):
        index, judgments, query, _ = toy_index_and_judgments()
        cand = preselect(index, query, 2, judgments)
        ids = cand.doc_ids()
        assert ids.count("d2") == 1 and ids.count("d4") == 1
        assert cand.preselected_count() == 2

    def test_membership_matches_brute_force_sort(self):
        index, judgments, query, texts = toy_index_and_judgments()
        cand = preselect(index, query, 2, judgments)
        relevant = {"d2", "d4"}
        scores = {d: tfidf_score(index, query.tokens, d) for d in texts}
        irrelevant_sorted = sorted((d for d in texts if d not in relevant),
                                   key=lambda d: (-scores[d], d))
        expected = set(irrelevant_sorted[:2]) | relevant
        assert set(cand.doc_ids()) == expected

    def test_provenance_flags(self):
        index, judgments, query, _ = toy_index_and_judgments()
        cand = preselect(index, query, 2, judgments)
        by_id = {e.doc_id: e.provenance for e in cand.entries}
        assert by_id["d2"] == INJECTED and by_id["d4"] == INJECTED
        assert sum(1 for p in by_id.values() if p == PRESELECTED) == 2

    def test_random_judgments_invariant(self):
        rng = random.Random(3)
        texts = {f"d{i}": " ".join(rng.choice("abcdefg") for _ in range(6)) for i in range(30)}
        index = InvertedIndex.build([doc(k, v) for k, v in texts.items()])
        for trial in range(20):
            grades = {("q", d): rng.choice([0, 0, 0, 1, 2]) for d in texts}
            judgments = Judgments(grades, doc_ids=set(texts))
            query = doc("q", "a b c", side="query")
            cand = preselect(index, query, 5, judgments)
            relevant = {d for (_, d), g in grades.items() if g >= 1}
            assert relevant <= set(cand.doc_ids())
            assert cand.preselected_count() == min(5, 30 - len(relevant))


class TestWeightedRerank:
    def _candidates(self):
        entries = [CandidateEntry("A", 2.0, PRESELECTED),
                   CandidateEntry("B", 1.0, PRESELECTED),
                   CandidateEntry("C", 0.0, INJECTED)]
        return CandidateSet("q1", entries)

    def test_lambda_zero_equals_model_ordering(self):
        cand = self._candidates()
        model = {"A": -0.8, "B": 0.5, "C": 0.9}
        got = [d for d, _ in weighted_rerank(cand, model, 0.0)]
        want = sorted(model, key=lambda d: (-model[d], d))
        assert got == want

    def test_lambda_one_equals_tfidf_ordering(self):
        cand = self._candidates()
        model = {"A": -0.8, "B": 0.5, "C": 0.9}
        got = [d for d, _ in weighted_rerank(cand, model, 1.0)]
        assert got == ["A", "B", "C"]

    def test_half_mix_hand_case(self):
        cand = self._candidates()
        model = {"A": -0.8, "B": 0.5, "C": 0.9}
        # normalized tfidf: A=1, B=0, C=-1
        # combined: A=0.1, B=0.25, C=-0.05
        result = weighted_rerank(cand, model, 0.5)
        assert [d for d, _ in result] == ["B", "A", "C"]
        by_id = dict(result)
        assert by_id["A"] == pytest.approx(0.1)
        assert by_id["B"] == pytest.approx(0.25)
        assert by_id["C"] == pytest.approx(-0.05)

    def test_missing_model_score_rejected(self):
        with pytest.raises(ValueError):
            weighted_rerank(self._candidates(), {"A": 0.1}, 0.5)

    def test_endpoint_orderings_exact_on_random_instances(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(2, 12))
            ids = [f"d{i}" for i in range(n)]
            tfidf = rng.choice([0.0, 0.5, 1.0, 2.0], size=n)
            entries = [CandidateEntry(d, float(t), PRESELECTED) for d, t in zip(ids, tfidf)]
            cand = CandidateSet("q", entries)
            model = {d: float(s) for d, s in zip(ids, rng.uniform(-1, 1, size=n))}
            model_order = sorted(ids, key=lambda d: (-model[d], d))
            tfidf_order = sorted(ids, key=lambda d: (-dict(zip(ids, tfidf))[d], d))
            assert [d for d, _ in weighted_rerank(cand, model, 0.0)] == model_order
            assert [d for d, _ in weighted_rerank(cand, model, 1.0)] == tfidf_order


class TestMinmax:
    def test_maps_to_unit_interval(self):
        out = minmax_to_unit([1.0, 3.0, 2.0])
        np.testing.assert_allclose(out, [-1.0, 1.0, 0.0])

    def test_constant_maps_to_zero(self):
        np.testing.assert_array_equal(minmax_to_unit([2.0, 2.0]), [0.0, 0.0])


class TestGridSearchLambda:
    def test_planted_tfidf_optimum(self):
        # tf-idf ranks the relevant doc first by a whisker (normalized 1.0
        # vs 0.95) while the model is strongly inverted; any mixture below
        # lambda = 1 leaves the confusor on top
        entries = [CandidateEntry("d1", 5.0, PRESELECTED),
                   CandidateEntry("d2", 4.9, PRESELECTED),
                   CandidateEntry("d3", 1.0, PRESELECTED)]
        cands = {"q1": CandidateSet("q1", entries)}
        model = {"q1": {"d1": -1.0, "d2": 1.0, "d3": -1.0}}
        judgments = Judgments({("q1", "d1"): 2})
        lam, sweep = grid_search_lambda(cands, model, judgments, step=0.05)
        assert lam == 1.0
        assert len(sweep) == 21
        by_w = dict(sweep)
        assert by_w[1.0] == pytest.approx(1.0)
        assert by_w[0.95] < 1.0

    def test_constant_model_ties_to_smallest_maximizer(self):
        entries = [CandidateEntry("d1", 5.0, PRESELECTED), CandidateEntry("d2", 1.0, PRESELECTED)]
        cands = {"q1": CandidateSet("q1", entries)}
        model = {"q1": {"d1": 0.3, "d2": 0.3}}
        judgments = Judgments({("q1", "d1"): 2})
        lam, sweep = grid_search_lambda(cands, model, judgments, step=0.05)
        # constant model scores: ties at lambda=0 break by doc id, which
        # already ranks d1 first; every lambda is a maximizer, returns 0
        assert lam == 0.0
        assert all(v == pytest.approx(1.0) for _, v in sweep)
