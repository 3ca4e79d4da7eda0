"""tf-idf retrieval over an inverted index, candidate pre-selection and
reranking strategies.

The tf-idf variant is raw term frequency times a smoothed log idf,
idf(t) = ln((N+1)/(df(t)+1) + 1), which stays positive and defined for
unseen terms.  Candidate sets are the top-n irrelevant documents by tf-idf
with all relevant documents injected.
"""

from __future__ import annotations

import json
import logging
import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .corpus import Document, Judgments
from .errors import DataError
from .evaluation import grid_search_mixture

log = logging.getLogger(__name__)

INDEX_FORMAT = "crossrank-index"
INDEX_VERSION = 1

PRESELECTED = "preselected"
INJECTED = "injected-relevant"


class InvertedIndex:
    """Postings term -> [(doc_id, tf)] sorted by doc id."""

    def __init__(self, postings, doc_lengths):
        self.postings: dict[str, list[tuple[str, int]]] = postings
        self.doc_lengths: dict[str, int] = doc_lengths
        self.doc_ids: list[str] = sorted(doc_lengths)

    @classmethod
    def build(cls, docs) -> "InvertedIndex":
        postings: dict[str, dict[str, int]] = {}
        doc_lengths: dict[str, int] = {}
        for doc in docs:
            if doc.id in doc_lengths:
                raise DataError(f"duplicate doc id {doc.id!r} while indexing")
            doc_lengths[doc.id] = len(doc.tokens)
            for tok in doc.tokens:
                postings.setdefault(tok, {}).setdefault(doc.id, 0)
                postings[tok][doc.id] += 1
        if not doc_lengths:
            raise DataError("cannot index an empty collection")
        sorted_postings = {
            term: sorted(freqs.items()) for term, freqs in postings.items()
        }
        return cls(sorted_postings, doc_lengths)

    @property
    def n_docs(self) -> int:
        return len(self.doc_lengths)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term: str, doc_id: str) -> int:
        plist = self.postings.get(term)
        if not plist:
            return 0
        pos = bisect_left(plist, (doc_id,))
        if pos < len(plist) and plist[pos][0] == doc_id:
            return plist[pos][1]
        return 0

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.doc_lengths

    def save(self, path) -> None:
        payload = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "doc_lengths": self.doc_lengths,
            "postings": {t: [[d, tf] for d, tf in plist] for t, plist in sorted(self.postings.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        with open(path, encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid index file: {exc}") from None
        if payload.get("format") != INDEX_FORMAT:
            raise DataError(f"{path}: not an index file")
        if payload.get("version") != INDEX_VERSION:
            raise DataError(f"{path}: unsupported index version {payload.get('version')}")
        postings = {t: [(d, int(tf)) for d, tf in plist] for t, plist in payload["postings"].items()}
        return cls(postings, {d: int(n) for d, n in payload["doc_lengths"].items()})


def idf(index: InvertedIndex, term: str) -> float:
    return math.log((index.n_docs + 1) / (index.df(term) + 1) + 1.0)


def tfidf_score(index: InvertedIndex, query_tokens, doc_id: str) -> float:
    """Sum over distinct query terms of tf(t, doc) * idf(t)."""
    if doc_id not in index:
        raise ValueError(f"document {doc_id!r} not in index")
    score = 0.0
    for term in sorted(set(query_tokens)):
        tf = index.tf(term, doc_id)
        if tf:
            score += tf * idf(index, term)
    return score


def score_all(index: InvertedIndex, query_tokens) -> dict[str, float]:
    """Term-at-a-time tf-idf scores for every matching document.

    Documents matching no query term are omitted (their score is 0).
    """
    scores: dict[str, float] = {}
    for term in sorted(set(query_tokens)):
        plist = index.postings.get(term)
        if not plist:
            continue
        w = idf(index, term)
        for doc_id, tf in plist:
            scores[doc_id] = scores.get(doc_id, 0.0) + tf * w
    return scores


@dataclass(frozen=True)
class CandidateEntry:
    doc_id: str
    tfidf: float
    provenance: str  # PRESELECTED or INJECTED


@dataclass
class CandidateSet:
    """Per-query candidate pool: top-n irrelevant by tf-idf + all relevant."""

    query_id: str
    entries: list[CandidateEntry]

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def tfidf_map(self) -> dict[str, float]:
        return {e.doc_id: e.tfidf for e in self.entries}

    def preselected_count(self) -> int:
        return sum(1 for e in self.entries if e.provenance == PRESELECTED)


def preselect(index: InvertedIndex, query: Document, n: int, judgments: Judgments) -> CandidateSet:
    """Select the n highest-tf-idf irrelevant documents, then inject every
    grade >= 1 document (each document appears once)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = score_all(index, query.tokens)
    relevant = {d for d, _ in judgments.positives(query.id)}
    for did in sorted(relevant):
        if did not in index:
            raise DataError(f"relevant document {did!r} for query {query.id!r} not in index")
    irrelevant = [d for d in index.doc_ids if d not in relevant]
    if len(irrelevant) < n:
        log.warning("query %s: only %d irrelevant documents available (requested %d)",
                    query.id, len(irrelevant), n)
    irrelevant.sort(key=lambda d: (-scores.get(d, 0.0), d))
    entries = [CandidateEntry(d, scores.get(d, 0.0), PRESELECTED) for d in irrelevant[:n]]
    entries += [
        CandidateEntry(d, scores.get(d, 0.0), INJECTED) for d in sorted(relevant)
    ]
    entries.sort(key=lambda e: (-e.tfidf, e.doc_id))
    return CandidateSet(query.id, entries)


def minmax_to_unit(values) -> np.ndarray:
    """Min-max normalize into [-1, 1]; constant inputs map to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return 2.0 * (values - lo) / (hi - lo) - 1.0


def weighted_rerank(candidates: CandidateSet, model_scores, lam: float) -> list[tuple[str, float]]:
    """Order candidates by lam * minmax(tfidf) + (1 - lam) * model score.

    tf-idf scores are min-max normalized into [-1, 1] per query to match the
    model score range.  Ties break by ascending doc id.  lam=0 reproduces the
    model-only ordering, lam=1 the tf-idf ordering.
    """
    if not 0 <= lam <= 1:
        raise ValueError("lam must be in [0, 1]")
    ids = candidates.doc_ids()
    missing = [d for d in ids if d not in model_scores]
    if missing:
        raise ValueError(f"missing model scores for {missing[:3]}...")
    norm = minmax_to_unit([e.tfidf for e in candidates.entries])
    combined = {
        d: lam * norm[i] + (1.0 - lam) * model_scores[d] for i, d in enumerate(ids)
    }
    return sorted(combined.items(), key=lambda kv: (-kv[1], kv[0]))


def grid_search_lambda(dev_candidates, model_scores, judgments: Judgments, step: float = 0.05, gain: str = "exp"):
    """Grid search the tf-idf weight on dev candidate sets.

    ``dev_candidates`` maps query_id -> CandidateSet, ``model_scores`` maps
    query_id -> {doc_id: score}.  Returns (lambda_star, sweep); ties go to
    the smaller lambda.
    """
    primary = {}
    secondary = {}
    for qid, cand in dev_candidates.items():
        ids = cand.doc_ids()
        norm = minmax_to_unit([e.tfidf for e in cand.entries])
        primary[qid] = {d: float(norm[i]) for i, d in enumerate(ids)}
        secondary[qid] = {d: float(model_scores[qid][d]) for d in ids}
    return grid_search_mixture(primary, secondary, judgments, step=step, gain=gain)
