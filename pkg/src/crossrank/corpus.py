"""Data model and file I/O for retrieval corpora.

Covers tokenization, vocabularies, graded relevance judgments, training-pair
sampling and category-overlap analysis.  All structures are immutable after
construction and safe for concurrent reads.
"""

from __future__ import annotations

import json
import logging
import math
import random
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

SIDES = ("query", "target")

# Han, Hiragana and Katakana ranges.  Text in these scripts carries no
# whitespace, so each codepoint becomes its own token.
_CJK_RANGES = (
    (0x3040, 0x309F),    # hiragana
    (0x30A0, 0x30FF),    # katakana
    (0x31F0, 0x31FF),    # katakana phonetic extensions
    (0x3400, 0x4DBF),    # CJK extension A
    (0x4E00, 0x9FFF),    # CJK unified ideographs
    (0xF900, 0xFAFF),    # CJK compatibility ideographs
    (0xFF66, 0xFF9D),    # halfwidth katakana
    (0x20000, 0x2A6DF),  # CJK extension B
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation/symbols, split on whitespace.

    Characters in Unicode categories P* and S* are deleted (not replaced by
    a space), so "A--B" becomes the single token "ab".  Han/kana codepoints
    are segmented one token per codepoint.
    """
    pieces = []
    for ch in text:
        if unicodedata.category(ch)[0] in ("P", "S"):
            continue
        if _is_cjk(ch):
            pieces.append(" ")
            pieces.append(ch)
            pieces.append(" ")
        else:
            pieces.append(ch)
    return "".join(pieces).lower().split()


@dataclass(frozen=True)
class Document:
    """A query or target document: tokens plus a set of meta labels."""

    id: str
    side: str
    tokens: tuple[str, ...]
    meta_labels: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be nonempty")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {self.side!r}")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "meta_labels", frozenset(self.meta_labels))
        if not self.tokens and not self.meta_labels:
            raise ValueError(f"document {self.id!r} has neither tokens nor meta labels")

    def sorted_labels(self) -> list[str]:
        return sorted(self.meta_labels)


class DocumentCollection:
    """Documents keyed by id, one namespace per side."""

    def __init__(self, documents=()):
        self.queries: dict[str, Document] = {}
        self.targets: dict[str, Document] = {}
        for doc in documents:
            self.add(doc)

    def add(self, doc: Document) -> None:
        table = self.queries if doc.side == "query" else self.targets
        if doc.id in table:
            raise DataError(f"duplicate {doc.side} id {doc.id!r}")
        table[doc.id] = doc

    def side(self, side: str) -> dict[str, Document]:
        if side not in SIDES:
            raise ValueError(f"unknown side {side!r}")
        return self.queries if side == "query" else self.targets

    def __len__(self) -> int:
        return len(self.queries) + len(self.targets)

    def __iter__(self):
        yield from self.queries.values()
        yield from self.targets.values()


def load_corpus(path) -> DocumentCollection:
    """Read a JSON-lines corpus file (fields: id, side, text, meta)."""
    collection = DocumentCollection()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON record: {exc}") from None
            try:
                doc = Document(
                    id=str(rec["id"]),
                    side=str(rec["side"]),
                    tokens=tuple(tokenize(rec.get("text", ""))),
                    meta_labels=frozenset(str(m) for m in rec.get("meta", [])),
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            collection.add(doc)
    return collection


def save_corpus(collection: DocumentCollection, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in collection:
            rec = {
                "id": doc.id,
                "side": doc.side,
                "text": " ".join(doc.tokens),
                "meta": sorted(doc.meta_labels),
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


VALID_GRADES = (0, 1, 2, 3)


class Judgments:
    """Graded relevance judgments; unlisted (query, doc) pairs have grade 0.

    ``doc_ids`` is the candidate universe used to resolve implicit zeros.  It
    defaults to the documents mentioned in the grade map but is normally set
    to the full target collection.
    """

    def __init__(self, grades: dict[tuple[str, str], int], doc_ids=None):
        for (qid, did), grade in grades.items():
            if grade not in VALID_GRADES:
                raise ValueError(f"grade for ({qid}, {did}) must be in {VALID_GRADES}, got {grade}")
        self.grades = dict(grades)
        if doc_ids is None:
            doc_ids = {did for (_, did) in grades}
        self.doc_ids = frozenset(doc_ids)
        self._by_query: dict[str, dict[str, int]] = {}
        for (qid, did), grade in grades.items():
            self._by_query.setdefault(qid, {})[did] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.grades.get((query_id, doc_id), 0)

    def query_ids(self) -> list[str]:
        return sorted(self._by_query)

    def graded(self, query_id: str) -> dict[str, int]:
        """Explicitly judged documents for one query."""
        return dict(self._by_query.get(query_id, {}))

    def positives(self, query_id: str) -> list[tuple[str, int]]:
        """(doc_id, grade) with grade >= 1, sorted by doc id."""
        table = self._by_query.get(query_id, {})
        return sorted((d, g) for d, g in table.items() if g >= 1)

    def zero_pool(self, query_id: str) -> list[str]:
        """Sorted doc ids with grade 0 for this query (explicit or implicit)."""
        table = self._by_query.get(query_id, {})
        return sorted(d for d in self.doc_ids if table.get(d, 0) == 0)

    def validate_against(self, collection: DocumentCollection) -> None:
        for qid, did in self.grades:
            if qid not in collection.queries:
                raise DataError(f"judged query {qid!r} not in collection")
            if did not in collection.targets:
                raise DataError(f"judged document {did!r} not in collection")


def load_qrels(path, doc_ids=None) -> Judgments:
    """Read qrels: either `qid docid grade` or TREC `qid iter docid grade`."""
    grades = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) == 3:
                qid, did, raw = fields
            elif len(fields) == 4:
                qid, _, did, raw = fields
            else:
                raise DataError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(fields)}")
            try:
                grade = int(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: grade {raw!r} is not an integer") from None
            if grade not in VALID_GRADES:
                raise DataError(f"{path}:{lineno}: grade {grade} outside {VALID_GRADES}")
            grades[(qid, did)] = grade
    return Judgments(grades, doc_ids=doc_ids)


def save_qrels(judgments: Judgments, path) -> None:
    """Write qrels in the 4-column TREC layout."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid, did in sorted(judgments.grades):
            fh.write(f"{qid} 0 {did} {judgments.grades[(qid, did)]}\n")


class Vocabulary:
    """Bijective token <-> contiguous index mapping with counts."""

    def __init__(self, tokens: list[str], counts: list[int]):
        if len(tokens) != len(counts):
            raise ValueError("tokens and counts must align")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.tokens = list(tokens)
        self.counts = list(counts)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def from_counts(cls, counts, min_count: int = 1) -> "Vocabulary":
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        kept = [(tok, c) for tok, c in counts.items() if c >= min_count]
        if not kept:
            raise ValueError("vocabulary is empty after applying min_count")
        kept.sort(key=lambda item: (-item[1], item[0]))
        return cls([t for t, _ in kept], [c for _, c in kept])

    @classmethod
    def from_tokens(cls, tokens) -> "Vocabulary":
        """Order-preserving vocabulary (e.g. from an embedding file)."""
        toks = list(tokens)
        return cls(toks, [1] * len(toks))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def index_of(self, token: str) -> int:
        return self.index[token]

    def encode(self, tokens) -> list[int]:
        """Map tokens to indices, dropping out-of-vocabulary tokens."""
        return [self.index[t] for t in tokens if t in self.index]


def build_vocab(docs, min_count: int = 2) -> Vocabulary:
    """Count tokens over documents; keep tokens with count >= min_count.

    Index order is descending count with lexicographic tie-break.
    """
    counts: dict[str, int] = {}
    for doc in docs:
        for tok in doc.tokens:
            counts[tok] = counts.get(tok, 0) + 1
    return Vocabulary.from_counts(counts, min_count=min_count)


@dataclass(frozen=True)
class TrainingPair:
    query_id: str
    pos_id: str
    neg_id: str
    pos_grade: int
    neg_grade: int

    def __post_init__(self):
        if self.pos_grade <= self.neg_grade:
            raise ValueError(
                f"pair ({self.query_id}, {self.pos_id}, {self.neg_id}): "
                f"pos_grade {self.pos_grade} must exceed neg_grade {self.neg_grade}"
            )
        if self.pos_id == self.neg_id:
            raise ValueError(f"pair for query {self.query_id}: pos and neg ids are equal")


def build_training_pairs(
    judgments: Judgments,
    negatives_per_positive: int = 4,
    include_graded_pairs: bool = True,
    graded_pair_sample: float = 0.5,
    seed: int = 0,
) -> tuple[list[TrainingPair], int]:
    """Sample pairwise training data over graded judgments.

    Every grade >= 1 document is paired with ``negatives_per_positive``
    distinct grade-0 documents (sampled without replacement).  When
    ``include_graded_pairs`` is set, a ``graded_pair_sample`` fraction of all
    higher-vs-lower graded pairs per query is added.  Queries without any
    grade-0 candidate are skipped; the number of skipped queries is returned
    alongside the pairs.
    """
    if negatives_per_positive < 1:
        raise ValueError("negatives_per_positive must be >= 1")
    if not 0 < graded_pair_sample <= 1:
        raise ValueError("graded_pair_sample must be in (0, 1]")
    rng = random.Random(seed)
    pairs: list[TrainingPair] = []
    skipped = 0
    for qid in judgments.query_ids():
        positives = judgments.positives(qid)
        if not positives:
            continue
        pool = judgments.zero_pool(qid)
        if not pool:
            skipped += 1
            continue
        k = min(negatives_per_positive, len(pool))
        if k < negatives_per_positive:
            log.warning("query %s: only %d grade-0 candidates (requested %d)", qid, k, negatives_per_positive)
        for did, grade in positives:
            for neg in rng.sample(pool, k):
                pairs.append(TrainingPair(qid, did, neg, grade, 0))
        if include_graded_pairs:
            combos = [
                (hi, hg, lo, lg)
                for hi, hg in positives
                for lo, lg in positives
                if hg > lg
            ]
            if combos:
                n_take = math.ceil(graded_pair_sample * len(combos))
                for hi, hg, lo, lg in rng.sample(combos, n_take):
                    pairs.append(TrainingPair(qid, hi, lo, hg, lg))
    return pairs, skipped


def sample_candidates(judgments: Judgments, query_id: str, n_irrelevant: int,
                      rng: np.random.Generator) -> list[str]:
    """Candidate list for evaluation: all relevant docs plus a sampled set of
    grade-0 docs, sorted by id."""
    relevant = [d for d, _ in judgments.positives(query_id)]
    pool = judgments.zero_pool(query_id)
    k = min(n_irrelevant, len(pool))
    sampled = list(rng.choice(pool, size=k, replace=False)) if k else []
    return sorted(relevant + [str(d) for d in sampled])


class TranslationMap:
    """Maps source-side meta labels to sets of target-side labels.

    Labels without an explicit entry map to themselves, so identically coded
    label spaces (e.g. patent classes) need no map file.
    """

    def __init__(self, mapping=None):
        self.mapping: dict[str, frozenset[str]] = {}
        for src, targets in (mapping or {}).items():
            targets = frozenset(targets)
            if not targets:
                raise ValueError(f"translation for {src!r} must be a nonempty set")
            self.mapping[src] = targets

    @classmethod
    def identity(cls) -> "TranslationMap":
        return cls()

    def translate_label(self, label: str) -> frozenset[str]:
        return self.mapping.get(label, frozenset((label,)))

    def translate(self, labels) -> set[str]:
        out: set[str] = set()
        for label in labels:
            out |= self.translate_label(label)
        return out


def load_translation_map(path) -> TranslationMap:
    """Read `source_label target_label` lines; repeated sources accumulate."""
    mapping: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(fields)}")
            mapping.setdefault(fields[0], set()).add(fields[1])
    return TranslationMap(mapping)


def load_edge_list(path) -> list[tuple[str, str]]:
    """Read a `label_a label_b` edge-list file."""
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(fields)}")
            edges.append((fields[0], fields[1]))
    return edges


def _overlap_counts(query: Document, doc: Document, tmap: TranslationMap) -> tuple[int, int]:
    if not doc.meta_labels:
        raise ValueError(f"document {doc.id!r} has no meta labels; overlap is undefined")
    translated = tmap.translate(query.meta_labels)
    return len(translated & doc.meta_labels), len(doc.meta_labels)


def category_overlap(query: Document, doc: Document, tmap: TranslationMap) -> float:
    """Fraction of the document's labels shared with the translated query labels."""
    inter, total = _overlap_counts(query, doc, tmap)
    return inter / total


def overlap_histogram(pairs, tmap: TranslationMap) -> np.ndarray:
    """11-bucket percentage histogram of category overlap.

    Bucket 0 holds exact-zero overlaps; buckets 1..10 hold (0,10%], (10,20%],
    ..., (90,100%].  Only pairs with grade >= 1 are counted.  Percentages sum
    to 100 for nonempty input; empty input yields an all-zero histogram.
    """
    buckets = np.zeros(11, dtype=np.float64)
    n = 0
    for query, doc, grade in pairs:
        if grade < 1:
            continue
        inter, total = _overlap_counts(query, doc, tmap)
        idx = 0 if inter == 0 else (10 * inter + total - 1) // total
        buckets[idx] += 1
        n += 1
    if n:
        buckets *= 100.0 / n
    return buckets
