"""Planted-signal synthetic corpora.

Generates a self-contained retrieval task where relevance is driven by two
controllable signals: token overlap with the query (text signal) and shared
category-cluster membership (meta signal).  Every experiment in the test
suite and the demo scripts runs on corpora from this generator, so no
external data is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import Document, DocumentCollection, Judgments

SIGNAL_MODES = ("mixture", "both")


@dataclass
class SynthConfig:
    n_queries: int = 300
    n_targets: int = 3000
    n_topics: int = 20
    topic_tokens: int = 10           # signature tokens per topic
    background_tokens: int = 400
    n_clusters: int = 10
    cats_per_cluster: int = 12
    intra_cluster_edge_prob: float = 0.3
    query_length: int = 10
    query_signal_tokens: int = 6
    query_labels: int = 3
    doc_length: int = 16
    rel2_per_query: int = 2
    rel1_per_query: int = 2
    shared_tokens_rel2: int = 6      # tokens copied from the query, grade 2
    shared_tokens_rel1: int = 3      # ... grade 1
    labels_per_doc: int = 3
    signal_mode: str = "mixture"     # mixture: text OR cat per relevant doc; both: text AND cat
    text_signal_rate: float = 0.7    # P(text signal) in mixture mode
    irrelevant_topic_tokens: int = 4
    train_fraction: float = 0.6
    dev_fraction: float = 0.2
    seed: int = 7

    def __post_init__(self):
        if self.signal_mode not in SIGNAL_MODES:
            raise ValueError(f"signal_mode must be one of {SIGNAL_MODES}")
        if not 0 <= self.text_signal_rate <= 1:
            raise ValueError("text_signal_rate must be in [0, 1]")
        rel_docs = self.n_queries * (self.rel2_per_query + self.rel1_per_query)
        if rel_docs > self.n_targets:
            raise ValueError(f"{rel_docs} relevant docs exceed n_targets={self.n_targets}")
        if self.query_signal_tokens > self.topic_tokens:
            raise ValueError("query_signal_tokens cannot exceed topic_tokens")
        if self.query_labels > self.cats_per_cluster or self.labels_per_doc > self.cats_per_cluster:
            raise ValueError("labels per item cannot exceed cats_per_cluster")
        if not 0 < self.train_fraction + self.dev_fraction < 1:
            raise ValueError("train and dev fractions must leave room for a test split")


@dataclass
class SynthData:
    collection: DocumentCollection
    judgments: Judgments
    edges: list[tuple[str, str]]
    splits: dict[str, list[str]] = field(default_factory=dict)


def _topic_vocab(cfg: SynthConfig) -> list[list[str]]:
    return [
        [f"t{topic:02d}w{j:02d}" for j in range(cfg.topic_tokens)]
        for topic in range(cfg.n_topics)
    ]


def _cluster_labels(cfg: SynthConfig) -> list[list[str]]:
    return [
        [f"c{cluster:02d}x{j:02d}" for j in range(cfg.cats_per_cluster)]
        for cluster in range(cfg.n_clusters)
    ]


def _category_edges(cfg: SynthConfig, clusters, rng) -> list[tuple[str, str]]:
    """Dense random edges inside each cluster (plus a spanning cycle so no
    category is isolated); clusters stay disconnected from each other."""
    edges = []
    for labels in clusters:
        n = len(labels)
        for i in range(n):
            edges.append((labels[i], labels[(i + 1) % n]))
        for i in range(n):
            for j in range(i + 2, n):
                if (i, j) == (0, n - 1):
                    continue  # already on the cycle
                if rng.random() < cfg.intra_cluster_edge_prob:
                    edges.append((labels[i], labels[j]))
    return edges


def generate(cfg: SynthConfig) -> SynthData:
    """Build the corpus, judgments, category graph and query splits."""
    rng = np.random.default_rng(cfg.seed)
    topics = _topic_vocab(cfg)
    clusters = _cluster_labels(cfg)
    background = [f"bg{j:03d}" for j in range(cfg.background_tokens)]
    edges = _category_edges(cfg, clusters, rng)

    def pick(pool, k, replace=False):
        k = min(k, len(pool)) if not replace else k
        return [pool[i] for i in rng.choice(len(pool), size=k, replace=replace)]

    def background_fill(k):
        return pick(background, k, replace=True)

    collection = DocumentCollection()
    grades: dict[tuple[str, str], int] = {}
    doc_counter = 0

    def next_doc_id() -> str:
        nonlocal doc_counter
        did = f"d{doc_counter:05d}"
        doc_counter += 1
        return did

    def make_doc(did, tokens, labels):
        collection.add(Document(id=did, side="target", tokens=tuple(tokens),
                                meta_labels=frozenset(labels)))

    query_meta = {}
    for qi in range(cfg.n_queries):
        qid = f"q{qi:04d}"
        topic = int(rng.integers(cfg.n_topics))
        cluster = int(rng.integers(cfg.n_clusters))
        signal = pick(topics[topic], cfg.query_signal_tokens)
        tokens = signal + background_fill(cfg.query_length - len(signal))
        rng.shuffle(tokens)
        labels = pick(clusters[cluster], cfg.query_labels)
        collection.add(Document(id=qid, side="query", tokens=tuple(tokens),
                                meta_labels=frozenset(labels)))
        query_meta[qid] = (topic, cluster, signal)

    def irrelevant_text():
        topic = int(rng.integers(cfg.n_topics))
        tokens = pick(topics[topic], cfg.irrelevant_topic_tokens)
        tokens += background_fill(cfg.doc_length - len(tokens))
        rng.shuffle(tokens)
        return tokens

    def random_cluster_labels(k):
        cluster = int(rng.integers(cfg.n_clusters))
        return pick(clusters[cluster], k)

    for qid in sorted(query_meta):
        topic, cluster, signal = query_meta[qid]
        for grade, count, shared in (
            (2, cfg.rel2_per_query, cfg.shared_tokens_rel2),
            (1, cfg.rel1_per_query, cfg.shared_tokens_rel1),
        ):
            for _ in range(count):
                if cfg.signal_mode == "both":
                    with_text = with_cat = True
                else:
                    with_text = rng.random() < cfg.text_signal_rate
                    with_cat = not with_text
                if with_text:
                    tokens = pick(signal, shared)
                    tokens += background_fill(cfg.doc_length - len(tokens))
                    rng.shuffle(tokens)
                else:
                    tokens = irrelevant_text()
                if with_cat:
                    if grade == 2:
                        labels = pick(clusters[cluster], cfg.labels_per_doc)
                    else:
                        labels = pick(clusters[cluster], max(1, cfg.labels_per_doc - 1))
                        labels += random_cluster_labels(cfg.labels_per_doc - len(labels))
                else:
                    labels = random_cluster_labels(cfg.labels_per_doc)
                did = next_doc_id()
                make_doc(did, tokens, labels)
                grades[(qid, did)] = grade

    while doc_counter < cfg.n_targets:
        make_doc(next_doc_id(), irrelevant_text(), random_cluster_labels(cfg.labels_per_doc))

    judgments = Judgments(grades, doc_ids=collection.targets.keys())

    qids = sorted(query_meta)
    order = rng.permutation(len(qids))
    n_train = round(cfg.train_fraction * len(qids))
    n_dev = round(cfg.dev_fraction * len(qids))
    shuffled = [qids[i] for i in order]
    splits = {
        "train": sorted(shuffled[:n_train]),
        "dev": sorted(shuffled[n_train:n_train + n_dev]),
        "test": sorted(shuffled[n_train + n_dev:]),
    }
    return SynthData(collection, judgments, edges, splits)


def save_edge_list(edges, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in edges:
            fh.write(f"{a} {b}\n")


def save_splits(splits, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(splits, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_splits(path) -> dict[str, list[str]]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
