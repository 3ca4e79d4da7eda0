"""Category-graph node embeddings via random walks.

Walk generation is uniform over neighbors (edges are unweighted and treated
as undirected) and the walk corpus is fed to the skip-gram trainer.  Every
walk draws from its own seeded generator, so the walk multiset is identical
under a fixed seed regardless of generation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary, load_edge_list
from .skipgram import EmbeddingMatrix, SgnsConfig, train_sgns

DEFAULT_CATEGORY_DIM = 30


class CategoryGraph:
    """Undirected graph over label strings, indexed lexicographically."""

    def __init__(self, nodes: Vocabulary, adjacency: list[np.ndarray]):
        if len(adjacency) != len(nodes):
            raise ValueError("adjacency must have one entry per node")
        self.nodes = nodes
        self.adjacency = adjacency

    @classmethod
    def from_edges(cls, edges, extra_nodes=()) -> "CategoryGraph":
        """Build from (label_a, label_b) pairs; isolated nodes may be added
        through ``extra_nodes``."""
        labels = set(extra_nodes)
        for a, b in edges:
            labels.add(a)
            labels.add(b)
        if not labels:
            raise ValueError("graph has no nodes")
        nodes = Vocabulary.from_tokens(sorted(labels))
        neighbor_sets: list[set[int]] = [set() for _ in range(len(nodes))]
        for a, b in edges:
            ia, ib = nodes.index_of(a), nodes.index_of(b)
            neighbor_sets[ia].add(ib)
            neighbor_sets[ib].add(ia)
        adjacency = [np.array(sorted(s), dtype=np.int64) for s in neighbor_sets]
        return cls(nodes, adjacency)

    @classmethod
    def from_file(cls, path, extra_nodes=()) -> "CategoryGraph":
        return cls.from_edges(load_edge_list(path), extra_nodes=extra_nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def neighbors(self, node: int) -> np.ndarray:
        return self.adjacency[node]

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])


@dataclass
class WalkConfig:
    walk_length: int = 40   # steps taken after the start node
    walks_per_node: int = 1
    seed: int = 1

    def __post_init__(self):
        if self.walk_length < 1:
            raise ValueError("walk_length must be >= 1")
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be >= 1")


def random_walks(graph: CategoryGraph, cfg: WalkConfig) -> list[np.ndarray]:
    """Uniform random walks, ``walks_per_node`` starting at every node.

    Each step moves to a uniformly random neighbor; a walk that reaches a
    node without neighbors stops early, so an isolated start node yields a
    length-1 walk.
    """
    walks = []
    for pass_idx in range(cfg.walks_per_node):
        for start in range(len(graph)):
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, pass_idx, start)))
            walk = [start]
            current = start
            for _ in range(cfg.walk_length):
                nbrs = graph.adjacency[current]
                if len(nbrs) == 0:
                    break
                current = int(nbrs[rng.integers(len(nbrs))])
                walk.append(current)
            walks.append(np.array(walk, dtype=np.int64))
    return walks


def train_category_embeddings(
    graph: CategoryGraph,
    walk_cfg: WalkConfig | None = None,
    sgns_cfg: SgnsConfig | None = None,
) -> EmbeddingMatrix:
    """Random walks + skip-gram: one embedding per graph node.

    Nodes that never occur as a walk center (isolated nodes) retain their
    random initialization.  Frequency subsampling is disabled by default:
    walk corpora are small and near-uniform, so thinning them only loses
    signal.
    """
    walk_cfg = walk_cfg or WalkConfig()
    if sgns_cfg is None:
        sgns_cfg = SgnsConfig(dim=DEFAULT_CATEGORY_DIM, subsample_threshold=0.0)
    walks = random_walks(graph, walk_cfg)
    return train_sgns(walks, graph.nodes, sgns_cfg)
