"""Skip-gram with negative sampling, trained by plain SGD.

The trainer is shared between word pretraining and graph-walk node
embeddings.  It is single-threaded and fully deterministic under a fixed
seed: the published (input) vectors come out bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .errors import DataError

LR_FLOOR_FACTOR = 1e-4  # final lr = initial_lr * LR_FLOOR_FACTOR
NOISE_POWER = 0.75


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(x):
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


@dataclass
class SgnsConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    subsample_threshold: float = 1e-3
    max_norm: float = 100.0
    seed: int = 1

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be > 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be > 0")
        if self.max_norm <= 0:
            raise ValueError("max_norm must be > 0")


class EmbeddingMatrix:
    """Vocabulary-indexed dense vectors.

    ``input_vectors`` are the published embeddings; ``output_vectors`` exist
    only on freshly trained matrices.
    """

    def __init__(self, vocab: Vocabulary, input_vectors: np.ndarray, output_vectors=None):
        input_vectors = np.asarray(input_vectors, dtype=np.float64)
        if input_vectors.ndim != 2 or input_vectors.shape[0] != len(vocab):
            raise ValueError("input_vectors must be a (|vocab|, dim) matrix")
        if input_vectors.shape[1] < 1:
            raise ValueError("dim must be > 0")
        if not np.isfinite(input_vectors).all():
            raise ValueError("embedding vectors must be finite")
        if output_vectors is not None:
            output_vectors = np.asarray(output_vectors, dtype=np.float64)
            if output_vectors.shape != input_vectors.shape:
                raise ValueError("output_vectors must match input_vectors shape")
            if not np.isfinite(output_vectors).all():
                raise ValueError("embedding vectors must be finite")
        self.vocab = vocab
        self.input_vectors = input_vectors
        self.output_vectors = output_vectors

    @property
    def dim(self) -> int:
        return self.input_vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def vector(self, token: str) -> np.ndarray:
        return self.input_vectors[self.vocab.index_of(token)]

    def lookup(self, tokens) -> np.ndarray:
        """Stack vectors for in-vocabulary tokens; OOV tokens are dropped."""
        idx = self.vocab.encode(tokens)
        if not idx:
            return np.zeros((0, self.dim))
        return self.input_vectors[np.asarray(idx, dtype=np.intp)]


def unigram_noise_weights(counts: np.ndarray, power: float = NOISE_POWER) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("counts must be nonnegative")
    return counts ** power


class NoiseSampler:
    """Draws token indices proportional to count^0.75."""

    def __init__(self, counts: np.ndarray, power: float = NOISE_POWER):
        weights = unigram_noise_weights(counts, power)
        total = weights.sum()
        if total <= 0:
            raise ValueError("noise distribution needs at least one positive count")
        self.probabilities = weights / total
        self._cdf = np.cumsum(self.probabilities)
        self._cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.searchsorted(self._cdf, rng.random(size), side="right")


def sgns_pair_loss(center_vec, context_vec, negative_vecs):
    """Loss and exact gradients for one positive pair plus its noise samples.

    Returns (loss, d_center, d_context, d_negatives) for
    loss = -log sigma(u_ctx . v) - sum_n log sigma(-u_n . v), the quantity the
    trainer descends per pair.
    """
    v = np.asarray(center_vec, dtype=np.float64)
    u = np.asarray(context_vec, dtype=np.float64)
    negs = np.asarray(negative_vecs, dtype=np.float64)
    s_pos = float(u @ v)
    s_negs = negs @ v
    loss = -float(log_sigmoid(s_pos)) - float(log_sigmoid(-s_negs).sum())
    g_pos = sigmoid(s_pos) - 1.0          # d loss / d s_pos
    g_negs = sigmoid(s_negs)              # d loss / d s_neg
    d_center = g_pos * u + g_negs @ negs
    d_context = g_pos * v
    d_negatives = g_negs[:, None] * v[None, :]
    return loss, d_center, d_context, d_negatives


def _keep_probabilities(counts: np.ndarray, threshold: float) -> np.ndarray:
    """word2vec-style frequency subsampling: keep probability per token."""
    keep = np.ones_like(counts, dtype=np.float64)
    if threshold <= 0:
        return keep
    total = counts.sum()
    if total == 0:
        return keep
    freq = counts / total
    nz = freq > 0
    ratio = threshold / freq[nz]
    keep[nz] = np.minimum(1.0, np.sqrt(ratio) + ratio)
    return keep


def _pair_count(length: int, window: int) -> int:
    i = np.arange(length)
    spans = np.minimum(length, i + window + 1) - np.maximum(0, i - window) - 1
    return int(spans.sum())


def train_sgns(sequences, vocab: Vocabulary, cfg: SgnsConfig) -> EmbeddingMatrix:
    """Train skip-gram with negative sampling over index sequences.

    For every in-window (center, context) pair the trainer applies one
    positive update and ``cfg.negatives`` negative updates drawn from the
    unigram^0.75 noise distribution.  The learning rate decays linearly from
    ``initial_lr`` to ``initial_lr * 1e-4`` over the total pair count.
    """
    vocab_size = len(vocab)
    if vocab_size < cfg.negatives + 1:
        raise ValueError(
            f"vocabulary size {vocab_size} too small for {cfg.negatives} negatives"
        )
    seqs = [np.asarray(s, dtype=np.int64) for s in sequences]
    for s in seqs:
        if s.size and (s.min() < 0 or s.max() >= vocab_size):
            raise ValueError("sequence index outside vocabulary")
    if not any(len(s) >= 2 for s in seqs):
        raise ValueError("need at least one sequence of length >= 2")

    counts = np.zeros(vocab_size, dtype=np.int64)
    for s in seqs:
        counts += np.bincount(s, minlength=vocab_size)

    init_ss, sub_ss, neg_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_init = np.random.default_rng(init_ss)
    w_in = (rng_init.random((vocab_size, cfg.dim)) - 0.5) / cfg.dim
    w_out = np.zeros((vocab_size, cfg.dim))

    # materialize the (possibly subsampled) token stream for every epoch up
    # front so the total pair count, and with it the lr schedule, is exact
    keep = _keep_probabilities(counts, cfg.subsample_threshold)
    rng_sub = np.random.default_rng(sub_ss)
    epochs: list[list[np.ndarray]] = []
    total_pairs = 0
    for _ in range(cfg.epochs):
        stream = []
        for s in seqs:
            if len(s) < 2:
                continue
            if cfg.subsample_threshold > 0:
                s = s[rng_sub.random(len(s)) < keep[s]]
            if len(s) < 2:
                continue
            stream.append(s)
            total_pairs += _pair_count(len(s), cfg.window)
        epochs.append(stream)
    if total_pairs == 0:
        raise ValueError("no training pairs left after subsampling")

    sampler = NoiseSampler(counts)
    rng_neg = np.random.default_rng(neg_ss)
    lr0 = cfg.initial_lr
    lr_slope = (lr0 * LR_FLOOR_FACTOR - lr0) / max(total_pairs - 1, 1)
    n_neg = cfg.negatives
    t = 0
    for stream in epochs:
        for s in stream:
            length = len(s)
            for i in range(length):
                lo = 0 if i < cfg.window else i - cfg.window
                hi = min(length, i + cfg.window + 1)
                n_ctx = hi - lo - 1
                if n_ctx == 0:
                    continue
                ctx = np.concatenate([s[lo:i], s[i + 1:hi]])
                negatives = sampler.sample(rng_neg, n_ctx * n_neg)
                rows = np.concatenate([ctx, negatives])
                # pair index of every row, for the per-pair lr schedule
                pair_of_row = np.concatenate([np.arange(n_ctx), np.repeat(np.arange(n_ctx), n_neg)])
                lr = lr0 + lr_slope * (t + pair_of_row)
                labels = np.zeros(rows.shape[0])
                labels[:n_ctx] = 1.0
                center = s[i]
                v = w_in[center]
                m = w_out[rows]
                g = (labels - sigmoid(m @ v)) * lr
                dv = g @ m
                np.add.at(w_out, rows, g[:, None] * v[None, :])
                w_in[center] = v + dv
                t += n_ctx

    for w in (w_in, w_out):
        norms = np.linalg.norm(w, axis=1)
        over = norms > cfg.max_norm
        if over.any():
            w[over] *= (cfg.max_norm / norms[over])[:, None]
    if not (np.isfinite(w_in).all() and np.isfinite(w_out).all()):
        raise ValueError("training diverged: non-finite embedding values")
    return EmbeddingMatrix(vocab, w_in, w_out)


def save_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Write the classic text interchange format: `count dim` header, then
    one `token v1 ... v_dim` line per row, at full float64 precision."""
    for tok in matrix.vocab.tokens:
        if not tok or any(ch.isspace() for ch in tok):
            raise ValueError(f"token {tok!r} cannot be serialized in the text format")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(matrix.vocab)} {matrix.dim}\n")
        for i, tok in enumerate(matrix.vocab.tokens):
            values = " ".join(format(x, ".17g") for x in matrix.input_vectors[i])
            fh.write(f"{tok} {values}\n")


def load_embeddings(path) -> EmbeddingMatrix:
    """Read the text interchange format back into an EmbeddingMatrix."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: malformed header, expected `count dim`")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataError(f"{path}:1: malformed header, expected two integers") from None
        if count < 1 or dim < 1:
            raise DataError(f"{path}:1: header values must be positive")
        tokens = []
        vectors = np.empty((count, dim))
        for row in range(count):
            line = fh.readline()
            if not line:
                raise DataError(f"{path}: expected {count} rows, file ended at {row}")
            fields = line.rstrip("\n").split(" ")
            # some exporters leave a trailing space before the newline
            if fields and fields[-1] == "":
                fields = fields[:-1]
            if len(fields) != dim + 1:
                raise DataError(
                    f"{path}:{row + 2}: expected {dim} values, got {len(fields) - 1}"
                )
            tokens.append(fields[0])
            try:
                vectors[row] = [float(x) for x in fields[1:]]
            except ValueError:
                raise DataError(f"{path}:{row + 2}: non-numeric vector value") from None
    try:
        vocab = Vocabulary.from_tokens(tokens)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return EmbeddingMatrix(vocab, vectors)
