"""Relevance scorer and pairwise hinge training loop.

The scorer is an MLP over the concatenated encoder outputs of a query and a
document (text branch, category branch, or both).  Hidden layers use relu,
the output layer tanh, so scores live in (-1, 1).  Training minimizes the
mean pairwise hinge max(0, 1 - (s_pos - s_neg)) with Adam; embeddings stay
fixed and only convolution and MLP parameters move.  Backpropagation is
exact and checked against finite differences in the test suite.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import Document, DocumentCollection, Judgments, TranslationMap
from .encoder import ConvParams, encode, encode_backward
from .errors import DataError, NumericError
from .evaluation import ndcg
from .skipgram import EmbeddingMatrix

MODES = ("text_only", "meta_only", "joint")

MODEL_MAGIC = b"CRKMODEL"
MODEL_VERSION = 1


def hinge(s_pos: float, s_neg: float) -> float:
    """Pairwise ranking loss: max(0, 1 - (s_pos - s_neg))."""
    return max(0.0, 1.0 - (s_pos - s_neg))


@dataclass
class ScorerParams:
    """MLP layers as (weights (out, in), bias (out,)) pairs.

    The first layer consumes the concatenated encodings; the last layer has
    a single output unit.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    dropout_rate: float = 0.5

    def __post_init__(self):
        if not self.layers:
            raise ValueError("scorer needs at least one layer")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")
        self.layers = [
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in self.layers
        ]
        prev = None
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: inconsistent shapes")
            if prev is not None and w.shape[1] != prev:
                raise ValueError(f"layer {i}: input {w.shape[1]} does not chain with {prev}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameters")
            prev = w.shape[0]
        if self.layers[-1][0].shape[0] != 1:
            raise ValueError("last layer must have a single output")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def hidden_dims(self) -> list[int]:
        return [w.shape[0] for w, _ in self.layers[:-1]]

    @classmethod
    def create(cls, input_dim: int, hidden_dims, rng: np.random.Generator,
               dropout_rate: float = 0.5) -> "ScorerParams":
        dims = [input_dim, *hidden_dims, 1]
        layers = []
        for fan_in, fan_out in zip(dims, dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append((rng.uniform(-bound, bound, size=(fan_out, fan_in)), np.zeros(fan_out)))
        return cls(layers, dropout_rate=dropout_rate)


def _scorer_forward(scorer: ScorerParams, features: np.ndarray,
                    dropout_rng=None, dropout_rate: float = 0.0):
    """Forward pass returning (score, cache) for backprop."""
    a = features
    inputs = [a]
    pre = []
    masks = []
    n_layers = len(scorer.layers)
    for li, (w, b) in enumerate(scorer.layers):
        z = w @ a + b
        pre.append(z)
        if li == n_layers - 1:
            break
        a = np.maximum(z, 0.0)
        if dropout_rate > 0.0 and dropout_rng is not None:
            mask = (dropout_rng.random(a.shape) >= dropout_rate) / (1.0 - dropout_rate)
            a = a * mask
            masks.append(mask)
        else:
            masks.append(None)
        inputs.append(a)
    score = math.tanh(pre[-1][0])
    return score, (inputs, pre, masks, score)


def _scorer_backward(scorer: ScorerParams, cache, d_score: float):
    """Backward pass: gradients per layer plus gradient w.r.t. the features."""
    inputs, pre, masks, score = cache
    n_layers = len(scorer.layers)
    grads = [None] * n_layers
    dz = np.array([d_score * (1.0 - score * score)])
    for li in range(n_layers - 1, -1, -1):
        w, _ = scorer.layers[li]
        grads[li] = (np.outer(dz, inputs[li]), dz.copy())
        da = w.T @ dz
        if li > 0:
            if masks[li - 1] is not None:
                da = da * masks[li - 1]
            dz = da * (pre[li - 1] > 0.0)
    return grads, da


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    dropout_rate: float = 0.5
    patience: int = 5
    seed: int = 0
    gain: str = "exp"  # NDCG gain used for early stopping on dev

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class AdamOptimizer:
    """Adam over a dict of named parameter arrays, updated in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = self.params[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class RankModel:
    """Convolutional encoders plus MLP scorer for one ranking mode.

    Embedding matrices are attached separately (they are fixed artifacts,
    not trained parameters) via :meth:`attach_embeddings`.
    """

    def __init__(self, mode: str, text_conv: ConvParams | None = None,
                 cat_conv: ConvParams | None = None, scorer: ScorerParams = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode in ("text_only", "joint") and text_conv is None:
            raise ValueError(f"mode {mode} requires text convolution parameters")
        if mode in ("meta_only", "joint") and cat_conv is None:
            raise ValueError(f"mode {mode} requires category convolution parameters")
        if scorer is None:
            raise ValueError("scorer parameters are required")
        expected = 0
        if mode in ("text_only", "joint"):
            expected += 2 * text_conv.m
        if mode in ("meta_only", "joint"):
            expected += 2 * cat_conv.m
        if scorer.input_dim != expected:
            raise ValueError(f"scorer input dim {scorer.input_dim} != {expected} for mode {mode}")
        self.mode = mode
        self.text_conv = text_conv
        self.cat_conv = cat_conv
        self.scorer = scorer
        self.word_embeddings: EmbeddingMatrix | None = None
        self.query_word_embeddings: EmbeddingMatrix | None = None
        self.category_embeddings: EmbeddingMatrix | None = None
        self.translation: TranslationMap = TranslationMap.identity()

    @classmethod
    def create(cls, mode: str, word_dim: int = 100, category_dim: int = 30,
               text_kernel: int = 4, category_kernel: int = 1,
               text_filters: int = 100, category_filters: int = 30,
               hidden_dims=(1600, 1600, 1600), dropout_rate: float = 0.5,
               seed: int = 0) -> "RankModel":
        ss = np.random.SeedSequence(seed).spawn(3)
        text_conv = cat_conv = None
        input_dim = 0
        if mode in ("text_only", "joint"):
            text_conv = ConvParams.create(text_kernel, word_dim, text_filters,
                                          np.random.default_rng(ss[0]))
            input_dim += 2 * text_filters
        if mode in ("meta_only", "joint"):
            cat_conv = ConvParams.create(category_kernel, category_dim, category_filters,
                                         np.random.default_rng(ss[1]))
            input_dim += 2 * category_filters
        scorer = ScorerParams.create(input_dim, hidden_dims, np.random.default_rng(ss[2]),
                                     dropout_rate=dropout_rate)
        return cls(mode, text_conv=text_conv, cat_conv=cat_conv, scorer=scorer)

    # -- embeddings ------------------------------------------------------

    def attach_embeddings(self, word: EmbeddingMatrix | None = None,
                          query_word: EmbeddingMatrix | None = None,
                          categories: EmbeddingMatrix | None = None,
                          translation: TranslationMap | None = None) -> "RankModel":
        """Connect the fixed embedding matrices.

        ``word`` covers the target side; ``query_word`` defaults to the same
        matrix (shared or pre-translated vocabularies).  Query meta labels go
        through ``translation`` before category lookup.
        """
        if word is not None:
            if self.text_conv is not None and word.dim != self.text_conv.k:
                raise ValueError(f"word embedding dim {word.dim} != encoder k {self.text_conv.k}")
            self.word_embeddings = word
            if self.query_word_embeddings is None:
                self.query_word_embeddings = word
        if query_word is not None:
            if self.text_conv is not None and query_word.dim != self.text_conv.k:
                raise ValueError("query word embedding dim mismatch")
            self.query_word_embeddings = query_word
        if categories is not None:
            if self.cat_conv is not None and categories.dim != self.cat_conv.k:
                raise ValueError(f"category embedding dim {categories.dim} != encoder k {self.cat_conv.k}")
            self.category_embeddings = categories
        if translation is not None:
            self.translation = translation
        return self

    def _require_embeddings(self):
        if self.mode in ("text_only", "joint"):
            if self.word_embeddings is None or self.query_word_embeddings is None:
                raise ValueError("no word embeddings attached")
        if self.mode in ("meta_only", "joint"):
            if self.category_embeddings is None:
                raise ValueError("no category embeddings attached")

    def _branch_inputs(self, doc: Document, is_query: bool) -> list[tuple[str, np.ndarray]]:
        """Embedded inputs per active branch, in feature concatenation order."""
        branches = []
        if self.mode in ("text_only", "joint"):
            emb = self.query_word_embeddings if is_query else self.word_embeddings
            branches.append(("text", emb.lookup(doc.tokens)))
        if self.mode in ("meta_only", "joint"):
            if not doc.meta_labels:
                raise DataError(f"document {doc.id!r} has no category data (mode {self.mode})")
            if is_query:
                labels = sorted(self.translation.translate(doc.meta_labels))
            else:
                labels = doc.sorted_labels()
            branches.append(("cat", self.category_embeddings.lookup(labels)))
        return branches

    def _conv(self, kind: str) -> ConvParams:
        return self.text_conv if kind == "text" else self.cat_conv

    def _features(self, query: Document, doc: Document):
        """Concatenated encodings [query branches; doc branches] plus the
        branch inputs needed for backprop."""
        q_branches = self._branch_inputs(query, is_query=True)
        d_branches = self._branch_inputs(doc, is_query=False)
        parts = [encode(x, self._conv(kind)) for kind, x in q_branches + d_branches]
        return np.concatenate(parts), q_branches, d_branches

    # -- scoring ---------------------------------------------------------

    def score(self, query: Document, doc: Document) -> float:
        """Relevance score in (-1, 1); dropout is never active here."""
        self._require_embeddings()
        features, _, _ = self._features(query, doc)
        score, _ = _scorer_forward(self.scorer, features)
        return score

    def score_candidates(self, query: Document, docs) -> np.ndarray:
        """Score many candidates, encoding the query once."""
        self._require_embeddings()
        q_branches = self._branch_inputs(query, is_query=True)
        q_parts = [encode(x, self._conv(kind)) for kind, x in q_branches]
        out = np.empty(len(docs))
        for i, doc in enumerate(docs):
            d_branches = self._branch_inputs(doc, is_query=False)
            d_parts = [encode(x, self._conv(kind)) for kind, x in d_branches]
            features = np.concatenate(q_parts + d_parts)
            out[i], _ = _scorer_forward(self.scorer, features)
        return out

    # -- parameters ------------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every trainable array, keyed by name."""
        params: dict[str, np.ndarray] = {}
        if self.text_conv is not None:
            params["text_conv.weights"] = self.text_conv.weights
            params["text_conv.bias"] = self.text_conv.bias
        if self.cat_conv is not None:
            params["cat_conv.weights"] = self.cat_conv.weights
            params["cat_conv.bias"] = self.cat_conv.bias
        for li, (w, b) in enumerate(self.scorer.layers):
            params[f"scorer.{li}.weights"] = w
            params[f"scorer.{li}.bias"] = b
        return params


def rank(model: RankModel, query: Document, candidates) -> list[tuple[str, float]]:
    """Candidates sorted by descending score, ties by ascending doc id."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate list must be nonempty")
    scores = model.score_candidates(query, candidates)
    pairs = [(doc.id, float(s)) for doc, s in zip(candidates, scores)]
    pairs.sort(key=lambda kv: (-kv[1], kv[0]))
    return pairs


@dataclass
class DevSet:
    """Development data for early stopping: queries, per-query candidate
    documents, and judgments."""

    queries: list[Document]
    candidates: dict[str, list[Document]]
    judgments: Judgments

    def __post_init__(self):
        if not self.queries:
            raise ValueError("dev set must be nonempty")
        for q in self.queries:
            if q.id not in self.candidates:
                raise ValueError(f"dev query {q.id!r} has no candidate list")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_ndcg: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def best_dev_ndcg(self) -> float:
        return max(r.dev_ndcg for r in self.records)


def dev_mean_ndcg(model: RankModel, dev: DevSet, gain: str = "exp") -> float:
    values = []
    for query in dev.queries:
        ranking = [d for d, _ in rank(model, query, dev.candidates[query.id])]
        try:
            values.append(ndcg(ranking, dev.judgments.graded(query.id), gain=gain))
        except ValueError:
            continue
    if not values:
        raise ValueError("no dev query has relevant documents")
    return float(np.mean(values))


def _pair_grads(model: RankModel, query: Document, pos: Document, neg: Document,
                dropout_rng, dropout_rate: float):
    """Hinge loss and parameter gradients for one training pair.

    Returns (loss, grads) with grads None when the pair margin is already
    satisfied (zero gradient).
    """
    q_branches = model._branch_inputs(query, is_query=True)
    p_branches = model._branch_inputs(pos, is_query=False)
    n_branches = model._branch_inputs(neg, is_query=False)
    q_parts = [encode(x, model._conv(kind)) for kind, x in q_branches]
    p_parts = [encode(x, model._conv(kind)) for kind, x in p_branches]
    n_parts = [encode(x, model._conv(kind)) for kind, x in n_branches]
    feat_pos = np.concatenate(q_parts + p_parts)
    feat_neg = np.concatenate(q_parts + n_parts)
    s_pos, cache_pos = _scorer_forward(model.scorer, feat_pos, dropout_rng, dropout_rate)
    s_neg, cache_neg = _scorer_forward(model.scorer, feat_neg, dropout_rng, dropout_rate)
    if not (math.isfinite(s_pos) and math.isfinite(s_neg)):
        # max(0, nan) would silently swallow the damage; surface it instead
        return float("nan"), None
    loss = hinge(s_pos, s_neg)
    if loss <= 0.0:
        return loss, None

    layer_grads_pos, dfeat_pos = _scorer_backward(model.scorer, cache_pos, -1.0)
    layer_grads_neg, dfeat_neg = _scorer_backward(model.scorer, cache_neg, +1.0)
    grads: dict[str, np.ndarray] = {}
    for li in range(len(model.scorer.layers)):
        grads[f"scorer.{li}.weights"] = layer_grads_pos[li][0] + layer_grads_neg[li][0]
        grads[f"scorer.{li}.bias"] = layer_grads_pos[li][1] + layer_grads_neg[li][1]

    def add_conv_grad(kind: str, x: np.ndarray, upstream: np.ndarray) -> None:
        conv = model._conv(kind)
        dw, db = encode_backward(x, conv, upstream)
        wkey, bkey = f"{kind}_conv.weights", f"{kind}_conv.bias"
        if wkey in grads:
            grads[wkey] += dw
            grads[bkey] += db
        else:
            grads[wkey] = dw
            grads[bkey] = db

    offset = 0
    for bi, (kind, x) in enumerate(q_branches):
        m = model._conv(kind).m
        upstream = dfeat_pos[offset:offset + m] + dfeat_neg[offset:offset + m]
        add_conv_grad(kind, x, upstream)
        offset += m
    doc_offset = offset
    for (kind, x_p), (_, x_n) in zip(p_branches, n_branches):
        m = model._conv(kind).m
        add_conv_grad(kind, x_p, dfeat_pos[doc_offset:doc_offset + m])
        add_conv_grad(kind, x_n, dfeat_neg[doc_offset:doc_offset + m])
        doc_offset += m
    return loss, grads


def pair_loss(model: RankModel, query: Document, pos: Document, neg: Document) -> float:
    """Deterministic (dropout-free) hinge loss of one pair; used by tests."""
    return hinge(model.score(query, pos), model.score(query, neg))


def train(model: RankModel, pairs, documents: DocumentCollection, dev: DevSet,
          cfg: TrainConfig) -> tuple[RankModel, TrainingLog]:
    """Minimize the mean pairwise hinge with Adam; early-stop on dev NDCG.

    Only convolution and scorer parameters are updated; embeddings stay
    fixed.  The returned model carries the parameter snapshot of the best
    dev-NDCG epoch.  Deterministic for a fixed seed.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no training pairs")
    model._require_embeddings()
    for pair in pairs:
        if pair.query_id not in documents.queries:
            raise DataError(f"pair references unknown query {pair.query_id!r}")
        if pair.pos_id not in documents.targets or pair.neg_id not in documents.targets:
            raise DataError(f"pair for query {pair.query_id!r} references unknown documents")

    params = model.parameters()
    opt = AdamOptimizer(params, lr=cfg.learning_rate, beta1=cfg.beta1,
                        beta2=cfg.beta2, eps=cfg.epsilon)
    shuffle_ss, dropout_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    rng_shuffle = np.random.default_rng(shuffle_ss)
    rng_dropout = np.random.default_rng(dropout_ss)

    log = TrainingLog()
    best_snapshot = None
    best_ndcg = -np.inf
    epochs_since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng_shuffle.permutation(len(pairs))
        total_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            agg: dict[str, np.ndarray] = {}
            batch_loss = 0.0
            for idx in batch:
                pair = pairs[idx]
                loss, grads = _pair_grads(
                    model,
                    documents.queries[pair.query_id],
                    documents.targets[pair.pos_id],
                    documents.targets[pair.neg_id],
                    rng_dropout,
                    cfg.dropout_rate,
                )
                batch_loss += loss
                if grads:
                    for name, g in grads.items():
                        if name in agg:
                            agg[name] += g
                        else:
                            agg[name] = g
            if not math.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            if agg:
                scale = 1.0 / len(batch)
                opt.step({name: g * scale for name, g in agg.items()})
            total_loss += batch_loss
        train_loss = total_loss / len(pairs)
        epoch_ndcg = dev_mean_ndcg(model, dev, gain=cfg.gain)
        log.records.append(EpochRecord(epoch, train_loss, epoch_ndcg))
        if epoch_ndcg > best_ndcg:
            best_ndcg = epoch_ndcg
            best_snapshot = {name: arr.copy() for name, arr in params.items()}
            log.best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break
    for name, arr in best_snapshot.items():
        np.copyto(params[name], arr)
    return model, log


# -- model file ----------------------------------------------------------


def save_model(model: RankModel, path, config: dict | None = None) -> None:
    """Self-describing binary container: JSON header + little-endian float64
    tensors, each prefixed with its dimensions."""
    params = model.parameters()
    names = sorted(params)
    header = {
        "format": "crossrank-model",
        "mode": model.mode,
        "dropout_rate": model.scorer.dropout_rate,
        "text_conv": None if model.text_conv is None else
            {"h": model.text_conv.h, "activation": model.text_conv.activation},
        "cat_conv": None if model.cat_conv is None else
            {"h": model.cat_conv.h, "activation": model.cat_conv.activation},
        "n_scorer_layers": len(model.scorer.layers),
        "tensors": names,
        "config": config or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_model(path) -> tuple[RankModel, dict]:
    """Read a model container; returns (model, stored config).

    Embeddings are not part of the file and must be attached afterwards.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise DataError(f"{path}: not a model file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != MODEL_VERSION:
            raise DataError(
                f"{path}: model file version {version} unsupported (expected {MODEL_VERSION})"
            )
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = {}
        for name in header["tensors"]:
            raw = fh.read(4)
            if len(raw) < 4:
                raise DataError(f"{path}: truncated tensor block for {name!r}")
            (ndim,) = struct.unpack("<I", raw)
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(8 * count)
            if len(data) < 8 * count:
                raise DataError(f"{path}: truncated tensor data for {name!r}")
            tensors[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()

    def conv_from(prefix: str, meta) -> ConvParams | None:
        if meta is None:
            return None
        return ConvParams(
            weights=tensors[f"{prefix}.weights"],
            bias=tensors[f"{prefix}.bias"],
            h=int(meta["h"]),
            activation=meta["activation"],
        )

    try:
        text_conv = conv_from("text_conv", header["text_conv"])
        cat_conv = conv_from("cat_conv", header["cat_conv"])
        layers = [
            (tensors[f"scorer.{li}.weights"], tensors[f"scorer.{li}.bias"])
            for li in range(int(header["n_scorer_layers"]))
        ]
        scorer = ScorerParams(layers, dropout_rate=float(header["dropout_rate"]))
        model = RankModel(header["mode"], text_conv=text_conv, cat_conv=cat_conv, scorer=scorer)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: inconsistent model file: {exc}") from None
    return model, header.get("config", {})
