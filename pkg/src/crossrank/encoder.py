"""Convolutional sequence encoder with average pooling.

One filter bank slides over the concatenated input vectors of a window of
``h`` positions; the window outputs are averaged into a fixed-size vector.
Width ``h=1`` turns the encoder into an order-free set encoder (used for
category sets); the window outputs are then sorted before pooling so the
result is bit-exactly permutation invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("tanh", "identity")


@dataclass
class ConvParams:
    """Filter bank: weights (h*k, m), bias (m,), window width h."""

    weights: np.ndarray
    bias: np.ndarray
    h: int
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.h < 1:
            raise ValueError("window width h must be >= 1")
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weights must be 2-d and bias 1-d")
        if self.weights.shape[1] != self.bias.shape[0]:
            raise ValueError("bias length must match filter count")
        if self.weights.shape[0] % self.h != 0:
            raise ValueError("weights row count must be a multiple of h")
        if self.weights.shape[1] < 1:
            raise ValueError("filter count m must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("conv parameters must be finite")

    @property
    def k(self) -> int:
        return self.weights.shape[0] // self.h

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def create(cls, h: int, k: int, m: int, rng: np.random.Generator) -> "ConvParams":
        """Uniform init in [-sqrt(6/(hk+m)), +sqrt(6/(hk+m))], zero bias."""
        bound = np.sqrt(6.0 / (h * k + m))
        weights = rng.uniform(-bound, bound, size=(h * k, m))
        return cls(weights=weights, bias=np.zeros(m), h=h)


def _window_matrix(x: np.ndarray, h: int) -> np.ndarray:
    """Stack the h-wide sliding windows of x as rows of an (l, h*k) matrix.

    Sequences shorter than h are right-padded with zero vectors, so there is
    always at least one window.
    """
    n, k = x.shape
    if n < h:
        x = np.vstack([x, np.zeros((h - n, k))])
        n = h
    l = n - h + 1
    return np.hstack([x[j:j + l] for j in range(h)])


def _check_input(x: np.ndarray, p: ConvParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("input must be a 2-d array of row vectors")
    if x.shape[1] != p.k:
        raise ValueError(f"input vector size {x.shape[1]} does not match k={p.k} (h*k={p.weights.shape[0]})")
    return x


def encode(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Average-pooled window activations: mean_i f(x_{i:i+h-1} . W + b)."""
    x = _check_input(x, p)
    windows = _window_matrix(x, p.h)
    pre = windows @ p.weights + p.bias
    out = np.tanh(pre) if p.activation == "tanh" else pre
    if p.h == 1 and out.shape[0] > 1:
        # canonical summation order -> bit-exact permutation invariance
        order = np.lexsort(out.T[::-1])
        out = out[order]
    return out.mean(axis=0)


def encode_backward(x: np.ndarray, p: ConvParams, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of encode(x, p) . upstream with respect to weights and bias.

    The input embeddings receive no gradient (they stay fixed during ranker
    training).
    """
    x = _check_input(x, p)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (p.m,):
        raise ValueError(f"upstream gradient must have shape ({p.m},)")
    windows = _window_matrix(x, p.h)
    l = windows.shape[0]
    pre = windows @ p.weights + p.bias
    if p.activation == "tanh":
        t = np.tanh(pre)
        dpre = (1.0 - t * t) * (upstream / l)
    else:
        dpre = np.broadcast_to(upstream / l, pre.shape).copy()
    d_weights = windows.T @ dpre
    d_bias = dpre.sum(axis=0)
    return d_weights, d_bias
