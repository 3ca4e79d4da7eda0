"""Stacked scoring: a convex combination of independently trained text-only
and meta-only model scores.

Both component scores live in the tanh range (-1, 1), so they are combined
raw, without normalization.  The weight is found by grid search on dev data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .corpus import Document, Judgments
from .errors import DataError
from .evaluation import grid_search_mixture
from .ranker import RankModel

STACKED_FORMAT = "crossrank-stacked"
STACKED_VERSION = 1


@dataclass
class StackedModel:
    text_model: RankModel
    meta_model: RankModel
    alpha: float

    def __post_init__(self):
        if self.text_model.mode != "text_only":
            raise ValueError("text component must have mode text_only")
        if self.meta_model.mode != "meta_only":
            raise ValueError("meta component must have mode meta_only")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")


def stacked_score(sm: StackedModel, query: Document, doc: Document) -> float:
    """alpha * text score + (1 - alpha) * meta score."""
    return sm.alpha * sm.text_model.score(query, doc) + (1.0 - sm.alpha) * sm.meta_model.score(query, doc)


def combine_scores(text_scores, meta_scores, alpha: float) -> dict[str, float]:
    """Combine two doc->score maps over the same documents."""
    if set(text_scores) != set(meta_scores):
        raise ValueError("score maps must cover the same documents")
    return {d: alpha * text_scores[d] + (1.0 - alpha) * meta_scores[d] for d in text_scores}


def grid_search_alpha(text_scores, meta_scores, judgments: Judgments,
                      step: float = 0.05, gain: str = "exp"):
    """Grid search the stacking weight on dev score maps.

    Arguments map query_id -> {doc_id: score} for each component model over
    identical candidate sets.  Returns (alpha_star, sweep); ties go to the
    smaller alpha.
    """
    return grid_search_mixture(text_scores, meta_scores, judgments, step=step, gain=gain)


def save_manifest(path, text_model_path: str, meta_model_path: str, alpha: float,
                  extra: dict | None = None) -> None:
    """Write the stacked-model manifest: component model paths plus alpha."""
    payload = {
        "format": STACKED_FORMAT,
        "version": STACKED_VERSION,
        "text_model": str(text_model_path),
        "meta_model": str(meta_model_path),
        "alpha": float(alpha),
    }
    payload.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid manifest: {exc}") from None
    if payload.get("format") != STACKED_FORMAT:
        raise DataError(f"{path}: not a stacked-model manifest")
    if payload.get("version") != STACKED_VERSION:
        raise DataError(f"{path}: unsupported manifest version {payload.get('version')}")
    if not 0 <= payload.get("alpha", -1) <= 1:
        raise DataError(f"{path}: alpha outside [0, 1]")
    return payload
