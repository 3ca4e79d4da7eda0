"""Experiment configuration: one INI file with a section per concern.

Command-line ``--set section.key=value`` overrides beat file values; the
effective configuration is written next to the outputs and its hash is
embedded in every derived artifact, so re-runs are traceable.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

STRATEGIES = ("joint", "text_only", "meta_only", "stacked", "rerank", "weighted_rerank")
TRAINABLE_STRATEGIES = ("joint", "text_only", "meta_only")


@dataclass
class ExperimentConfig:
    # paths
    corpus: str = "corpus.jsonl"
    qrels: str = "qrels.txt"
    graph: str = "graph.txt"
    translation_map: str = ""
    splits: str = ""
    output_dir: str = "out"
    # data
    min_count: int = 2
    negatives_per_positive: int = 4
    include_graded_pairs: bool = True
    graded_pair_sample: float = 0.5
    train_fraction: float = 0.6
    dev_fraction: float = 0.2
    split_seed: int = 0
    dev_irrelevant: int = 50
    candidate_sizes: tuple[int, ...] = (40, 200, 1000)
    # embeddings
    word_dim: int = 100
    category_dim: int = 30
    word_window: int = 5
    word_negatives: int = 5
    word_epochs: int = 5
    word_initial_lr: float = 0.025
    word_subsample: float = 1e-3
    category_window: int = 5
    category_negatives: int = 5
    category_epochs: int = 5
    category_initial_lr: float = 0.025
    category_subsample: float = 0.0
    walk_length: int = 40
    walks_per_node: int = 1
    embedding_seed: int = 11
    # model
    text_kernel: int = 4
    category_kernel: int = 1
    text_filters: int = 100
    category_filters: int = 30
    hidden_dims: tuple[int, ...] = (1600, 1600, 1600)
    dropout: float = 0.5
    # training
    epochs: int = 20
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    patience: int = 5
    # experiment
    strategy: str = "joint"
    base_model: str = "joint"
    seeds: tuple[int, ...] = (1, 2, 3)
    gain: str = "exp"
    randomization_iterations: int = 100_000
    significance_threshold: float = 0.002
    grid_step: float = 0.05

    def validate(self, require_inputs: bool = True) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.base_model not in ("joint", "text_only", "meta_only", "stacked"):
            raise ConfigError(f"base_model {self.base_model!r} is not rankable")
        positive = (
            "min_count", "negatives_per_positive", "dev_irrelevant", "word_dim",
            "category_dim", "word_window", "word_epochs", "category_window",
            "category_epochs", "walk_length", "walks_per_node", "text_kernel",
            "category_kernel", "text_filters", "category_filters", "epochs",
            "batch_size", "patience", "randomization_iterations",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.candidate_sizes:
            raise ConfigError("candidate_sizes must be nonempty")
        if not 0 < self.graded_pair_sample <= 1:
            raise ConfigError("graded_pair_sample must be in (0, 1]")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        if not 0 < self.grid_step <= 1:
            raise ConfigError("grid_step must be in (0, 1]")
        if self.gain not in ("exp", "linear"):
            raise ConfigError("gain must be exp or linear")
        if not 0 < self.train_fraction + self.dev_fraction < 1:
            raise ConfigError("train and dev fractions must leave room for a test split")
        if require_inputs:
            for name in ("corpus", "qrels", "graph"):
                path = getattr(self, name)
                if not Path(path).exists():
                    raise ConfigError(f"paths.{name} = {path!r} does not exist")
            for name in ("translation_map", "splits"):
                path = getattr(self, name)
                if path and not Path(path).exists():
                    raise ConfigError(f"paths.{name} = {path!r} does not exist")

    def out(self, *parts) -> Path:
        return Path(self.output_dir, *parts)


_SECTIONS = {
    "paths": ("corpus", "qrels", "graph", "translation_map", "splits", "output_dir"),
    "data": ("min_count", "negatives_per_positive", "include_graded_pairs",
             "graded_pair_sample", "train_fraction", "dev_fraction", "split_seed",
             "dev_irrelevant", "candidate_sizes"),
    "embeddings": ("word_dim", "category_dim", "word_window", "word_negatives",
                   "word_epochs", "word_initial_lr", "word_subsample",
                   "category_window", "category_negatives", "category_epochs",
                   "category_initial_lr", "category_subsample", "walk_length",
                   "walks_per_node", "embedding_seed"),
    "model": ("text_kernel", "category_kernel", "text_filters", "category_filters",
              "hidden_dims", "dropout"),
    "training": ("epochs", "learning_rate", "beta1", "beta2", "epsilon",
                 "batch_size", "patience"),
    "experiment": ("strategy", "base_model", "seeds", "gain",
                   "randomization_iterations", "significance_threshold", "grid_step"),
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(name: str, raw: str):
    ftype = _FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if ftype.startswith("tuple"):
            if not raw:
                return ()
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from None


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read an INI config; apply `section.key=value` overrides on top."""
    parser = configparser.ConfigParser()
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"config file {path!r} not found")
    cfg = ExperimentConfig()
    for section, keys in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        for key in parser.options(section):
            if key not in keys:
                raise ConfigError(f"unknown option {section}.{key}")
            setattr(cfg, key, _parse_value(key, parser.get(section, key)))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        target, value = item.split("=", 1)
        if "." not in target:
            raise ConfigError(f"override target {target!r} must look like section.key")
        section, key = target.split(".", 1)
        if section not in _SECTIONS or key not in _SECTIONS[section]:
            raise ConfigError(f"unknown option {section}.{key}")
        setattr(cfg, key, _parse_value(key, value))
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize to canonical INI text (stable key order)."""
    out = io.StringIO()
    for section, keys in _SECTIONS.items():
        out.write(f"[{section}]\n")
        for key in keys:
            out.write(f"{key} = {_format_value(getattr(cfg, key))}\n")
        out.write("\n")
    return out.getvalue()


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")


def config_hash(cfg: ExperimentConfig) -> str:
    """Short stable digest of the effective configuration."""
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()[:12]
