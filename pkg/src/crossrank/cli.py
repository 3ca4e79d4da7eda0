"""Command-line pipeline: synth -> prepare -> pretrain -> train -> rank ->
evaluate, plus tuning and overlap analysis.

Every command is idempotent for fixed inputs and seeds, and each derived
file embeds (or sits next to a sidecar carrying) the effective config hash.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import corpus as corpus_mod
from . import ensemble as ensemble_mod
from . import evaluation as eval_mod
from . import ranker as ranker_mod
from . import retrieval as retrieval_mod
from . import synth as synth_mod
from .config import ExperimentConfig, TRAINABLE_STRATEGIES
from .errors import ConfigError, DataError, NumericError
from .graph_embed import CategoryGraph, WalkConfig, train_category_embeddings
from .ranker import DevSet, RankModel, TrainConfig
from .skipgram import SgnsConfig, load_embeddings, save_embeddings, train_sgns

# rng stream labels, combined with user seeds for reproducible substreams
_DEV_STREAM = 101
_TEST_STREAM = 202


def _load_context(args, require_inputs: bool = True):
    cfg = config_mod.load_config(args.config, overrides=args.set or [])
    cfg.validate(require_inputs=require_inputs)
    chash = config_mod.config_hash(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_mod.save_config(cfg, out / "config_used.ini")
    return cfg, chash


def _sidecar(path: Path, chash: str) -> None:
    meta = {"config_hash": chash}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")


def _load_inputs(cfg: ExperimentConfig):
    collection = corpus_mod.load_corpus(cfg.corpus)
    judgments = corpus_mod.load_qrels(cfg.qrels, doc_ids=collection.targets.keys())
    judgments.validate_against(collection)
    tmap = (corpus_mod.load_translation_map(cfg.translation_map)
            if cfg.translation_map else corpus_mod.TranslationMap.identity())
    return collection, judgments, tmap


def _splits_path(cfg: ExperimentConfig) -> Path:
    return cfg.out("splits.json")


def _load_splits(cfg: ExperimentConfig) -> dict[str, list[str]]:
    path = _splits_path(cfg)
    if not path.exists():
        raise DataError(f"{path} not found; run `crossrank prepare` first")
    payload = json.loads(path.read_text(encoding="utf-8"))
    return {k: payload[k] for k in ("train", "dev", "test")}


def _restrict_judgments(judgments: corpus_mod.Judgments, query_ids) -> corpus_mod.Judgments:
    keep = set(query_ids)
    grades = {(q, d): g for (q, d), g in judgments.grades.items() if q in keep}
    return corpus_mod.Judgments(grades, doc_ids=judgments.doc_ids)


# -- commands -------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = synth_mod.SynthConfig(
        n_queries=args.queries, n_targets=args.targets, seed=args.seed,
        signal_mode=args.signal_mode, text_signal_rate=args.text_signal_rate,
        n_topics=args.topics, n_clusters=args.clusters,
    )
    data = synth_mod.generate(scfg)
    corpus_mod.save_corpus(data.collection, out / "corpus.jsonl")
    corpus_mod.save_qrels(data.judgments, out / "qrels.txt")
    synth_mod.save_edge_list(data.edges, out / "graph.txt")
    synth_mod.save_splits(data.splits, out / "splits.json")
    (out / "synth.meta.json").write_text(
        json.dumps({"generator": dataclasses.asdict(scfg)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    cfg = ExperimentConfig(
        corpus=str(out / "corpus.jsonl"), qrels=str(out / "qrels.txt"),
        graph=str(out / "graph.txt"), splits=str(out / "splits.json"),
        output_dir=str(out / "work"),
        # desk-scale model: the generated task is learnable at these sizes
        word_dim=48, text_filters=48, category_dim=16, category_filters=24,
        hidden_dims=(96,), word_epochs=3, epochs=12, dev_irrelevant=30,
        candidate_sizes=(40, 200), batch_size=32,
    )
    config_mod.save_config(cfg, out / "config.ini")
    print(f"synthetic corpus written to {out} ({args.queries} queries, {args.targets} targets)")
    print(f"starter config: {out / 'config.ini'}")
    return 0


def cmd_prepare(args) -> int:
    cfg, chash = _load_context(args)
    collection, judgments, _ = _load_inputs(cfg)

    corpus_mod.save_corpus(collection, cfg.out("corpus_tokenized.jsonl"))
    _sidecar(cfg.out("corpus_tokenized.jsonl"), chash)

    vocab = corpus_mod.build_vocab(iter(collection), min_count=cfg.min_count)
    with open(cfg.out("vocab.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# config {chash}\n")
        for tok, count in zip(vocab.tokens, vocab.counts):
            fh.write(f"{tok}\t{count}\n")

    if cfg.splits:
        splits = synth_mod.load_splits(cfg.splits)
        splits = {k: sorted(splits[k]) for k in ("train", "dev", "test")}
    else:
        qids = sorted(collection.queries)
        rng = np.random.default_rng(cfg.split_seed)
        order = rng.permutation(len(qids))
        n_train = round(cfg.train_fraction * len(qids))
        n_dev = round(cfg.dev_fraction * len(qids))
        shuffled = [qids[i] for i in order]
        splits = {
            "train": sorted(shuffled[:n_train]),
            "dev": sorted(shuffled[n_train:n_train + n_dev]),
            "test": sorted(shuffled[n_train + n_dev:]),
        }
    payload = {"config_hash": chash, **splits}
    _splits_path(cfg).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    train_judgments = _restrict_judgments(judgments, splits["train"])
    total_pairs = 0
    for seed in cfg.seeds:
        pairs, skipped = corpus_mod.build_training_pairs(
            train_judgments,
            negatives_per_positive=cfg.negatives_per_positive,
            include_graded_pairs=cfg.include_graded_pairs,
            graded_pair_sample=cfg.graded_pair_sample,
            seed=seed,
        )
        path = cfg.out(f"pairs_seed{seed}.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# config {chash}\n")
            for p in pairs:
                fh.write(f"{p.query_id}\t{p.pos_id}\t{p.neg_id}\t{p.pos_grade}\t{p.neg_grade}\n")
        total_pairs += len(pairs)
        if skipped:
            print(f"seed {seed}: skipped {skipped} queries without grade-0 candidates", file=sys.stderr)
    print(f"prepared vocab ({len(vocab)} tokens), splits and {total_pairs} pairs across {len(cfg.seeds)} seeds")
    return 0


def _load_pairs(path) -> list[corpus_mod.TrainingPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields")
            pairs.append(corpus_mod.TrainingPair(
                fields[0], fields[1], fields[2], int(fields[3]), int(fields[4])))
    return pairs


def cmd_pretrain_words(args) -> int:
    cfg, chash = _load_context(args)
    collection, _, _ = _load_inputs(cfg)
    vocab = corpus_mod.build_vocab(iter(collection), min_count=cfg.min_count)
    sequences = [vocab.encode(doc.tokens) for doc in collection]
    sequences = [s for s in sequences if len(s) >= 2]
    scfg = SgnsConfig(
        dim=cfg.word_dim, window=cfg.word_window, negatives=cfg.word_negatives,
        epochs=cfg.word_epochs, initial_lr=cfg.word_initial_lr,
        subsample_threshold=cfg.word_subsample, seed=cfg.embedding_seed,
    )
    matrix = train_sgns(sequences, vocab, scfg)
    path = cfg.out("words.vec")
    save_embeddings(matrix, path)
    _sidecar(path, chash)
    print(f"word embeddings: {len(vocab)} x {cfg.word_dim} -> {path}")
    return 0


def cmd_pretrain_categories(args) -> int:
    cfg, chash = _load_context(args)
    graph = CategoryGraph.from_file(cfg.graph)
    wcfg = WalkConfig(walk_length=cfg.walk_length, walks_per_node=cfg.walks_per_node,
                      seed=cfg.embedding_seed)
    scfg = SgnsConfig(
        dim=cfg.category_dim, window=cfg.category_window, negatives=cfg.category_negatives,
        epochs=cfg.category_epochs, initial_lr=cfg.category_initial_lr,
        subsample_threshold=cfg.category_subsample, seed=cfg.embedding_seed,
    )
    matrix = train_category_embeddings(graph, wcfg, scfg)
    path = cfg.out("categories.vec")
    save_embeddings(matrix, path)
    _sidecar(path, chash)
    print(f"category embeddings: {len(graph)} x {cfg.category_dim} -> {path}")
    return 0


def _attach(cfg: ExperimentConfig, model: RankModel, tmap) -> RankModel:
    if model.mode in ("text_only", "joint"):
        words_path = cfg.out("words.vec")
        if not words_path.exists():
            raise DataError(f"{words_path} not found; run `crossrank pretrain-words` first")
        model.attach_embeddings(word=load_embeddings(words_path))
    if model.mode in ("meta_only", "joint"):
        cats_path = cfg.out("categories.vec")
        if not cats_path.exists():
            raise DataError(f"{cats_path} not found; run `crossrank pretrain-categories` first")
        model.attach_embeddings(categories=load_embeddings(cats_path))
    model.attach_embeddings(translation=tmap)
    return model


def _dev_set(cfg: ExperimentConfig, collection, judgments, splits, seed: int) -> DevSet:
    rng = np.random.default_rng((seed, _DEV_STREAM))
    queries = []
    candidates = {}
    for qid in splits["dev"]:
        if not judgments.positives(qid):
            continue
        queries.append(collection.queries[qid])
        ids = corpus_mod.sample_candidates(judgments, qid, cfg.dev_irrelevant, rng)
        candidates[qid] = [collection.targets[d] for d in ids]
    if not queries:
        raise DataError("dev split has no queries with relevant documents")
    return DevSet(queries, candidates, judgments)


def _model_path(cfg: ExperimentConfig, strategy: str, seed: int) -> Path:
    return cfg.out(f"model_{strategy}_seed{seed}.bin")


def _strategy_seed(args, cfg: ExperimentConfig) -> tuple[str, list[int]]:
    strategy = args.strategy or cfg.strategy
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    return strategy, seeds


def cmd_train(args) -> int:
    cfg, chash = _load_context(args)
    strategy, seeds = _strategy_seed(args, cfg)
    if strategy not in TRAINABLE_STRATEGIES:
        raise ConfigError(
            f"strategy {strategy!r} is not trained directly; train its components "
            f"({', '.join(TRAINABLE_STRATEGIES)}) and use `tune`/`rank`"
        )
    collection, judgments, tmap = _load_inputs(cfg)
    splits = _load_splits(cfg)
    for seed in seeds:
        pairs_path = cfg.out(f"pairs_seed{seed}.tsv")
        if not pairs_path.exists():
            raise DataError(f"{pairs_path} not found; run `crossrank prepare` first")
        pairs = _load_pairs(pairs_path)
        model = RankModel.create(
            strategy, word_dim=cfg.word_dim, category_dim=cfg.category_dim,
            text_kernel=cfg.text_kernel, category_kernel=cfg.category_kernel,
            text_filters=cfg.text_filters, category_filters=cfg.category_filters,
            hidden_dims=cfg.hidden_dims, dropout_rate=cfg.dropout, seed=seed,
        )
        _attach(cfg, model, tmap)
        dev = _dev_set(cfg, collection, judgments, splits, seed)
        tcfg = TrainConfig(
            epochs=cfg.epochs, learning_rate=cfg.learning_rate, beta1=cfg.beta1,
            beta2=cfg.beta2, epsilon=cfg.epsilon, batch_size=cfg.batch_size,
            dropout_rate=cfg.dropout, patience=cfg.patience, seed=seed, gain=cfg.gain,
        )
        model, log = ranker_mod.train(model, pairs, collection, dev, tcfg)
        ranker_mod.save_model(model, _model_path(cfg, strategy, seed),
                              config={"config_hash": chash, "strategy": strategy, "seed": seed})
        log_path = cfg.out(f"trainlog_{strategy}_seed{seed}.tsv")
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write(f"# config {chash}\n")
            fh.write("epoch\ttrain_loss\tdev_ndcg\n")
            for rec in log.records:
                fh.write(f"{rec.epoch}\t{rec.train_loss!r}\t{rec.dev_ndcg!r}\n")
            fh.write(f"# best_epoch {log.best_epoch}\n")
        print(f"{strategy} seed {seed}: best dev NDCG {log.best_dev_ndcg():.4f} "
              f"at epoch {log.best_epoch} -> {_model_path(cfg, strategy, seed)}")
    return 0


def _load_trained(cfg: ExperimentConfig, strategy: str, seed: int, tmap) -> RankModel:
    path = _model_path(cfg, strategy, seed)
    if not path.exists():
        raise DataError(f"{path} not found; run `crossrank train --strategy {strategy}` first")
    model, _ = ranker_mod.load_model(path)
    return _attach(cfg, model, tmap)


def _score_map(model: RankModel, query, docs) -> dict[str, float]:
    scores = model.score_candidates(query, docs)
    return {doc.id: float(s) for doc, s in zip(docs, scores)}


def _stacked_components(cfg: ExperimentConfig, seed: int, tmap):
    text_model = _load_trained(cfg, "text_only", seed, tmap)
    meta_model = _load_trained(cfg, "meta_only", seed, tmap)
    return text_model, meta_model


def _stacked_manifest_path(cfg: ExperimentConfig, seed: int) -> Path:
    return cfg.out(f"stacked_seed{seed}.json")


def _lambda_manifest_path(cfg: ExperimentConfig, seed: int) -> Path:
    return cfg.out(f"weighted_seed{seed}.json")


def cmd_tune(args) -> int:
    cfg, chash = _load_context(args)
    strategy, seeds = _strategy_seed(args, cfg)
    if strategy not in ("stacked", "weighted_rerank"):
        raise ConfigError("tune supports strategies `stacked` and `weighted_rerank`")
    collection, judgments, tmap = _load_inputs(cfg)
    splits = _load_splits(cfg)
    for seed in seeds:
        dev = _dev_set(cfg, collection, judgments, splits, seed)
        if strategy == "stacked":
            text_model, meta_model = _stacked_components(cfg, seed, tmap)
            text_scores = {q.id: _score_map(text_model, q, dev.candidates[q.id]) for q in dev.queries}
            meta_scores = {q.id: _score_map(meta_model, q, dev.candidates[q.id]) for q in dev.queries}
            alpha, sweep = ensemble_mod.grid_search_alpha(
                text_scores, meta_scores, judgments, step=cfg.grid_step, gain=cfg.gain)
            ensemble_mod.save_manifest(
                _stacked_manifest_path(cfg, seed),
                str(_model_path(cfg, "text_only", seed)),
                str(_model_path(cfg, "meta_only", seed)),
                alpha,
                extra={"config_hash": chash, "seed": seed,
                       "sweep": [[w, v] for w, v in sweep]},
            )
            print(f"stacked seed {seed}: alpha* = {alpha:g}")
        else:
            base = _load_base_scorer(cfg, seed, tmap)
            index = retrieval_mod.InvertedIndex.build(collection.targets.values())
            lambdas = {}
            sweeps = {}
            for size in cfg.candidate_sizes:
                cands = {}
                model_scores = {}
                for query in dev.queries:
                    cand = retrieval_mod.preselect(index, query, size, judgments)
                    cands[query.id] = cand
                    docs = [collection.targets[d] for d in cand.doc_ids()]
                    model_scores[query.id] = base(query, docs)
                lam, sweep = retrieval_mod.grid_search_lambda(
                    cands, model_scores, judgments, step=cfg.grid_step, gain=cfg.gain)
                lambdas[str(size)] = lam
                sweeps[str(size)] = [[w, v] for w, v in sweep]
            payload = {"format": "crossrank-weighted", "version": 1,
                       "config_hash": chash, "seed": seed,
                       "base_model": cfg.base_model, "lambda": lambdas, "sweeps": sweeps}
            _lambda_manifest_path(cfg, seed).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            print(f"weighted_rerank seed {seed}: lambda* = "
                  + ", ".join(f"n={s}: {lambdas[s]:g}" for s in sorted(lambdas, key=int)))
    return 0


def _load_base_scorer(cfg: ExperimentConfig, seed: int, tmap):
    """Scoring closure for the configured base model (single or stacked)."""
    if cfg.base_model == "stacked":
        manifest = ensemble_mod.load_manifest(_stacked_manifest_path(cfg, seed))
        text_model, meta_model = _stacked_components(cfg, seed, tmap)
        alpha = manifest["alpha"]

        def score(query, docs):
            t = _score_map(text_model, query, docs)
            m = _score_map(meta_model, query, docs)
            return ensemble_mod.combine_scores(t, m, alpha)
        return score
    model = _load_trained(cfg, cfg.base_model, seed, tmap)

    def score(query, docs):
        return _score_map(model, query, docs)
    return score


def cmd_rank(args) -> int:
    cfg, chash = _load_context(args)
    strategy, seeds = _strategy_seed(args, cfg)
    collection, judgments, tmap = _load_inputs(cfg)
    splits = _load_splits(cfg)
    test_qids = [q for q in splits["test"] if judgments.positives(q)]
    if not test_qids:
        raise DataError("test split has no queries with relevant documents")
    emitted = []
    for seed in seeds:
        scorer = None
        if strategy in TRAINABLE_STRATEGIES:
            model = _load_trained(cfg, strategy, seed, tmap)
            scorer = lambda q, docs, m=model: _score_map(m, q, docs)
        elif strategy == "stacked":
            manifest = ensemble_mod.load_manifest(_stacked_manifest_path(cfg, seed))
            text_model, meta_model = _stacked_components(cfg, seed, tmap)
            alpha = manifest["alpha"]

            def scorer(q, docs, t=text_model, m=meta_model, a=alpha):
                return ensemble_mod.combine_scores(_score_map(t, q, docs), _score_map(m, q, docs), a)
        else:
            base = _load_base_scorer(cfg, seed, tmap)
        index = (retrieval_mod.InvertedIndex.build(collection.targets.values())
                 if strategy in ("rerank", "weighted_rerank") else None)
        lambdas = None
        if strategy == "weighted_rerank":
            manifest_path = _lambda_manifest_path(cfg, seed)
            if not manifest_path.exists():
                raise DataError(f"{manifest_path} not found; run `crossrank tune --strategy weighted_rerank`")
            lambdas = json.loads(manifest_path.read_text(encoding="utf-8"))["lambda"]
        for size in cfg.candidate_sizes:
            per_query = {}
            rng = np.random.default_rng((seed, _TEST_STREAM, size))
            for qid in test_qids:
                query = collection.queries[qid]
                if strategy in ("rerank", "weighted_rerank"):
                    cand = retrieval_mod.preselect(index, query, size, judgments)
                    docs = [collection.targets[d] for d in cand.doc_ids()]
                    model_scores = base(query, docs)
                    lam = 0.0 if strategy == "rerank" else float(lambdas[str(size)])
                    per_query[qid] = retrieval_mod.weighted_rerank(cand, model_scores, lam)
                else:
                    ids = corpus_mod.sample_candidates(judgments, qid, size, rng)
                    docs = [collection.targets[d] for d in ids]
                    scores = scorer(query, docs)
                    per_query[qid] = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
            run = eval_mod.RunList(per_query)
            path = cfg.out(f"run_{strategy}_seed{seed}_size{size}.txt")
            eval_mod.emit_run(run, path, tag=f"{strategy}-s{seed}-{chash}")
            emitted.append(path)
    print(f"emitted {len(emitted)} run files to {cfg.output_dir}")
    return 0


def cmd_evaluate(args) -> int:
    cfg, chash = _load_context(args)
    _, judgments, _ = _load_inputs(cfg)
    runs = {}
    for path in sorted(cfg.out().glob("run_*_seed*_size*.txt")):
        stem = path.stem[len("run_"):]
        name, _, rest = stem.rpartition("_seed")
        seed_str, _, size_str = rest.partition("_size")
        try:
            key = (name, int(size_str), int(seed_str))
        except ValueError:
            continue
        runs[key] = eval_mod.parse_run(path)
    if not runs:
        raise DataError(f"no run files found under {cfg.output_dir}; run `crossrank rank` first")
    models = {m for m, _, _ in runs}
    baseline = "text_only" if "text_only" in models else sorted(models)[0]
    table = eval_mod.experiment_report(
        runs, judgments, baseline=baseline, gain=cfg.gain,
        iterations=cfg.randomization_iterations,
        significance_threshold=cfg.significance_threshold,
        metadata={"config_hash": chash},
    )
    cfg.out("report.txt").write_text(table.render_text(), encoding="utf-8")
    tsv = f"# config {chash}\n" + table.render_tsv()
    cfg.out("report.tsv").write_text(tsv, encoding="utf-8")
    print(table.render_text())
    return 0


def cmd_analyze_overlap(args) -> int:
    cfg, chash = _load_context(args)
    collection, judgments, tmap = _load_inputs(cfg)
    pairs = []
    for qid in judgments.query_ids():
        if qid not in collection.queries:
            continue
        query = collection.queries[qid]
        for did, grade in judgments.positives(qid):
            pairs.append((query, collection.targets[did], grade))
    hist = corpus_mod.overlap_histogram(pairs, tmap)
    labels = ["0"] + [f"({10 * (i - 1)},{10 * i}%]" for i in range(1, 11)]
    lines = [f"# config {chash}", "overlap_bucket\tpercent"]
    for label, value in zip(labels, hist):
        lines.append(f"{label}\t{value!r}")
    out_path = cfg.out("overlap.tsv")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    width = max(len(l) for l in labels)
    print(f"category overlap over {len(pairs)} relevant query-document pairs:")
    for label, value in zip(labels, hist):
        bar = "#" * int(round(value / 2))
        print(f"  {label.rjust(width)}  {value:6.2f}%  {bar}")
    print(f"table -> {out_path}")
    return 0


# -- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossrank",
        description="Train and evaluate text+category learning-to-rank models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-signal synthetic corpus")
    p.add_argument("--out", required=True, help="output directory for corpus files")
    p.add_argument("--queries", type=int, default=300)
    p.add_argument("--targets", type=int, default=3000)
    p.add_argument("--topics", type=int, default=20)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--signal-mode", choices=synth_mod.SIGNAL_MODES, default="mixture")
    p.add_argument("--text-signal-rate", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    def add_config(p):
        p.add_argument("--config", required=True, help="experiment config (INI)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")

    def add_strategy_seed(p):
        p.add_argument("--strategy", default=None, help="override experiment.strategy")
        p.add_argument("--seed", type=int, default=None, help="run a single seed")

    for name, func, helptext in (
        ("prepare", cmd_prepare, "build vocab, splits, tokenized cache and training pairs"),
        ("pretrain-words", cmd_pretrain_words, "train word embeddings on the corpus text"),
        ("pretrain-categories", cmd_pretrain_categories, "train category embeddings on the graph"),
        ("evaluate", cmd_evaluate, "score all emitted runs against the qrels"),
        ("analyze-overlap", cmd_analyze_overlap, "category-overlap histogram of relevant pairs"),
    ):
        p = sub.add_parser(name, help=helptext)
        add_config(p)
        p.set_defaults(func=func)

    for name, func, helptext in (
        ("train", cmd_train, "train a ranking model per seed"),
        ("rank", cmd_rank, "emit TREC run files per seed and candidate size"),
        ("tune", cmd_tune, "grid-search stacking alpha or reranking lambda on dev"),
    ):
        p = sub.add_parser(name, help=helptext)
        add_config(p)
        add_strategy_seed(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: missing file {exc.filename or exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
