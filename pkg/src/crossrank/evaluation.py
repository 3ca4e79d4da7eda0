"""NDCG evaluation, TREC run files, and paired randomization testing.

NDCG uses exponential gain 2^r - 1 by default (a linear-gain mode exists for
parity checks with external evaluators) and no rank cutoff.  The ideal DCG is
computed over *all* graded documents of a query, so rankings that miss
relevant documents are penalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Judgments
from .errors import DataError

GAINS = ("exp", "linear")
RANDOMIZATION_ITERATIONS = 100_000
_CHUNK = 4096


def _gain(grades: np.ndarray, gain: str) -> np.ndarray:
    if gain == "exp":
        return np.exp2(grades) - 1.0
    if gain == "linear":
        return grades.astype(np.float64)
    raise ValueError(f"gain must be one of {GAINS}")


def dcg(grades_in_rank_order, gain: str = "exp") -> float:
    """Discounted cumulative gain over a full ranking (no cutoff)."""
    grades = np.asarray(grades_in_rank_order, dtype=np.float64)
    if grades.size == 0:
        return 0.0
    discounts = 1.0 / np.log2(np.arange(2, grades.size + 2))
    return float(_gain(grades, gain) @ discounts)


def ndcg(ranking, grades: dict[str, int], gain: str = "exp") -> float:
    """NDCG of a ranked id list against a per-document grade map.

    The ideal DCG ranks every graded document best-first; documents absent
    from the grade map count as grade 0.  Raises ValueError when the query
    has no relevant document (IDCG = 0); callers exclude such queries from
    means.
    """
    ideal = sorted(grades.values(), reverse=True)
    idcg = dcg(ideal, gain)
    if idcg == 0.0:
        raise ValueError("query has no relevant documents; NDCG undefined")
    observed = [grades.get(doc_id, 0) for doc_id in ranking]
    return dcg(observed, gain) / idcg


class RunList:
    """Per-query ranked (doc_id, score) lists in canonical order.

    Canonical order is descending score with ascending doc-id tie-break;
    construction normalizes and rejects duplicate documents.
    """

    def __init__(self, per_query):
        self._per_query: dict[str, list[tuple[str, float]]] = {}
        for qid in sorted(per_query):
            entries = [(str(d), float(s)) for d, s in per_query[qid]]
            if len({d for d, _ in entries}) != len(entries):
                raise DataError(f"duplicate document in run for query {qid!r}")
            for _, score in entries:
                if not math.isfinite(score):
                    raise DataError(f"non-finite score in run for query {qid!r}")
            entries.sort(key=lambda e: (-e[1], e[0]))
            self._per_query[qid] = entries

    @classmethod
    def from_scores(cls, scores_by_query) -> "RunList":
        return cls({q: list(m.items()) for q, m in scores_by_query.items()})

    def query_ids(self) -> list[str]:
        return list(self._per_query)

    def entries(self, query_id: str) -> list[tuple[str, float]]:
        return list(self._per_query[query_id])

    def ranking(self, query_id: str) -> list[str]:
        return [d for d, _ in self._per_query[query_id]]

    def __len__(self) -> int:
        return len(self._per_query)

    def __eq__(self, other) -> bool:
        return isinstance(other, RunList) and self._per_query == other._per_query


@dataclass
class EvalReport:
    """Evaluation of a single run: per-query NDCG plus the mean."""

    per_query: dict[str, float]
    mean_ndcg: float
    skipped_queries: int
    metadata: dict = field(default_factory=dict)


def evaluate_run(run: RunList, judgments: Judgments, gain: str = "exp", metadata=None) -> EvalReport:
    """Mean NDCG over a run; queries without relevant documents are skipped
    (and counted)."""
    per_query: dict[str, float] = {}
    skipped = 0
    for qid in run.query_ids():
        grades = judgments.graded(qid)
        try:
            per_query[qid] = ndcg(run.ranking(qid), grades, gain=gain)
        except ValueError:
            skipped += 1
    mean = float(np.mean(list(per_query.values()))) if per_query else 0.0
    return EvalReport(per_query, mean, skipped, dict(metadata or {}))


def randomization_test(per_query_a, per_query_b, iterations: int = RANDOMIZATION_ITERATIONS, seed: int = 0) -> float:
    """Two-sided paired randomization test on per-query metric vectors.

    Each iteration flips every (a_i, b_i) pair with probability 1/2 and
    recomputes |mean difference|; the p-value uses add-one smoothing.
    Identical inputs give p = 1.0 exactly.
    """
    a = np.asarray(per_query_a, dtype=np.float64)
    b = np.asarray(per_query_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("inputs must be equal-length nonempty vectors")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    diff = a - b
    observed = abs(float(diff.mean()))
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = iterations
    while remaining > 0:
        block = min(_CHUNK, remaining)
        signs = rng.integers(0, 2, size=(block, diff.size)) * 2 - 1
        stats = np.abs((signs * diff).mean(axis=1))
        hits += int((stats >= observed).sum())
        remaining -= block
    return (hits + 1) / (iterations + 1)


def _format_score(score: float) -> str:
    return repr(float(score))


def emit_run(run: RunList, path, tag: str = "crossrank") -> None:
    """Write the six-column TREC run format: qid Q0 docid rank score tag."""
    if not tag or any(ch.isspace() for ch in tag):
        raise ValueError("run tag must be nonempty without whitespace")
    with open(path, "w", encoding="utf-8") as fh:
        for qid in run.query_ids():
            for rank, (did, score) in enumerate(run.entries(qid), start=1):
                fh.write(f"{qid} Q0 {did} {rank} {_format_score(score)} {tag}\n")


def parse_run(path) -> RunList:
    """Read a TREC run file back into a RunList (canonical order restored)."""
    per_query: dict[str, list[tuple[str, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
            qid, _, did, _, raw_score, _ = fields
            try:
                score = float(raw_score)
            except ValueError:
                raise DataError(f"{path}:{lineno}: score {raw_score!r} is not a number") from None
            per_query.setdefault(qid, []).append((did, score))
    return RunList(per_query)


def grid_search_mixture(primary, secondary, judgments: Judgments, step: float = 0.05, gain: str = "exp"):
    """Sweep combined(d) = w*primary(d) + (1-w)*secondary(d) over w in
    {0, step, ..., 1} and maximize mean NDCG.

    ``primary`` and ``secondary`` map query_id -> {doc_id: score} over the
    same documents.  Ties go to the smaller weight.  Returns (w_star, sweep)
    with sweep a list of (w, mean_ndcg) rows.
    """
    if not primary:
        raise ValueError("empty dev set")
    if not 0 < step <= 1:
        raise ValueError("step must be in (0, 1]")
    n_steps = round(1.0 / step)
    grid = [min(1.0, round(i * step, 12)) for i in range(n_steps)] + [1.0]
    sweep = []
    for w in grid:
        values = []
        for qid, prim in primary.items():
            sec = secondary[qid]
            combined = {d: w * prim[d] + (1.0 - w) * sec[d] for d in prim}
            ranking = sorted(combined, key=lambda d: (-combined[d], d))
            grades = judgments.graded(qid)
            try:
                values.append(ndcg(ranking, grades, gain=gain))
            except ValueError:
                continue
        sweep.append((w, float(np.mean(values)) if values else 0.0))
    best_w, _ = max(sweep, key=lambda row: (row[1], -row[0]))
    return best_w, sweep


@dataclass
class ExperimentRow:
    model: str
    size: int
    run_scores: dict[int, float]          # run index -> mean NDCG
    run_pvalues: dict[int, float]         # vs. baseline, same run index
    mean: float
    diff_to_baseline: float | None


@dataclass
class ExperimentTable:
    """Comparison across model types, candidate-set sizes and runs."""

    rows: list[ExperimentRow]
    baseline: str
    significance_threshold: float
    metadata: dict = field(default_factory=dict)

    def render_text(self) -> str:
        run_indices = sorted({i for row in self.rows for i in row.run_scores})
        header = ["model", "size"] + [f"run{i}" for i in run_indices] + ["mean", "diff"]
        lines = []
        for row in self.rows:
            cells = [row.model, str(row.size)]
            for i in run_indices:
                if i not in row.run_scores:
                    cells.append("-")
                    continue
                mark = ""
                p = row.run_pvalues.get(i)
                if p is not None and p < self.significance_threshold:
                    mark = "*"
                cells.append(f"{100 * row.run_scores[i]:.1f}{mark}")
            cells.append(f"{100 * row.mean:.1f}")
            cells.append("-" if row.diff_to_baseline is None else f"{100 * row.diff_to_baseline:+.1f}")
            lines.append(cells)
        widths = [max(len(header[c]), *(len(line[c]) for line in lines)) for c in range(len(header))]
        out = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        for line in lines:
            out.append("  ".join(c.ljust(w) for c, w in zip(line, widths)))
        out.append("")
        out.append(f"baseline: {self.baseline}; * marks p < {self.significance_threshold:g} "
                   f"(paired randomization vs. baseline, corresponding runs)")
        for key in sorted(self.metadata):
            out.append(f"{key}: {self.metadata[key]}")
        return "\n".join(out) + "\n"

    def render_tsv(self) -> str:
        run_indices = sorted({i for row in self.rows for i in row.run_scores})
        cols = ["model", "size"]
        for i in run_indices:
            cols += [f"ndcg_run{i}", f"p_run{i}"]
        cols += ["mean_ndcg", "diff_to_baseline"]
        lines = ["\t".join(cols)]
        for row in self.rows:
            cells = [row.model, str(row.size)]
            for i in run_indices:
                if i in row.run_scores:
                    cells.append(repr(row.run_scores[i]))
                    p = row.run_pvalues.get(i)
                    cells.append("" if p is None else repr(p))
                else:
                    cells += ["", ""]
            cells.append(repr(row.mean))
            cells.append("" if row.diff_to_baseline is None else repr(row.diff_to_baseline))
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def experiment_report(
    runs,
    judgments: Judgments,
    baseline: str = "text_only",
    gain: str = "exp",
    iterations: int = RANDOMIZATION_ITERATIONS,
    seed: int = 0,
    significance_threshold: float = 0.002,
    metadata=None,
) -> ExperimentTable:
    """Build the model x size comparison table with significance marks.

    ``runs`` maps (model, size, run_idx) -> RunList.  Significance is a
    paired randomization test of each model against the baseline model on
    the *corresponding* run (same size and run index); it requires matching
    query sets.
    """
    reports = {key: evaluate_run(run, judgments, gain=gain) for key, run in runs.items()}
    models = sorted({m for (m, _, _) in runs})
    if baseline in models:
        models.remove(baseline)
        models.insert(0, baseline)
    sizes = sorted({s for (_, s, _) in runs})
    baseline_means = {}
    for size in sizes:
        vals = [reports[(m, s, r)].mean_ndcg for (m, s, r) in runs if m == baseline and s == size]
        if vals:
            baseline_means[size] = float(np.mean(vals))
    rows = []
    for model in models:
        for size in sizes:
            keys = sorted([k for k in runs if k[0] == model and k[1] == size], key=lambda k: k[2])
            if not keys:
                continue
            run_scores = {k[2]: reports[k].mean_ndcg for k in keys}
            run_pvalues = {}
            if model != baseline:
                for key in keys:
                    base_key = (baseline, size, key[2])
                    if base_key not in reports:
                        continue
                    ours, base = reports[key].per_query, reports[base_key].per_query
                    if set(ours) != set(base):
                        raise DataError(
                            f"query sets differ between {key} and {base_key}; "
                            "significance needs corresponding runs"
                        )
                    qids = sorted(ours)
                    run_pvalues[key[2]] = randomization_test(
                        [ours[q] for q in qids], [base[q] for q in qids],
                        iterations=iterations, seed=seed,
                    )
            mean = float(np.mean(list(run_scores.values())))
            diff = mean - baseline_means[size] if (model != baseline and size in baseline_means) else None
            rows.append(ExperimentRow(model, size, run_scores, run_pvalues, mean, diff))
    return ExperimentTable(rows, baseline, significance_threshold, dict(metadata or {}))
