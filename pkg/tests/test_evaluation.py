import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from crossrank.corpus import Judgments
from crossrank.errors import DataError
from crossrank.evaluation import (
    EvalReport,
    RunList,
    dcg,
    emit_run,
    evaluate_run,
    experiment_report,
    grid_search_mixture,
    ndcg,
    parse_run,
    randomization_test,
)

FIXTURES = Path(__file__).parent / "fixtures"


def reference_ndcg(ranking, grades, gain="exp"):
    """Pure-python oracle, written independently of the library path."""
    def gain_of(r):
        return (2 ** r - 1) if gain == "exp" else r

    total = 0.0
    for position, doc in enumerate(ranking, start=1):
        total += gain_of(grades.get(doc, 0)) / math.log2(position + 1)
    ideal = 0.0
    for position, r in enumerate(sorted(grades.values(), reverse=True), start=1):
        ideal += gain_of(r) / math.log2(position + 1)
    return total / ideal


class TestNdcg:
    def test_perfect_ordering_is_one(self):
        grades = {"a": 3, "b": 2, "c": 1, "d": 0}
        assert ndcg(["a", "b", "c", "d"], grades) == pytest.approx(1.0, abs=1e-15)

    def test_hand_case_single_relevant_at_rank_two(self):
        grades = {"good": 2, "bad": 0}
        value = ndcg(["bad", "good"], grades)
        assert abs(value - 1.0 / math.log2(3)) < 1e-12

    def test_all_720_permutations_match_oracle(self):
        grades = {"d1": 2, "d2": 2, "d3": 1, "d4": 1, "d5": 0, "d6": 0}
        docs = sorted(grades)
        for perm in itertools.permutations(docs):
            got = ndcg(list(perm), grades)
            want = reference_ndcg(list(perm), grades)
            assert abs(got - want) < 1e-12
            assert 0.0 <= got <= 1.0

    def test_linear_gain_flag(self):
        grades = {"a": 3, "b": 1, "c": 0}
        ranking = ["b", "c", "a"]
        got = ndcg(ranking, grades, gain="linear")
        assert abs(got - reference_ndcg(ranking, grades, gain="linear")) < 1e-12
        assert got != pytest.approx(ndcg(ranking, grades, gain="exp"))

    def test_missing_relevant_doc_penalized(self):
        grades = {"a": 2, "b": 1}
        assert ndcg(["a"], grades) < 1.0
        assert ndcg(["a", "b"], grades) == pytest.approx(1.0)

    def test_idcg_invariant_within_grade_blocks(self):
        # the ideal ordering is unique up to permutations inside equal-grade
        # blocks, so any best-first ranking scores exactly 1
        grades = {"a": 2, "b": 2, "c": 1, "d": 1}
        for perm_hi in itertools.permutations(["a", "b"]):
            for perm_lo in itertools.permutations(["c", "d"]):
                assert ndcg(list(perm_hi) + list(perm_lo), grades) == pytest.approx(1.0, abs=1e-15)

    def test_no_relevant_docs_raises(self):
        with pytest.raises(ValueError):
            ndcg(["a"], {"a": 0})


class TestRandomizationTest:
    def test_identical_runs_give_exactly_one(self):
        a = [0.3, 0.5, 0.9, 0.1]
        assert randomization_test(a, list(a), iterations=1000, seed=0) == 1.0

    def test_exhaustive_three_queries(self):
        rng = np.random.default_rng(5)
        for trial in range(6):
            a = rng.uniform(0, 1, size=3)
            b = rng.uniform(0, 1, size=3)
            d = a - b
            observed = abs(d.mean())
            exact_hits = 0
            for signs in itertools.product((-1, 1), repeat=3):
                if abs(np.mean(np.array(signs) * d)) >= observed:
                    exact_hits += 1
            exact = exact_hits / 8
            sampled = randomization_test(a, b, iterations=100_000, seed=trial)
            assert abs(sampled - exact) < 0.01

    def test_p_in_unit_interval(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            p = randomization_test(rng.normal(size=7), rng.normal(size=7),
                                   iterations=500, seed=0)
            assert 0.0 < p <= 1.0

    def test_scaling_differences_does_not_increase_p(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            a = rng.uniform(0, 1, size=9)
            b = rng.uniform(0, 1, size=9)
            p1 = randomization_test(a, b, iterations=2000, seed=trial)
            p2 = randomization_test(2 * a, 2 * b, iterations=2000, seed=trial)
            assert p2 <= p1 + 1e-12

    def test_strong_signal_gives_small_p(self):
        a = [0.9] * 12
        b = [0.1] * 12
        assert randomization_test(a, b, iterations=100_000, seed=0) < 0.001

    def test_deterministic(self):
        a, b = [0.2, 0.8, 0.4], [0.3, 0.1, 0.6]
        p1 = randomization_test(a, b, iterations=5000, seed=9)
        p2 = randomization_test(a, b, iterations=5000, seed=9)
        assert p1 == p2

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            randomization_test([1.0], [1.0, 2.0])


class TestRunList:
    def test_canonical_order(self):
        run = RunList({"q1": [("dA", 0.5), ("dB", 0.9), ("dC", 0.5)]})
        assert run.ranking("q1") == ["dB", "dA", "dC"]  # tie dA/dC by id

    def test_duplicate_doc_rejected(self):
        with pytest.raises(DataError):
            RunList({"q1": [("d1", 0.5), ("d1", 0.4)]})

    def test_non_finite_score_rejected(self):
        with pytest.raises(DataError):
            RunList({"q1": [("d1", float("nan"))]})

    def test_from_scores(self):
        run = RunList.from_scores({"q1": {"d1": 0.2, "d2": 0.7}})
        assert run.ranking("q1") == ["d2", "d1"]


def trec_eval_style_run_check(path):
    """Independent validator following the classic trec_eval run parser:
    exactly six whitespace-delimited fields, numeric rank and score, no
    duplicate documents per query."""
    seen = {}
    n_lines = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            assert len(parts) == 6, f"bad field count: {line!r}"
            qid, _, docno, rank, sim, _ = parts
            int(rank)
            float(sim)
            assert docno not in seen.setdefault(qid, set())
            seen[qid].add(docno)
            n_lines += 1
    return n_lines


def trec_eval_style_qrels_check(path):
    n_lines = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            assert len(parts) == 4, f"bad qrels line: {line!r}"
            int(parts[3])
            n_lines += 1
    return n_lines


class TestRunIO:
    def test_round_trip(self, tmp_path):
        run = RunList({
            "q1": [("d1", 0.123456789012345), ("d2", -0.5)],
            "q2": [("d9", 1.0)],
        })
        path = tmp_path / "run.txt"
        emit_run(run, path, tag="tagx")
        assert parse_run(path) == run

    def test_five_column_line_reports_lineno(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("q1 Q0 d1 1 0.5 tag\nq1 Q0 d2 2 0.4\n")
        with pytest.raises(DataError, match=":2"):
            parse_run(path)

    def test_fixture_run_parses(self):
        run = parse_run(FIXTURES / "sample_run.txt")
        assert run.ranking("q01")[0] == "d003"
        assert len(run) == 3

    def test_fixture_passes_external_style_validator(self):
        assert trec_eval_style_run_check(FIXTURES / "sample_run.txt") == 10
        assert trec_eval_style_qrels_check(FIXTURES / "sample_qrels.txt") == 6

    def test_emitted_files_pass_external_style_validator(self, tmp_path):
        run = RunList({"q1": [("d1", 1e-9), ("d2", -3.5)], "q2": [("d7", 0.25)]})
        path = tmp_path / "run.txt"
        emit_run(run, path, tag="model-a")
        assert trec_eval_style_run_check(path) == 3

    def test_bad_tag_rejected(self, tmp_path):
        run = RunList({"q1": [("d1", 0.5)]})
        with pytest.raises(ValueError):
            emit_run(run, tmp_path / "run.txt", tag="has space")


class TestEvaluateRun:
    def test_skips_queries_without_relevant(self):
        run = RunList({"q1": [("d1", 0.9), ("d2", 0.1)], "q2": [("d3", 0.4)]})
        judgments = Judgments({("q1", "d1"): 2, ("q2", "d3"): 0})
        report = evaluate_run(run, judgments)
        assert report.skipped_queries == 1
        assert report.per_query == {"q1": pytest.approx(1.0)}
        assert report.mean_ndcg == pytest.approx(1.0)


class TestGridSearchMixture:
    def test_grid_has_21_points(self):
        judgments = Judgments({("q1", "d1"): 1})
        scores = {"q1": {"d1": 0.5, "d2": 0.1}}
        _, sweep = grid_search_mixture(scores, scores, judgments, step=0.05)
        assert len(sweep) == 21
        assert sweep[0][0] == 0.0 and sweep[-1][0] == 1.0

    def test_constant_ndcg_ties_to_zero(self):
        judgments = Judgments({("q1", "d1"): 1})
        scores = {"q1": {"d1": 0.9, "d2": 0.2}}
        w, sweep = grid_search_mixture(scores, scores, judgments, step=0.05)
        assert w == 0.0
        assert len({round(v, 12) for _, v in sweep}) == 1

    def test_planted_weight_one_is_optimal(self):
        # primary ranks correctly by a whisker; secondary is strongly
        # inverted, so every mixture short of w=1 stays wrong
        judgments = Judgments({("q1", "d1"): 2, ("q2", "d3"): 2})
        primary = {"q1": {"d1": 0.01, "d2": 0.0}, "q2": {"d3": 0.01, "d4": 0.0}}
        secondary = {"q1": {"d1": -1.0, "d2": 1.0}, "q2": {"d3": -1.0, "d4": 1.0}}
        w, sweep = grid_search_mixture(primary, secondary, judgments, step=0.05)
        by_w = dict(sweep)
        assert by_w[1.0] == pytest.approx(1.0)
        assert by_w[0.95] < 1.0
        assert by_w[0.0] < 1.0
        assert w == 1.0

    def test_empty_dev_set_rejected(self):
        with pytest.raises(ValueError):
            grid_search_mixture({}, {}, Judgments({("q", "d"): 1}))


class TestExperimentReport:
    def _runs(self):
        # q1: two docs, relevant is d1; q2: two docs, relevant is d3
        judgments = Judgments({("q1", "d1"): 2, ("q1", "d2"): 0,
                               ("q2", "d3"): 2, ("q2", "d4"): 0})
        perfect = RunList({"q1": [("d1", 0.9), ("d2", 0.1)],
                           "q2": [("d3", 0.9), ("d4", 0.1)]})
        inverted = RunList({"q1": [("d1", 0.1), ("d2", 0.9)],
                            "q2": [("d3", 0.1), ("d4", 0.9)]})
        return judgments, perfect, inverted

    def test_self_comparison_p_is_one(self):
        judgments, perfect, _ = self._runs()
        table = experiment_report(
            {("text_only", 40, 1): perfect, ("joint", 40, 1): perfect},
            judgments, baseline="text_only", iterations=2000)
        joint_row = next(r for r in table.rows if r.model == "joint")
        assert joint_row.run_pvalues[1] == 1.0
        assert joint_row.diff_to_baseline == pytest.approx(0.0)

    def test_hand_computed_means(self):
        judgments, perfect, inverted = self._runs()
        table = experiment_report(
            {("text_only", 40, 1): inverted, ("joint", 40, 1): perfect},
            judgments, baseline="text_only", iterations=1000)
        expected_inverted = 1.0 / math.log2(3)
        base_row = next(r for r in table.rows if r.model == "text_only")
        joint_row = next(r for r in table.rows if r.model == "joint")
        assert base_row.mean == pytest.approx(expected_inverted, abs=1e-12)
        assert joint_row.mean == pytest.approx(1.0, abs=1e-12)
        assert joint_row.diff_to_baseline == pytest.approx(1.0 - expected_inverted, abs=1e-12)

    def test_mismatched_query_sets_rejected(self):
        judgments, perfect, _ = self._runs()
        other = RunList({"q1": [("d1", 0.9), ("d2", 0.1)]})
        with pytest.raises(DataError):
            experiment_report({("text_only", 40, 1): perfect, ("joint", 40, 1): other},
                              judgments, baseline="text_only", iterations=100)

    def test_renders_all_sizes(self):
        judgments, perfect, inverted = self._runs()
        runs = {}
        for size in (40, 200, 400, 1000):
            runs[("text_only", size, 1)] = inverted
            runs[("joint", size, 1)] = perfect
        table = experiment_report(runs, judgments, baseline="text_only", iterations=100)
        text = table.render_text()
        for size in ("40", "200", "400", "1000"):
            assert f" {size} " in text or f" {size}\n" in text or size in text
        tsv = table.render_tsv()
        assert tsv.count("\n") == len(table.rows) + 1


class TestEvalReportInvariant:
    def test_mean_equals_arithmetic_mean(self):
        per_query = {"q1": 0.25, "q2": 0.75, "q3": 1.0}
        report = EvalReport(per_query, float(np.mean(list(per_query.values()))), 0)
        assert report.mean_ndcg == pytest.approx(sum(per_query.values()) / 3)
