import numpy as np
import pytest

from crossrank.corpus import Document, Judgments, Vocabulary
from crossrank.ensemble import (
    StackedModel,
    combine_scores,
    grid_search_alpha,
    load_manifest,
    save_manifest,
    stacked_score,
)
from crossrank.errors import DataError
from crossrank.ranker import RankModel, rank
from crossrank.skipgram import EmbeddingMatrix

WORD_TOKENS = [f"w{i:02d}" for i in range(10)]
CAT_TOKENS = [f"c{i:02d}" for i in range(6)]


def component_models(seed=0):
    rng = np.random.default_rng(seed)
    words = EmbeddingMatrix(Vocabulary.from_tokens(WORD_TOKENS),
                            rng.normal(size=(len(WORD_TOKENS), 3)))
    cats = EmbeddingMatrix(Vocabulary.from_tokens(CAT_TOKENS),
                           rng.normal(size=(len(CAT_TOKENS), 2)))
    text = RankModel.create("text_only", word_dim=3, text_kernel=2, text_filters=2,
                            hidden_dims=(4,), seed=seed).attach_embeddings(word=words)
    meta = RankModel.create("meta_only", category_dim=2, category_kernel=1,
                            category_filters=2, hidden_dims=(4,), seed=seed + 1)
    meta.attach_embeddings(categories=cats)
    return text, meta


def random_doc(rng, did, side="target"):
    tokens = tuple(str(t) for t in rng.choice(WORD_TOKENS, size=int(rng.integers(1, 5))))
    labels = frozenset(str(c) for c in rng.choice(CAT_TOKENS, size=2, replace=False))
    return Document(id=did, side=side, tokens=tokens, meta_labels=labels)


class TestStackedScore:
    def test_endpoints_equal_components(self):
        text, meta = component_models()
        rng = np.random.default_rng(1)
        q = random_doc(rng, "q", side="query")
        d = random_doc(rng, "d")
        assert stacked_score(StackedModel(text, meta, 1.0), q, d) == text.score(q, d)
        assert stacked_score(StackedModel(text, meta, 0.0), q, d) == meta.score(q, d)

    def test_half_mix_arithmetic(self):
        text, meta = component_models()
        rng = np.random.default_rng(2)
        q = random_doc(rng, "q", side="query")
        d = random_doc(rng, "d")
        sm = StackedModel(text, meta, 0.5)
        expected = 0.5 * text.score(q, d) + 0.5 * meta.score(q, d)
        assert stacked_score(sm, q, d) == pytest.approx(expected, abs=1e-15)

    def test_hand_values(self):
        assert 0.5 * 0.4 + 0.5 * (-0.2) == pytest.approx(0.1)
        assert combine_scores({"d": 0.4}, {"d": -0.2}, 0.5)["d"] == pytest.approx(0.1)

    def test_component_mode_validation(self):
        text, meta = component_models()
        with pytest.raises(ValueError):
            StackedModel(meta, text, 0.5)
        with pytest.raises(ValueError):
            StackedModel(text, meta, 1.5)

    def test_endpoint_ranking_identity(self):
        text, meta = component_models(seed=3)
        rng = np.random.default_rng(4)
        q = random_doc(rng, "q", side="query")
        docs = [random_doc(rng, f"d{i}") for i in range(8)]
        text_order = [d for d, _ in rank(text, q, docs)]
        meta_order = [d for d, _ in rank(meta, q, docs)]
        t_scores = {d.id: text.score(q, d) for d in docs}
        m_scores = {d.id: meta.score(q, d) for d in docs}
        at_one = combine_scores(t_scores, m_scores, 1.0)
        at_zero = combine_scores(t_scores, m_scores, 0.0)
        assert sorted(at_one, key=lambda d: (-at_one[d], d)) == text_order
        assert sorted(at_zero, key=lambda d: (-at_zero[d], d)) == meta_order


class TestGridSearchAlpha:
    def test_perfect_text_random_meta(self):
        # text component ranks every query perfectly; meta is inverted hard,
        # so anything below alpha=1 stays wrong
        judgments = Judgments({("q1", "d1"): 2, ("q2", "d3"): 2})
        text = {"q1": {"d1": 0.02, "d2": 0.0}, "q2": {"d3": 0.02, "d4": 0.0}}
        meta = {"q1": {"d1": -1.0, "d2": 1.0}, "q2": {"d3": -1.0, "d4": 1.0}}
        alpha, sweep = grid_search_alpha(text, meta, judgments, step=0.05)
        assert alpha == 1.0
        assert dict(sweep)[1.0] == pytest.approx(1.0)

    def test_identical_components_tie_to_zero(self):
        judgments = Judgments({("q1", "d1"): 1})
        scores = {"q1": {"d1": 0.4, "d2": -0.1}}
        alpha, sweep = grid_search_alpha(scores, dict(scores), judgments, step=0.05)
        assert alpha == 0.0
        assert len(sweep) == 21
        values = {v for _, v in sweep}
        assert len(values) == 1

    def test_optimum_at_least_endpoints(self):
        rng = np.random.default_rng(5)
        judgments = Judgments({(f"q{i}", f"d{i}0"): 2 for i in range(6)})
        text, meta = {}, {}
        for i in range(6):
            docs = [f"d{i}{j}" for j in range(5)]
            text[f"q{i}"] = {d: float(rng.uniform(-1, 1)) for d in docs}
            meta[f"q{i}"] = {d: float(rng.uniform(-1, 1)) for d in docs}
        alpha, sweep = grid_search_alpha(text, meta, judgments, step=0.05)
        by_w = dict(sweep)
        assert by_w[alpha] >= by_w[0.0]
        assert by_w[alpha] >= by_w[1.0]


class TestManifest:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "stacked.json"
        save_manifest(path, "text.bin", "meta.bin", 0.35, extra={"seed": 3})
        payload = load_manifest(path)
        assert payload["alpha"] == 0.35
        assert payload["text_model"] == "text.bin"
        assert payload["meta_model"] == "meta.bin"
        assert payload["seed"] == 3

    def test_rejects_bad_alpha(self, tmp_path):
        path = tmp_path / "stacked.json"
        save_manifest(path, "t", "m", 0.5)
        payload = path.read_text().replace("0.5", "7.5")
        path.write_text(payload)
        with pytest.raises(DataError):
            load_manifest(path)

    def test_rejects_wrong_format(self, tmp_path):
        path = tmp_path / "stacked.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(DataError):
            load_manifest(path)
