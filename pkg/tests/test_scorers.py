"""Scorer kernels against hand values and the finite-difference oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ranklab.core import Document, Query
from ranklab.scorers import (
    LinearScorer,
    ParamVector,
    RepresentationError,
    build_scorer,
    discriminator_prob,
    init_params,
    layout_for,
    load_checkpoint,
    pairwise_prob,
    save_checkpoint,
    sigmoid,
)

from conftest import fd_gradient, rel_error


def random_doc(rng, dim, prefix="d", i=0):
    return Document(id=f"{prefix}{i}", features=rng.normal(size=dim))


def random_token_doc(rng, vocab, i=0, max_len=5):
    length = int(rng.integers(1, max_len + 1))
    return Document(id=f"t{i}", tokens=tuple(int(t) for t in rng.integers(0, vocab, size=length)))


def make_kind(kind, rng, seed):
    """(scorer, query, doc) triple with random params and inputs."""
    if kind == "linear":
        scorer = build_scorer("linear", {"feature_dim": 6}, scale=0.5, seed=seed)
        return scorer, None, random_doc(rng, 6)
    if kind == "mlp1":
        scorer = build_scorer("mlp1", {"feature_dim": 5, "hidden": 4}, scale=0.5, seed=seed)
        return scorer, None, random_doc(rng, 5)
    if kind == "matfac":
        dims = {"query_ids": ("u1", "u2", "u3"), "doc_ids": ("i1", "i2", "i3", "i4"),
                "embed_dim": 3}
        scorer = build_scorer("matfac", dims, scale=0.5, seed=seed)
        q = Query(id=f"u{int(rng.integers(1, 4))}")
        d = Document(id=f"i{int(rng.integers(1, 5))}", tokens=(0,))
        return scorer, q, d
    if kind == "text":
        scorer = build_scorer("text", {"vocab_size": 7, "embed_dim": 3}, scale=0.5, seed=seed)
        q = Query(id="q", tokens=tuple(int(t) for t in rng.integers(0, 7, size=3)))
        return scorer, q, random_token_doc(rng, 7, i=0)
    raise ValueError(kind)


ALL_KINDS = ("linear", "mlp1", "matfac", "text")


class TestInitParams:
    def test_mlp1_layout_sizes(self):
        layout = layout_for("mlp1", {"feature_dim": 46, "hidden": 46})
        sizes = {name: length for name, _, length in layout.segments}
        assert sizes == {"hidden_w": 46 * 46, "hidden_b": 46, "out_w": 46, "out_b": 1}
        assert layout.size == 46 * 46 + 46 + 46 + 1

    def test_seed_determinism(self):
        a = init_params("linear", {"feature_dim": 8}, 0.3, seed=9)
        b = init_params("linear", {"feature_dim": 8}, 0.3, seed=9)
        assert np.array_equal(a.values, b.values)

    def test_zero_init_flag(self):
        p = init_params("linear", {"feature_dim": 4}, 0.3, seed=0, zero=True)
        assert np.all(p.values == 0.0)

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(ValueError):
            init_params("linear", {"feature_dim": 4}, 0.0, seed=0)

    def test_within_scale(self):
        p = init_params("mlp1", {"feature_dim": 5, "hidden": 3}, 0.2, seed=1)
        assert np.all(np.abs(p.values) <= 0.2)


class TestScore:
    def test_linear_zero_params(self):
        scorer = build_scorer("linear", {"feature_dim": 3}, zero=True)
        assert scorer.score(None, Document("d", np.array([4.0, -1.0, 2.0]))) == 0.0

    def test_linear_unit_weight(self):
        params = ParamVector(np.array([1.0, 0.0, 0.0, 0.0]), layout_for("linear", {"feature_dim": 3}))
        scorer = LinearScorer(params)
        assert scorer.score(None, Document("d", np.array([2.0, 0.0, 0.0]))) == 2.0

    def test_matfac_hand_value(self):
        dims = {"query_ids": ("u",), "doc_ids": ("i",), "embed_dim": 2}
        values = np.array([1.0, 1.0, 1.0, 1.0, 0.5])  # u=(1,1), v=(1,1), bias=0.5
        scorer = build_scorer("matfac", dims, ParamVector(values, layout_for("matfac", dims)))
        assert scorer.score(Query("u"), Document("i", tokens=(0,))) == pytest.approx(2.5)

    def test_score_many_matches_score(self):
        rng = np.random.default_rng(0)
        for kind in ALL_KINDS:
            scorer, q, _ = make_kind(kind, rng, seed=3)
            docs = [make_kind(kind, rng, seed=3)[2] for _ in range(4)]
            batch = scorer.score_many(q, docs)
            singles = [scorer.score(q, d) for d in docs]
            np.testing.assert_allclose(batch, singles, atol=1e-12)

    def test_representation_mismatch(self):
        scorer = build_scorer("linear", {"feature_dim": 3}, zero=True)
        with pytest.raises(RepresentationError):
            scorer.score(None, Document("d", tokens=(1, 2)))


class TestScoreGradient:
    def test_linear_gradient_is_features_and_one(self):
        scorer = build_scorer("linear", {"feature_dim": 3}, scale=0.5, seed=2)
        x = np.array([1.0, -2.0, 0.5])
        grad = scorer.gradient(None, Document("d", x))
        np.testing.assert_allclose(grad, np.concatenate([x, [1.0]]))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_finite_difference_check(self, kind):
        rng = np.random.default_rng(42)
        for trial in range(10):
            scorer, q, d = make_kind(kind, rng, seed=100 + trial)
            analytic = scorer.gradient(q, d)

            def f(values):
                fresh = build_scorer(kind, scorer.dims,
                                     ParamVector(values, scorer.params.layout))
                return fresh.score(q, d)

            numeric = fd_gradient(f, scorer.params.values)
            assert rel_error(analytic, numeric) < 1e-4

    def test_zero_init_mlp1_cuts_hidden_weight_gradient(self):
        scorer = build_scorer("mlp1", {"feature_dim": 4, "hidden": 3}, zero=True)
        grad = scorer.gradient(None, Document("d", np.ones(4)))
        layout = scorer.params.layout
        # tanh(0) = 0 and out_w = 0, so d f / d hidden_w = 0 and d f / d out_w = 0
        np.testing.assert_array_equal(grad[layout.slice_of("hidden_w")], 0.0)
        np.testing.assert_array_equal(grad[layout.slice_of("hidden_b")], 0.0)
        np.testing.assert_array_equal(grad[layout.slice_of("out_w")], 0.0)
        assert grad[layout.slice_of("out_b")][0] == 1.0

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_weighted_sum_matches_loop(self, kind):
        rng = np.random.default_rng(7)
        scorer, q, _ = make_kind(kind, rng, seed=5)
        docs = [make_kind(kind, rng, seed=5)[2] for _ in range(5)]
        weights = rng.normal(size=5)
        fast = scorer.grad_weighted_sum(q, docs, weights)
        slow = sum(w * scorer.gradient(q, d) for w, d in zip(weights, docs))
        np.testing.assert_allclose(fast, slow, atol=1e-10)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_gradient_matrix_rows(self, kind):
        rng = np.random.default_rng(8)
        scorer, q, _ = make_kind(kind, rng, seed=6)
        docs = [make_kind(kind, rng, seed=6)[2] for _ in range(3)]
        mat = scorer.gradient_matrix(q, docs)
        for row, d in zip(mat, docs):
            np.testing.assert_allclose(row, scorer.gradient(q, d), atol=1e-12)


class TestDiscriminatorProb:
    def test_zero_score_gives_half(self):
        scorer = build_scorer("linear", {"feature_dim": 2}, zero=True)
        assert discriminator_prob(scorer, None, Document("d", np.ones(2))) == 0.5

    def test_log3_gives_three_quarters(self):
        # sigmoid(ln 3) = 3 / (3 + 1)
        params = ParamVector(np.array([0.0, 0.0, math.log(3.0)]),
                             layout_for("linear", {"feature_dim": 2}))
        scorer = LinearScorer(params)
        p = discriminator_prob(scorer, None, Document("d", np.zeros(2)))
        assert p == pytest.approx(0.75, abs=1e-12)

    def test_extreme_scores_stay_in_open_interval(self):
        params = ParamVector(np.array([0.0, -1000.0]), layout_for("linear", {"feature_dim": 1}))
        scorer = LinearScorer(params)
        p = discriminator_prob(scorer, None, Document("d", np.zeros(1)))
        assert 0.0 < p < 1.0
        params.values[1] = 1000.0
        p = discriminator_prob(scorer, None, Document("d", np.zeros(1)))
        assert 0.0 < p < 1.0

    def test_sigmoid_symmetry_by_parameter_negation(self):
        rng = np.random.default_rng(3)
        scorer = build_scorer("linear", {"feature_dim": 4}, scale=1.0, seed=12)
        negated = scorer.clone()
        negated.params.values *= -1.0
        for i in range(20):
            d = Document("d", rng.normal(size=4))
            total = discriminator_prob(scorer, None, d) + discriminator_prob(negated, None, d)
            assert total == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(min_value=-500, max_value=500))
    def test_sigmoid_complement(self, x):
        assert sigmoid(x) + sigmoid(-x) == pytest.approx(1.0, abs=1e-12)


class TestPairwiseProb:
    def setup_method(self):
        self.scorer = build_scorer("linear", {"feature_dim": 2}, scale=1.0, seed=4)
        rng = np.random.default_rng(9)
        self.di = Document("di", rng.normal(size=2))
        self.dj = Document("dj", rng.normal(size=2))

    def test_same_doc_is_half(self):
        assert pairwise_prob(self.scorer, None, self.di, self.di) == 0.5

    def test_log3_margin(self):
        params = ParamVector(np.array([1.0, 0.0]), layout_for("linear", {"feature_dim": 1}))
        scorer = LinearScorer(params)
        hi = Document("hi", np.array([math.log(3.0)]))
        lo = Document("lo", np.array([0.0]))
        assert pairwise_prob(scorer, None, hi, lo) == pytest.approx(0.75, abs=1e-12)

    def test_swap_complements(self):
        p = pairwise_prob(self.scorer, None, self.di, self.dj)
        q = pairwise_prob(self.scorer, None, self.dj, self.di)
        assert p + q == pytest.approx(1.0, abs=1e-12)


class TestSnapshots:
    def test_snapshot_is_read_only(self):
        scorer = build_scorer("linear", {"feature_dim": 2}, scale=0.1, seed=1)
        frozen = scorer.snapshot()
        with pytest.raises(ValueError):
            frozen.params.values[0] = 9.0

    def test_clone_is_independent(self):
        scorer = build_scorer("linear", {"feature_dim": 2}, scale=0.1, seed=1)
        twin = scorer.clone()
        twin.params.values[0] += 1.0
        assert scorer.params.values[0] != twin.params.values[0]


class TestCheckpoints:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_round_trip(self, kind, tmp_path):
        rng = np.random.default_rng(11)
        scorer, q, d = make_kind(kind, rng, seed=21)
        path = tmp_path / "model.ckpt"
        save_checkpoint(scorer, path)
        loaded = load_checkpoint(path)
        assert loaded.kind == scorer.kind
        np.testing.assert_array_equal(loaded.params.values, scorer.params.values)
        assert loaded.score(q, d) == scorer.score(q, d)

    def test_version_marker_first(self, tmp_path):
        scorer = build_scorer("linear", {"feature_dim": 2}, scale=0.1, seed=1)
        path = tmp_path / "model.ckpt"
        save_checkpoint(scorer, path)
        assert path.read_text().splitlines()[0] == "1"
