import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specrecon.errors import DataError, UndefinedCorrelationError
from specrecon.metrics import (
    TopKCurve,
    auc_above_chance,
    envelope,
    pearson,
    rank_analysis,
    rank_curve_from_scores,
    spectrogram_correlation,
)

from conftest import make_spec


def longhand_pearson(a, b):
    """Textbook formula evaluated with explicit loops."""
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    num = sum((a[i] - ma) * (b[i] - mb) for i in range(n))
    da = math.sqrt(sum((a[i] - ma) ** 2 for i in range(n)))
    db = math.sqrt(sum((b[i] - mb) ** 2 for i in range(n)))
    return num / (da * db)


class TestEnvelope:
    def test_single_band_is_identity(self, rng):
        row = rng.normal(size=(1, 9))
        assert np.array_equal(envelope(make_spec(row)), row[0])

    def test_constant_spectrogram(self):
        assert np.all(envelope(make_spec(np.full((4, 6), 2.5))) == 2.5)

    def test_hand_computed_column_means(self):
        spec = make_spec(np.arange(1.0, 13.0).reshape(3, 4))
        assert np.array_equal(envelope(spec), [5.0, 6.0, 7.0, 8.0])


class TestPearson:
    def test_self_correlation_is_one(self, rng):
        a = rng.normal(size=20)
        assert pearson(a, a) == 1.0

    def test_negative_affine_is_minus_one(self, rng):
        a = rng.normal(size=15)
        assert pearson(a, -2.0 * a + 7.0) == -1.0

    def test_longhand_oracle(self):
        a = [1.0, 2.0, 3.0, 4.0]
        b = [1.0, 2.0, 2.0, 5.0]
        assert pearson(a, b) == pytest.approx(longhand_pearson(a, b), abs=1e-12)

    def test_zero_variance_raises(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(UndefinedCorrelationError):
            pearson([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        scale=st.floats(0.1, 50.0),
        offset=st.floats(-100.0, 100.0),
    )
    def test_positive_affine_invariance(self, seed, scale, offset):
        g = np.random.default_rng(seed)
        a = g.normal(size=12)
        b = g.normal(size=12)
        assert pearson(a, b) == pytest.approx(pearson(scale * a + offset, b), abs=1e-9)

    def test_symmetry(self, rng):
        a, b = rng.normal(size=10), rng.normal(size=10)
        assert pearson(a, b) == pytest.approx(pearson(b, a), abs=1e-14)


class TestSpectrogramCorrelation:
    def test_identical_is_one(self, rng):
        spec = make_spec(rng.normal(size=(3, 7)))
        assert spectrogram_correlation(spec, spec) == 1.0

    def test_constant_offset_is_one(self, rng):
        base = rng.normal(size=(3, 7))
        assert spectrogram_correlation(
            make_spec(base), make_spec(base + 4.2)
        ) == pytest.approx(1.0, abs=1e-12)

    def test_equals_flattened_pearson(self, rng):
        a = rng.normal(size=(4, 6))
        b = rng.normal(size=(4, 6))
        assert spectrogram_correlation(make_spec(a), make_spec(b)) == pytest.approx(
            pearson(a.ravel(), b.ravel()), abs=1e-14
        )

    def test_shape_mismatch(self, rng):
        with pytest.raises(DataError, match="shape"):
            spectrogram_correlation(
                make_spec(rng.normal(size=(2, 5))), make_spec(rng.normal(size=(2, 6)))
            )


def random_envelope(rng, sid, length=30):
    return (sid, rng.normal(size=length))


class TestRankAnalysis:
    def test_perfect_retrieval(self, rng):
        envs = [random_envelope(rng, sid) for sid in range(8)]
        curve = rank_analysis(envs, envs)
        n = 8
        assert np.all(curve.topk == 1.0)
        assert curve.auc_raw == (n - 1) / 2
        assert curve.auc_norm == 1.0

    def test_two_queries_per_sentence(self, rng):
        candidates = [random_envelope(rng, sid) for sid in range(5)]
        queries = []
        for sid, env in candidates:
            queries.append((sid, env + 0.01 * rng.normal(size=env.size)))
            queries.append((sid, env + 0.01 * rng.normal(size=env.size)))
        curve = rank_analysis(queries, candidates)
        assert curve.topk[0] == 1.0  # tiny perturbations keep rank 1

    def test_unequal_lengths_truncate(self, rng):
        base = rng.normal(size=40)
        candidates = [(0, base), (1, rng.normal(size=25))]
        queries = [(0, base[:33]), (1, rng.normal(size=28))]
        curve = rank_analysis(queries, candidates)
        assert curve.topk[0] >= 0.5  # query 0 must match its own prefix

    def test_id_set_mismatch(self, rng):
        with pytest.raises(DataError, match="sets differ"):
            rank_analysis([random_envelope(rng, 0)], [random_envelope(rng, 1), random_envelope(rng, 2)])

    def test_undefined_comparison_scores_worst(self, rng):
        candidates = [(0, np.ones(10)), (1, rng.normal(size=10))]
        queries = [(0, rng.normal(size=10)), (1, rng.normal(size=10))]
        curve = rank_analysis(queries, candidates)
        assert curve.n_undefined == 2  # both queries vs the constant candidate
        # the correct candidate of query 0 is the constant -> rank worst
        assert curve.topk[0] <= 0.5

    def test_tie_gives_correct_candidate_worst_rank(self):
        scores = np.array([[0.5, 0.5, 0.1]])
        curve = rank_curve_from_scores(scores, [0])
        assert curve.topk[0] == 0.0  # rank 2 despite equal score
        assert curve.topk[1] == 1.0

    def test_monotone_transform_invariance(self, rng):
        scores = rng.normal(size=(6, 6))
        correct = list(range(6))
        base = rank_curve_from_scores(scores, correct)
        for transform in (np.tanh, lambda s: np.exp(s / 3.0), lambda s: 5.0 * s + 2.0):
            curve = rank_curve_from_scores(transform(scores), correct)
            assert np.array_equal(curve.topk, base.topk)

    def test_random_scores_center_on_chance(self):
        rng = np.random.default_rng(7)
        n = 20
        aucs = []
        for _ in range(1000):
            scores = rng.normal(size=(n, n))
            aucs.append(rank_curve_from_scores(scores, list(range(n))).auc_norm)
        # per-draw std of auc_norm ~ 2 sqrt((n+1) / (12 (n-1) n)); the mean of
        # 1000 such draws should sit within 3 sigma of zero
        sigma_mean = 2 * math.sqrt((n + 1) / (12 * (n - 1) * n)) / math.sqrt(1000)
        assert abs(float(np.mean(aucs))) < 3 * sigma_mean


class TestAucAboveChance:
    def test_chance_curve_is_zero(self):
        n = 10
        topk = np.arange(1, n + 1) / n
        curve = TopKCurve(topk=topk, n=n, auc_raw=0.0, auc_norm=0.0)
        raw, norm = auc_above_chance(curve)
        assert raw == pytest.approx(0.0, abs=1e-12)
        assert norm == pytest.approx(0.0, abs=1e-12)

    def test_perfect_curve_exact_closed_form(self):
        n = 10
        curve = rank_curve_from_scores(np.eye(n), list(range(n)))
        assert curve.auc_raw == 4.5  # exactly (n - 1) / 2
        assert curve.auc_norm == 1.0

    def test_worst_curve(self):
        n = 10
        # correct candidate always ranks last
        scores = np.ones((n, n))
        for q in range(n):
            scores[q, q] = 0.0
        curve = rank_curve_from_scores(scores, list(range(n)))
        assert curve.auc_raw == -(n - 1) / 2
        assert curve.auc_norm == -1.0

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(2, 12), seed=st.integers(0, 2**31))
    def test_auc_norm_bounded(self, n, seed):
        scores = np.random.default_rng(seed).normal(size=(n, n))
        curve = rank_curve_from_scores(scores, list(range(n)))
        assert -1.0 <= curve.auc_norm <= 1.0
        assert np.all(np.diff(curve.topk) >= 0)
        assert curve.topk[-1] == 1.0


def test_curve_invariants_enforced():
    with pytest.raises(DataError):
        TopKCurve(topk=np.array([0.5, 0.4, 1.0]), n=3, auc_raw=0.0, auc_norm=0.0)
    with pytest.raises(DataError):
        TopKCurve(topk=np.array([0.5, 0.9]), n=2, auc_raw=0.0, auc_norm=0.0)
