import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specrecon.data import ConditionLabel
from specrecon.errors import ConfigError, DataError, NumericError, SingularSystemError
from specrecon.lagridge import (
    ChannelScaler,
    GridSearchResult,
    LagSpec,
    LinearDecoder,
    build_lag_matrix,
    effective_weights,
    fit_ridge,
    grid_search_alpha,
    lag_matrix,
    load_decoder,
    predict,
    save_decoder,
    stack_pairs,
)
from specrecon.metrics import envelope, pearson

from conftest import make_spec, make_trial


def brute_force_lag(data, lags):
    """Triple-loop oracle for the lagged design matrix."""
    c, t = data.shape
    out = np.zeros((c * len(lags), t))
    for ci in range(c):
        for j, lag in enumerate(lags):
            for ti in range(t):
                src = ti - lag
                if 0 <= src < t:
                    out[ci * len(lags) + j, ti] = data[ci, src]
    return out


def ridge_oracle(design, targets, alpha):
    """Independent dense normal-equation solve."""
    d = design.shape[0]
    return np.linalg.solve(design @ design.T + alpha * np.eye(d), design @ targets.T)


class TestLagMatrix:
    def test_identity_lag(self):
        assert np.array_equal(lag_matrix(np.array([[1.0, 2.0, 3.0]]), [0]), [[1, 2, 3]])

    def test_unit_shift_zero_pads(self):
        assert np.array_equal(lag_matrix(np.array([[1.0, 2.0, 3.0]]), [1]), [[0, 1, 2]])

    def test_negative_lag_looks_ahead(self):
        assert np.array_equal(lag_matrix(np.array([[1.0, 2.0, 3.0]]), [-1]), [[2, 3, 0]])

    def test_matches_brute_force(self, rng):
        data = rng.normal(size=(2, 4))
        lags = [0, 1, 2]
        assert np.array_equal(lag_matrix(data, lags), brute_force_lag(data, lags))

    @settings(max_examples=40, deadline=None)
    @given(
        c=st.integers(1, 4),
        t=st.integers(4, 12),
        seed=st.integers(0, 2**31),
        lags=st.lists(st.integers(-3, 3), min_size=1, max_size=4, unique=True).map(sorted),
    )
    def test_brute_force_property(self, c, t, seed, lags):
        data = np.random.default_rng(seed).normal(size=(c, t))
        assert np.array_equal(lag_matrix(data, lags), brute_force_lag(data, lags))

    def test_row_ordering_is_channel_major(self, rng):
        data = rng.normal(size=(3, 6))
        out = lag_matrix(data, [0, 2])
        assert np.array_equal(out[2 * 2 + 0], data[2])  # channel 2, lag 0
        assert np.array_equal(out[1 * 2 + 1, 2:], data[1, :-2])  # channel 1, lag 2

    def test_empty_lag_set_rejected(self):
        with pytest.raises(ConfigError, match="nonempty"):
            lag_matrix(np.ones((1, 4)), [])

    def test_oversized_lag_rejected(self):
        with pytest.raises(ConfigError, match="do not fit"):
            lag_matrix(np.ones((1, 4)), [4])

    def test_build_from_trial(self, rng):
        trial = make_trial(rng.normal(size=(2, 8)))
        spec = LagSpec(lags=(0, 1))
        assert np.array_equal(build_lag_matrix(trial, spec), lag_matrix(trial.data, [0, 1]))


class TestLagSpec:
    def test_rejects_unsorted(self):
        with pytest.raises(ConfigError, match="strictly increasing"):
            LagSpec(lags=(1, 0))

    def test_from_window(self):
        spec = LagSpec.from_window_ms(200.0, 100.0)
        assert spec.lags == tuple(range(21))  # 0..ceil(0.2 * 100)


def test_default_alpha_grid_shape():
    from specrecon.lagridge import DEFAULT_ALPHA_GRID

    assert len(DEFAULT_ALPHA_GRID) == 13
    assert DEFAULT_ALPHA_GRID[0] == pytest.approx(1e-2)
    assert DEFAULT_ALPHA_GRID[-1] == pytest.approx(1e4)
    ratios = np.diff(np.log10(DEFAULT_ALPHA_GRID))
    assert np.allclose(ratios, ratios[0])


class TestFitRidge:
    def test_huge_alpha_shrinks_to_zero(self, rng):
        design = rng.normal(size=(10, 120))
        targets = rng.normal(size=(3, 120))
        dec = fit_ridge(design, targets, 1e12, LagSpec(lags=(0,)))
        assert np.linalg.norm(dec.weights) < 1e-9
        recon = dec.weights.T @ design
        assert np.max(np.abs(recon)) < 1e-6

    def test_exact_interpolation_square_full_rank(self, rng):
        design = rng.normal(size=(12, 12)) + np.eye(12)  # square, generically full rank
        truth = rng.normal(size=(12, 4))
        targets = truth.T @ design
        dec = fit_ridge(design, targets, 0.0, LagSpec(lags=(0,)))
        assert np.max(np.abs(dec.weights - truth)) < 1e-8

    def test_matches_normal_equation_oracle(self, rng):
        design = rng.normal(size=(30, 200))
        targets = rng.normal(size=(5, 200))
        dec = fit_ridge(design, targets, 1.0, LagSpec(lags=(0,)))
        assert np.max(np.abs(dec.weights - ridge_oracle(design, targets, 1.0))) < 1e-10

    def test_dual_path_matches_oracle(self, rng):
        design = rng.normal(size=(90, 40))  # more rows than columns -> dual form
        targets = rng.normal(size=(4, 40))
        dec = fit_ridge(design, targets, 0.5, LagSpec(lags=(0,)))
        assert np.max(np.abs(dec.weights - ridge_oracle(design, targets, 0.5))) < 1e-9

    def test_singular_design_with_zero_alpha_raises(self):
        design = np.ones((3, 10))  # rank 1
        targets = np.ones((2, 10))
        with pytest.raises(SingularSystemError):
            fit_ridge(design, targets, 0.0, LagSpec(lags=(0,)))

    def test_column_count_mismatch(self, rng):
        with pytest.raises(DataError, match="columns"):
            fit_ridge(rng.normal(size=(3, 5)), rng.normal(size=(2, 6)), 1.0, LagSpec(lags=(0,)))

    def test_refit_is_bit_identical(self, rng):
        design = rng.normal(size=(8, 50))
        targets = rng.normal(size=(2, 50))
        a = fit_ridge(design, targets, 2.0, LagSpec(lags=(0,)))
        b = fit_ridge(design, targets, 2.0, LagSpec(lags=(0,)))
        assert np.array_equal(a.weights, b.weights)

    def test_concatenation_order_invariance(self, rng):
        blocks = [rng.normal(size=(6, 30)) for _ in range(3)]
        tblocks = [rng.normal(size=(2, 30)) for _ in range(3)]
        d1 = np.concatenate(blocks, axis=1)
        t1 = np.concatenate(tblocks, axis=1)
        d2 = np.concatenate(blocks[::-1], axis=1)
        t2 = np.concatenate(tblocks[::-1], axis=1)
        a = fit_ridge(d1, t1, 0.7, LagSpec(lags=(0,)))
        b = fit_ridge(d2, t2, 0.7, LagSpec(lags=(0,)))
        assert np.allclose(a.weights, b.weights, atol=1e-9)

    def test_training_residual_nondecreasing_in_alpha(self, rng):
        design = rng.normal(size=(12, 150))
        targets = rng.normal(size=(3, 150))
        residuals = []
        for alpha in (1e-3, 1e-1, 1e1, 1e3):
            dec = fit_ridge(design, targets, alpha, LagSpec(lags=(0,)))
            residuals.append(np.linalg.norm(targets - dec.weights.T @ design))
        assert all(b >= a - 1e-9 for a, b in zip(residuals, residuals[1:]))


class TestPredict:
    def lagspec(self):
        return LagSpec(lags=(0, 1, 2))

    def decoder(self, rng, channels=3, bands=2):
        spec = self.lagspec()
        w = rng.normal(size=(channels * spec.n_lags, bands))
        return LinearDecoder(weights=w, lagspec=spec, alpha=1.0)

    def test_zero_trial_zero_reconstruction(self, rng):
        dec = self.decoder(rng)
        trial = make_trial(np.zeros((3, 20)))
        assert np.all(predict(dec, trial).data == 0)

    def test_zero_weights_zero_reconstruction(self, rng):
        dec = LinearDecoder(weights=np.zeros((9, 2)), lagspec=self.lagspec(), alpha=1.0)
        trial = make_trial(rng.normal(size=(3, 20)))
        assert np.all(predict(dec, trial).data == 0)

    def test_linearity_additivity(self, rng):
        dec = self.decoder(rng)
        a, b = rng.normal(size=(3, 30)), rng.normal(size=(3, 30))
        combined = predict(dec, make_trial(2.0 * a + 3.0 * b)).data
        separate = 2.0 * predict(dec, make_trial(a)).data + 3.0 * predict(dec, make_trial(b)).data
        assert np.max(np.abs(combined - separate)) < 1e-10

    def test_component_additivity_three_way(self, rng):
        dec = self.decoder(rng)
        parts = [rng.normal(size=(3, 25)) for _ in range(3)]
        total = predict(dec, make_trial(parts[0] + parts[1] + parts[2])).data
        summed = sum(predict(dec, make_trial(p)).data for p in parts)
        assert np.max(np.abs(total - summed)) < 1e-10

    def test_channel_mismatch_rejected(self, rng):
        dec = self.decoder(rng, channels=3)
        with pytest.raises(DataError, match="channels"):
            predict(dec, make_trial(rng.normal(size=(4, 20))))

    def test_transfer_difference_identity_random_decoder(self, rng):
        # predict(V) - predict(M) equals the decoder's readout of the extra
        # component, for arbitrary weights, with or without standardization.
        spec = self.lagspec()
        planning = rng.normal(size=(3, 40))
        articulatory = rng.normal(size=(3, 40))
        sensory = rng.normal(size=(3, 40))
        mimed = planning + articulatory
        vocalized = mimed + sensory
        scaler = ChannelScaler(mean=rng.normal(size=3), std=np.abs(rng.normal(size=3)) + 0.5)
        for sc in (None, scaler):
            dec = LinearDecoder(
                weights=rng.normal(size=(9, 2)), lagspec=spec, alpha=0.3, scaler=sc
            )
            delta = (
                predict(dec, make_trial(vocalized)).data
                - predict(dec, make_trial(mimed)).data
            )
            direct = effective_weights(dec).T @ lag_matrix(sensory, spec.lags)
            assert np.max(np.abs(delta - direct)) < 1e-10


class TestGridSearch:
    def make_pairs(self, rng, truth, lagspec, n_trials=4, t=60, noise=0.0):
        pairs = []
        c = truth.shape[0] // lagspec.n_lags
        for i in range(n_trials):
            data = rng.normal(size=(c, t))
            target = truth.T @ lag_matrix(data, lagspec.lags)
            if noise:
                target = target + noise * rng.normal(size=target.shape)
            pairs.append((make_trial(data, sentence_id=i), make_spec(target)))
        return pairs

    def test_singleton_grid(self, rng):
        lagspec = LagSpec(lags=(0, 1))
        truth = rng.normal(size=(4, 2))
        pairs = self.make_pairs(rng, truth, lagspec)
        result = grid_search_alpha(pairs[:3], pairs[3:], lagspec, [0.37], standardize=False)
        assert result.alpha_star == 0.37
        assert len(result.scores) == 1

    def test_noiseless_data_prefers_tiny_alpha(self, rng):
        lagspec = LagSpec(lags=(0, 1))
        truth = rng.normal(size=(6, 2))
        pairs = self.make_pairs(rng, truth, lagspec, n_trials=6, t=80)
        result = grid_search_alpha(pairs[:4], pairs[4:], lagspec, [1e-8, 1e2], standardize=False)
        assert result.alpha_star == 1e-8
        scores = dict(result.scores)
        assert scores[1e-8] > 0.999
        assert scores[1e-8] > scores[1e2]

    def test_tie_breaks_toward_larger_alpha(self, rng):
        # noiseless, easily fit data: two tiny ridges score identically to
        # within the tie tolerance, so the stronger one must win
        lagspec = LagSpec(lags=(0,))
        truth = rng.normal(size=(3, 2))
        pairs = self.make_pairs(rng, truth, lagspec, n_trials=5, t=100)
        result = grid_search_alpha(pairs[:3], pairs[3:], lagspec, [1e-12, 1e-10], standardize=False)
        assert result.alpha_star == 1e-10
        s = dict(result.scores)
        assert abs(s[1e-12] - s[1e-10]) < 1e-9

    def test_empty_validation_rejected(self, rng):
        lagspec = LagSpec(lags=(0,))
        truth = rng.normal(size=(3, 2))
        pairs = self.make_pairs(rng, truth, lagspec)
        with pytest.raises(DataError, match="validation"):
            grid_search_alpha(pairs, [], lagspec, [1.0])

    def test_all_undefined_correlations_error(self, rng):
        lagspec = LagSpec(lags=(0,))
        pairs = [
            (make_trial(rng.normal(size=(2, 30))), make_spec(np.zeros((2, 30))))
            for _ in range(4)
        ]
        with pytest.raises(NumericError, match="undefined"):
            grid_search_alpha(pairs[:2], pairs[2:], lagspec, [1.0, 2.0])

    def test_bad_grid_rejected(self, rng):
        lagspec = LagSpec(lags=(0,))
        truth = rng.normal(size=(2, 1))
        pairs = self.make_pairs(rng, truth, lagspec)
        with pytest.raises(ConfigError):
            grid_search_alpha(pairs[:2], pairs[2:], lagspec, [])
        with pytest.raises(ConfigError):
            grid_search_alpha(pairs[:2], pairs[2:], lagspec, [-1.0])


class TestSerialization:
    def test_round_trip(self, tmp_path, rng):
        lagspec = LagSpec(lags=(0, 1, 3))
        scaler = ChannelScaler(mean=rng.normal(size=4), std=np.abs(rng.normal(size=4)) + 0.1)
        dec = LinearDecoder(
            weights=rng.normal(size=(12, 5)),
            lagspec=lagspec,
            alpha=0.125,
            trained_on=ConditionLabel.MIMED,
            scaler=scaler,
            freq_centers_hz=np.array([1.0, 2.0, 4.0, 8.0, 16.0]),
        )
        path = tmp_path / "decoder.bin"
        save_decoder(dec, path)
        back = load_decoder(path)
        assert np.array_equal(back.weights, dec.weights)
        assert back.lagspec == dec.lagspec
        assert back.alpha == dec.alpha
        assert back.trained_on is ConditionLabel.MIMED
        assert np.array_equal(back.scaler.mean, scaler.mean)
        assert np.array_equal(back.scaler.std, scaler.std)
        assert np.array_equal(back.freq_centers_hz, dec.freq_centers_hz)
        sidecar = path.with_suffix(path.suffix + ".txt")
        assert sidecar.exists()
        assert "12 x 5" in sidecar.read_text()

    def test_predictions_survive_round_trip(self, tmp_path, rng):
        lagspec = LagSpec(lags=(0, 1))
        dec = LinearDecoder(weights=rng.normal(size=(6, 2)), lagspec=lagspec, alpha=1.0)
        save_decoder(dec, tmp_path / "d.bin")
        back = load_decoder(tmp_path / "d.bin")
        trial = make_trial(rng.normal(size=(3, 20)))
        assert np.array_equal(predict(dec, trial).data, predict(back, trial).data)

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b'{"kind": "something_else"}\n')
        with pytest.raises(DataError, match="not a linear decoder"):
            load_decoder(path)


def test_stack_pairs_concatenates_in_order(rng):
    lagspec = LagSpec(lags=(0,))
    pairs = [
        (make_trial(rng.normal(size=(2, 5)), sentence_id=i), make_spec(rng.normal(size=(2, 5))))
        for i in range(3)
    ]
    design, targets = stack_pairs(pairs, lagspec)
    assert design.shape == (2, 15)
    assert np.array_equal(design[:, 5:10], pairs[1][0].data)
    assert np.array_equal(targets[:, 10:], pairs[2][1].data)


def test_scaler_standardizes_with_training_stats(rng):
    trials = [make_trial(rng.normal(loc=3.0, scale=2.0, size=(3, 50))) for _ in range(4)]
    scaler = ChannelScaler.fit(trials)
    stacked = np.concatenate([scaler.transform(t.data) for t in trials], axis=1)
    assert np.allclose(stacked.mean(axis=1), 0.0, atol=1e-12)
    assert np.allclose(stacked.std(axis=1), 1.0, atol=1e-12)


def test_scaler_constant_channel_passes_through():
    trials = [make_trial(np.vstack([np.ones(10), np.arange(10.0)]))]
    scaler = ChannelScaler.fit(trials)
    out = scaler.transform(trials[0].data)
    assert np.all(out[0] == 0.0)
    assert np.isfinite(out).all()
