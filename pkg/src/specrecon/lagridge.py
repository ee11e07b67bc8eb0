"""Time-lagged ridge reconstruction decoders.

A decoder maps a multichannel trial to a spectrogram through a lagged design
matrix: row (c, l) of the design holds channel c delayed by l samples, and
the reconstruction is ``weights.T @ design``. Fitting minimizes the squared
reconstruction error plus ``alpha`` times the squared weight norm, solved in
closed form through the normal equations (or their Gram dual when the design
has more rows than columns).

Rows are ordered channel-major: row index = c * n_lags + lag_index. Samples
shifted past the edge of a trial are zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import ConditionLabel, NeuralTrial, StimulusSpectrogram, default_freq_centers
from .errors import ConfigError, DataError, NumericError, SingularSystemError
from .matrixio import _HEADER  # shared binary matrix header

DEFAULT_ALPHA_GRID = tuple(np.logspace(-2, 4, 13))
DEFAULT_LAG_WINDOW_MS = 200.0

# Validation scores within this distance of the best are treated as ties,
# resolved toward the largest (most regularized) alpha.
ALPHA_TIE_TOL = 1e-9


@dataclass(frozen=True)
class LagSpec:
    """Ordered set of integer lags, in samples. Positive lags look back in time."""

    lags: tuple[int, ...]

    def __post_init__(self):
        lags = tuple(int(l) for l in self.lags)
        if not lags:
            raise ConfigError("lag set must be nonempty")
        if any(b <= a for a, b in zip(lags, lags[1:])):
            raise ConfigError(f"lags must be strictly increasing, got {lags}")
        object.__setattr__(self, "lags", lags)

    @property
    def n_lags(self) -> int:
        return len(self.lags)

    @classmethod
    def from_window_ms(cls, window_ms: float, sample_rate_hz: float) -> "LagSpec":
        """Lags 0..ceil(window_ms worth of samples), inclusive."""
        if window_ms < 0:
            raise ConfigError(f"lag window must be >= 0 ms, got {window_ms}")
        max_lag = math.ceil(window_ms / 1000.0 * sample_rate_hz)
        return cls(lags=tuple(range(max_lag + 1)))


def lag_matrix(data: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    """Stack lagged copies of a (channels, time) array into (C * n_lags, time).

    Row c * n_lags + j at column t equals data[c, t - lags[j]] where that
    index is in range, and 0 otherwise.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DataError(f"expected (channels, time) data, got shape {data.shape}")
    lags = [int(l) for l in lags]
    if not lags:
        raise ConfigError("lag set must be nonempty")
    n_channels, n_samples = data.shape
    if any(abs(l) >= n_samples for l in lags):
        raise ConfigError(
            f"lags {lags} do not fit a trial with T={n_samples} samples"
        )
    n_lags = len(lags)
    out = np.zeros((n_channels * n_lags, n_samples))
    for j, lag in enumerate(lags):
        if lag >= 0:
            src = data[:, : n_samples - lag] if lag else data
            out[j :: n_lags, lag:] = src
        else:
            out[j :: n_lags, : n_samples + lag] = data[:, -lag:]
    return out


def build_lag_matrix(trial: NeuralTrial, lagspec: LagSpec) -> np.ndarray:
    """Lagged design matrix for one trial (see :func:`lag_matrix`)."""
    return lag_matrix(trial.data, lagspec.lags)


@dataclass(frozen=True)
class ChannelScaler:
    """Per-channel standardization statistics (training-fold only)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ConfigError("scaler mean/std must be matching 1-D arrays")
        if np.any(std <= 0) or not np.isfinite(std).all() or not np.isfinite(mean).all():
            raise ConfigError("scaler std must be finite and positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, trials: Sequence[NeuralTrial]) -> "ChannelScaler":
        if not trials:
            raise DataError("cannot fit a scaler on zero trials")
        stacked = np.concatenate([t.data for t in trials], axis=1)
        mean = stacked.mean(axis=1)
        std = stacked.std(axis=1)
        std = np.where(std > 0, std, 1.0)  # constant channels pass through centered
        return cls(mean=mean, std=std)

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean[:, None]) / self.std[:, None]


@dataclass(frozen=True)
class LinearDecoder:
    """Closed-form lagged ridge decoder.

    ``weights`` has shape (C * n_lags, F); reconstruction is
    ``weights.T @ lag_matrix(X)`` after optional per-channel standardization.
    """

    weights: np.ndarray
    lagspec: LagSpec
    alpha: float
    trained_on: ConditionLabel | None = None
    scaler: ChannelScaler | None = None
    freq_centers_hz: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ConfigError(f"weights must be 2-D, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise NumericError("decoder weights contain non-finite values")
        if w.shape[0] % self.lagspec.n_lags != 0:
            raise ConfigError(
                f"weight rows {w.shape[0]} not divisible by n_lags {self.lagspec.n_lags}"
            )
        object.__setattr__(self, "weights", w)

    @property
    def n_channels(self) -> int:
        return self.weights.shape[0] // self.lagspec.n_lags

    @property
    def n_bands(self) -> int:
        return self.weights.shape[1]


def fit_ridge(
    design: np.ndarray,
    targets: np.ndarray,
    alpha: float,
    lagspec: LagSpec,
    trained_on: ConditionLabel | None = None,
    scaler: ChannelScaler | None = None,
    freq_centers_hz: np.ndarray | None = None,
) -> LinearDecoder:
    """Closed-form ridge fit of decoder weights.

    ``design`` is a (D, T) concatenation of lagged trials and ``targets`` the
    matching (F, T) concatenation of spectrograms. Solves
    ``(design design' + alpha I) W = design targets'`` via Cholesky, or the
    equivalent (T, T) dual system when D > T. With ``alpha = 0`` a
    rank-deficient system raises :class:`SingularSystemError` rather than
    falling back to a pseudo-inverse.
    """
    design = np.asarray(design, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if design.ndim != 2 or targets.ndim != 2:
        raise DataError("design and targets must be 2-D")
    if design.shape[1] != targets.shape[1]:
        raise DataError(
            f"design has {design.shape[1]} columns but targets have {targets.shape[1]}"
        )
    if not (math.isfinite(alpha) and alpha >= 0):
        raise ConfigError(f"alpha must be finite and >= 0, got {alpha}")

    n_rows, n_cols = design.shape
    if n_rows <= n_cols:
        gram = design @ design.T
        gram[np.diag_indices_from(gram)] += alpha
        rhs = design @ targets.T
        weights = _chol_solve(gram, rhs, alpha)
    else:
        # Dual form: W = X (X'X + alpha I)^-1 S'
        gram = design.T @ design
        gram[np.diag_indices_from(gram)] += alpha
        coef = _chol_solve(gram, targets.T, alpha)
        weights = design @ coef
    return LinearDecoder(
        weights=weights,
        lagspec=lagspec,
        alpha=float(alpha),
        trained_on=trained_on,
        scaler=scaler,
        freq_centers_hz=None if freq_centers_hz is None else np.asarray(freq_centers_hz, dtype=np.float64),
    )


def _chol_solve(system: np.ndarray, rhs: np.ndarray, alpha: float) -> np.ndarray:
    try:
        factor = cho_factor(system, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularSystemError(
            "normal equations are singular; the design is rank-deficient and "
            f"alpha={alpha} provides no regularization"
        ) from exc
    return cho_solve(factor, rhs, check_finite=False)


def predict(decoder: LinearDecoder, trial: NeuralTrial) -> StimulusSpectrogram:
    """Reconstruct a trial's spectrogram. Linear in the trial data."""
    if trial.n_channels != decoder.n_channels:
        raise DataError(
            f"trial has {trial.n_channels} channels, decoder expects {decoder.n_channels}"
        )
    data = trial.data if decoder.scaler is None else decoder.scaler.transform(trial.data)
    recon = decoder.weights.T @ lag_matrix(data, decoder.lagspec.lags)
    centers = (
        decoder.freq_centers_hz
        if decoder.freq_centers_hz is not None
        else default_freq_centers(decoder.n_bands)
    )
    return StimulusSpectrogram(
        data=recon, freq_centers_hz=centers, sample_rate_hz=trial.sample_rate_hz
    )


def effective_weights(decoder: LinearDecoder) -> np.ndarray:
    """Weights expressed against raw (unstandardized) inputs.

    Row (c, l) is divided by channel c's training std, so for any two trials
    A, B: predict(A) - predict(B) == effective_weights' @ lag(A - B). The
    centering term cancels in differences.
    """
    if decoder.scaler is None:
        return decoder.weights
    scale = np.repeat(decoder.scaler.std, decoder.lagspec.n_lags)
    return decoder.weights / scale[:, None]


def stack_pairs(
    pairs: Sequence[tuple[NeuralTrial, StimulusSpectrogram]],
    lagspec: LagSpec,
    scaler: ChannelScaler | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate lagged designs and targets over trials (in given order)."""
    if not pairs:
        raise DataError("no pairs to stack")
    designs = []
    targets = []
    for trial, spec in pairs:
        data = trial.data if scaler is None else scaler.transform(trial.data)
        designs.append(lag_matrix(data, lagspec.lags))
        targets.append(spec.data)
    return np.concatenate(designs, axis=1), np.concatenate(targets, axis=1)


@dataclass(frozen=True)
class GridSearchResult:
    alpha_star: float
    scores: tuple[tuple[float, float], ...]  # (alpha, mean validation envelope corr)


def grid_search_alpha(
    train_pairs: Sequence[tuple[NeuralTrial, StimulusSpectrogram]],
    val_pairs: Sequence[tuple[NeuralTrial, StimulusSpectrogram]],
    lagspec: LagSpec,
    grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    standardize: bool = True,
    trained_on: ConditionLabel | None = None,
) -> GridSearchResult:
    """Pick the ridge strength maximizing mean validation envelope correlation.

    Ties within ``ALPHA_TIE_TOL`` go to the largest alpha. Inputs are
    standardized per channel with training-fold statistics when
    ``standardize`` is set.
    """
    from .metrics import envelope, pearson  # local import to avoid a cycle

    if not grid:
        raise ConfigError("alpha grid must be nonempty")
    if any(not (a >= 0 and math.isfinite(a)) for a in grid):
        raise ConfigError(f"alpha grid must be finite and >= 0, got {list(grid)}")
    if not val_pairs:
        raise DataError("validation slice is empty")
    scaler = ChannelScaler.fit([t for t, _ in train_pairs]) if standardize else None
    design, targets = stack_pairs(train_pairs, lagspec, scaler)

    scores = []
    for alpha in sorted(grid):
        decoder = fit_ridge(design, targets, alpha, lagspec, trained_on, scaler)
        per_trial = []
        for trial, spec in val_pairs:
            recon = predict(decoder, trial)
            try:
                per_trial.append(pearson(envelope(recon), envelope(spec)))
            except NumericError:
                continue
        if not per_trial:
            raise NumericError(
                "all validation envelope correlations are undefined "
                "(zero-variance targets or reconstructions)"
            )
        scores.append((float(alpha), float(np.mean(per_trial))))

    best_score = max(s for _, s in scores)
    alpha_star = max(a for a, s in scores if s >= best_score - ALPHA_TIE_TOL)
    return GridSearchResult(alpha_star=alpha_star, scores=tuple(scores))


# ---------------------------------------------------------------------------
# Serialization: a single binary file (JSON header line, then the weight
# matrix in the shared .f64 layout) plus a human-readable sidecar.
# ---------------------------------------------------------------------------


def save_decoder(decoder: LinearDecoder, path: str | Path) -> Path:
    path = Path(path)
    header = {
        "kind": "linear_decoder",
        "lags": list(decoder.lagspec.lags),
        "alpha": decoder.alpha,
        "trained_on": None if decoder.trained_on is None else decoder.trained_on.value,
        "scaler": None
        if decoder.scaler is None
        else {
            "mean": [float(v) for v in decoder.scaler.mean],
            "std": [float(v) for v in decoder.scaler.std],
        },
        "freq_centers_hz": None
        if decoder.freq_centers_hz is None
        else [float(v) for v in decoder.freq_centers_hz],
    }
    w = decoder.weights
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(_HEADER.pack(w.shape[0], w.shape[1]))
        fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
    sidecar = path.with_suffix(path.suffix + ".txt")
    sidecar.write_text(
        "linear decoder\n"
        f"weights shape: {w.shape[0]} x {w.shape[1]}\n"
        f"channels: {decoder.n_channels}\n"
        f"lags: {list(decoder.lagspec.lags)}\n"
        f"alpha: {decoder.alpha!r}\n"
        f"trained on: {decoder.trained_on.value if decoder.trained_on else 'unspecified'}\n"
        f"standardized inputs: {decoder.scaler is not None}\n",
        encoding="utf-8",
    )
    return path


def load_decoder(path: str | Path) -> LinearDecoder:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: decoder file does not exist")
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataError(f"{path}: missing decoder header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: bad decoder header: {exc}") from exc
    if header.get("kind") != "linear_decoder":
        raise DataError(f"{path}: not a linear decoder file")
    body = raw[newline + 1 :]
    if len(body) < _HEADER.size:
        raise DataError(f"{path}: truncated weight matrix")
    rows, cols = _HEADER.unpack_from(body)
    expected = _HEADER.size + rows * cols * 8
    if len(body) != expected:
        raise DataError(f"{path}: weight matrix size mismatch")
    weights = np.frombuffer(body, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).copy()
    scaler = None
    if header.get("scaler") is not None:
        scaler = ChannelScaler(
            mean=np.array(header["scaler"]["mean"], dtype=np.float64),
            std=np.array(header["scaler"]["std"], dtype=np.float64),
        )
    return LinearDecoder(
        weights=weights,
        lagspec=LagSpec(lags=tuple(header["lags"])),
        alpha=float(header["alpha"]),
        trained_on=None
        if header.get("trained_on") is None
        else ConditionLabel.from_string(header["trained_on"]),
        scaler=scaler,
        freq_centers_hz=None
        if header.get("freq_centers_hz") is None
        else np.array(header["freq_centers_hz"], dtype=np.float64),
    )
