"""Null-model construction and nonparametric statistics.

Chance baselines come from decoders fit on deliberately broken neural-target
pairings: either derangements of the target assignment within a condition
(no trial keeps its own target, nor a target from its own sentence's other
repetition, which would be a near-duplicate) or per-trial circular shifts of
the target in time. Observed-vs-null comparisons use permutation tests of the mean
difference with the add-one rule, reported together with Cohen's d. A
dependent-correlation (Fisher z) test compares correlation strengths that
share data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Sequence

import numpy as np

from .data import Dataset, NeuralTrial, StimulusSpectrogram
from .errors import ConfigError, DataError, NumericError, ZeroVarianceError


class NullKind(Enum):
    SHUFFLED_PAIRING = "shuffled_pairing"
    CIRCULAR_SHIFT = "circular_shift"

    @classmethod
    def from_string(cls, text: str) -> "NullKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown null kind {text!r}, expected one of: {valid}")


@dataclass(frozen=True)
class NullSpec:
    """How many null realizations to draw and from which seeded stream."""

    kind: NullKind = NullKind.SHUFFLED_PAIRING
    n_realizations: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ConfigError(f"n_realizations must be >= 1, got {self.n_realizations}")
        if self.seed < 0:
            raise ConfigError(f"null seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class StatResult:
    """Outcome of one statistical comparison.

    Permutation p-values use the add-one rule
    ``(1 + #{null >= observed}) / (1 + n_permutations)``;
    ``n_permutations = 0`` marks an analytic (non-resampled) p-value.
    """

    statistic: float
    p_value: float
    effect_size_d: float | None
    n_permutations: int


def _null_rng(seed: int, realization_index: int) -> np.random.Generator:
    # One independent stream per realization, derived from (seed, index),
    # so realizations can run in any order or in parallel.
    return np.random.default_rng(np.random.SeedSequence([seed, realization_index]))


def _sample_derangement(groups: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Permutation with no trial mapped to its own sentence's target.

    ``groups`` holds each trial's sentence id; forbidding same-sentence
    assignments keeps a repetition from receiving its near-duplicate target.
    """
    n = len(groups)
    if n < 2:
        raise DataError("a condition with fewer than 2 trials cannot be deranged")
    groups = np.asarray(groups)
    if np.all(groups == groups[0]):
        raise DataError(
            "cannot build mismatched pairings: all trials share one sentence"
        )
    for _ in range(10_000):
        perm = rng.permutation(n)
        if not np.any(groups[perm] == groups):
            return perm
    raise DataError(
        "could not find a sentence-mismatched permutation; "
        "too few distinct sentences in this condition"
    )


def _fit_target_to_length(spec: StimulusSpectrogram, n_samples: int) -> StimulusSpectrogram:
    # A reassigned target may be longer or shorter than its new trial;
    # truncate or tile circularly so the pair stays aligned.
    if spec.n_samples == n_samples:
        return spec
    idx = np.arange(n_samples) % spec.n_samples
    return StimulusSpectrogram(
        data=spec.data[:, idx],
        freq_centers_hz=spec.freq_centers_hz,
        sample_rate_hz=spec.sample_rate_hz,
    )


def make_null_dataset(dataset: Dataset, spec: NullSpec, realization_index: int) -> Dataset:
    """One null realization: same trials, broken neural-target pairing.

    Deterministic per (spec.seed, realization_index); the input dataset is
    untouched. Shuffled pairings are sentence-mismatched derangements within
    each condition; circular shifts move each target by an offset drawn
    uniformly from [ceil(T/4), floor(3T/4)].
    """
    if not 0 <= realization_index:
        raise ConfigError(f"realization_index must be >= 0, got {realization_index}")
    rng = _null_rng(spec.seed, realization_index)
    new_pairs: list[tuple[NeuralTrial, StimulusSpectrogram]] = []
    if spec.kind is NullKind.SHUFFLED_PAIRING:
        reassigned: dict[tuple, StimulusSpectrogram] = {}
        for condition in dataset.conditions():
            pairs = dataset.select(condition=condition)
            perm = _sample_derangement([t.sentence_id for t, _ in pairs], rng)
            for i, (trial, _) in enumerate(pairs):
                donor = pairs[perm[i]][1]
                reassigned[trial.key] = _fit_target_to_length(donor, trial.n_samples)
        # keep the dataset's own pair order
        new_pairs = [(trial, reassigned[trial.key]) for trial, _ in dataset.pairs]
    elif spec.kind is NullKind.CIRCULAR_SHIFT:
        for trial, target in dataset.pairs:
            t = trial.n_samples
            lo, hi = math.ceil(t / 4), math.floor(3 * t / 4)
            offset = int(rng.integers(lo, hi + 1))
            shifted = StimulusSpectrogram(
                data=np.roll(target.data, offset, axis=1),
                freq_centers_hz=target.freq_centers_hz,
                sample_rate_hz=target.sample_rate_hz,
            )
            new_pairs.append((trial, shifted))
    else:  # pragma: no cover - enum is closed
        raise ConfigError(f"unhandled null kind {spec.kind}")
    return Dataset(pairs=tuple(new_pairs))


# ---------------------------------------------------------------------------
# Permutation tests and effect sizes
# ---------------------------------------------------------------------------


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Standardized mean difference (pooled SD, ddof = 1 per sample)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise DataError("cohens_d needs at least 2 values per sample")
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    pooled = ((a.size - 1) * var_a + (b.size - 1) * var_b) / (a.size + b.size - 2)
    if pooled <= 0:
        raise ZeroVarianceError("pooled variance is zero")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


def permutation_pvalue(
    observed: Sequence[float],
    null: Sequence[float],
    alternative: str = "greater",
    n_resamples: int = 10_000,
    seed: int | Sequence[int] = 0,
) -> StatResult:
    """Permutation test for the mean difference observed - null.

    Labels are permuted across the pooled sample. When the number of distinct
    label assignments is at most ``n_resamples`` the test enumerates all of
    them; otherwise it draws ``n_resamples`` random permutations from the
    seeded stream. Cohen's d is attached when defined.
    """
    if alternative not in ("greater", "two_sided"):
        raise ConfigError(f"alternative must be 'greater' or 'two_sided', got {alternative!r}")
    if n_resamples < 1:
        raise ConfigError(f"n_resamples must be >= 1, got {n_resamples}")
    obs = np.asarray(observed, dtype=np.float64).ravel()
    nul = np.asarray(null, dtype=np.float64).ravel()
    if obs.size == 0 or nul.size == 0:
        raise DataError("both samples must be nonempty")
    stat_obs = obs.mean() - nul.mean()
    pooled = np.concatenate([obs, nul])
    n1, n = obs.size, obs.size + nul.size
    total = pooled.sum()

    def stat_for(sum_first: float) -> float:
        return sum_first / n1 - (total - sum_first) / (n - n1)

    exact = _n_combinations(n, n1) <= n_resamples
    if exact:
        stats = np.array(
            [stat_for(pooled[list(idx)].sum()) for idx in combinations(range(n), n1)]
        )
    else:
        rng = np.random.default_rng(seed)
        stats = np.empty(n_resamples)
        for i in range(n_resamples):
            sel = rng.permutation(n)[:n1]
            stats[i] = stat_for(pooled[sel].sum())

    if alternative == "greater":
        count = int(np.sum(stats >= stat_obs))
    else:
        count = int(np.sum(np.abs(stats) >= abs(stat_obs)))
    n_perm = stats.size
    p = (1 + count) / (1 + n_perm)

    try:
        d = cohens_d(obs, nul)
    except (DataError, ZeroVarianceError):
        d = None
    return StatResult(statistic=float(stat_obs), p_value=float(p), effect_size_d=d, n_permutations=n_perm)


def _n_combinations(n: int, k: int) -> int:
    return math.comb(n, k)


# ---------------------------------------------------------------------------
# Dependent-correlation tests (Fisher z with the Dunn-Clark covariance and
# the mean-correlation plug-in) and ordinary least squares
# ---------------------------------------------------------------------------


def _check_r(name: str, value: float) -> float:
    if not -1.0 < value < 1.0:
        raise ConfigError(f"{name} must lie strictly inside (-1, 1), got {value}")
    return float(value)


def _two_sided_normal_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def steiger_test(r_xy1: float, r_xy2: float, r_y1y2: float, n: int) -> StatResult:
    """Compare two dependent correlations that share variable X.

    Tests H0: rho(X, Y1) = rho(X, Y2) given the correlation between Y1 and
    Y2, using Fisher z transforms and the dependent-correlation covariance
    with the mean of the two compared correlations plugged in. Two-sided
    normal p. The statistic's sign follows r_xy1 - r_xy2.
    """
    r1 = _check_r("r_xy1", r_xy1)
    r2 = _check_r("r_xy2", r_xy2)
    if n < 4:
        raise ConfigError(f"n must be >= 4, got {n}")
    if r1 == r2:
        # exactly symmetric case: zero by construction, independent of r_y1y2
        return StatResult(statistic=0.0, p_value=1.0, effect_size_d=None, n_permutations=0)
    r12 = _check_r("r_y1y2", r_y1y2)
    z1 = math.atanh(r1)
    z2 = math.atanh(r2)
    rbar = (r1 + r2) / 2.0
    cov = r12 * (1.0 - 2.0 * rbar**2) - 0.5 * rbar**2 * (1.0 - 2.0 * rbar**2 - r12**2)
    c = cov / (1.0 - rbar**2) ** 2
    denom = 2.0 * (1.0 - c)
    if denom <= 0:
        raise NumericError("degenerate correlation structure in dependent-correlation test")
    z = (z1 - z2) * math.sqrt((n - 3) / denom)
    return StatResult(
        statistic=float(z),
        p_value=float(_two_sided_normal_p(z)),
        effect_size_d=None,
        n_permutations=0,
    )


def steiger_test_nonoverlapping(
    r_jk: float,
    r_hm: float,
    r_jh: float,
    r_jm: float,
    r_kh: float,
    r_km: float,
    n: int,
) -> StatResult:
    """Compare two dependent correlations with no shared variable.

    Tests H0: rho(j, k) = rho(h, m) on one sample of size n, given the four
    cross correlations, with the same Fisher z machinery and mean-correlation
    plug-in as :func:`steiger_test`.
    """
    r1 = _check_r("r_jk", r_jk)
    r2 = _check_r("r_hm", r_hm)
    if n < 4:
        raise ConfigError(f"n must be >= 4, got {n}")
    if r1 == r2:
        return StatResult(statistic=0.0, p_value=1.0, effect_size_d=None, n_permutations=0)
    for name, val in (("r_jh", r_jh), ("r_jm", r_jm), ("r_kh", r_kh), ("r_km", r_km)):
        _check_r(name, val)
    rbar = (r1 + r2) / 2.0
    cov = 0.5 * (
        (r_jh - rbar * r_kh) * (r_km - r_kh * rbar)
        + (r_jm - r_jh * rbar) * (r_kh - rbar * r_jh)
        + (r_jh - r_jm * rbar) * (r_km - rbar * r_jm)
        + (r_jm - rbar * r_km) * (r_kh - r_km * rbar)
    )
    c = cov / (1.0 - rbar**2) ** 2
    denom = 2.0 * (1.0 - c)
    if denom <= 0:
        raise NumericError("degenerate correlation structure in dependent-correlation test")
    z = (math.atanh(r1) - math.atanh(r2)) * math.sqrt((n - 3) / denom)
    return StatResult(
        statistic=float(z),
        p_value=float(_two_sided_normal_p(z)),
        effect_size_d=None,
        n_permutations=0,
    )


@dataclass(frozen=True)
class LinearFit:
    """Ordinary least squares line. ``r`` is NaN when y has zero variance."""

    slope: float
    intercept: float
    r: float

    @property
    def r_defined(self) -> bool:
        return not math.isnan(self.r)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    """Least-squares line y = slope * x + intercept plus the correlation."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise DataError("linear_fit needs two equal-length samples of size >= 2")
    if np.ptp(x) == 0:
        raise ZeroVarianceError("x has zero variance")
    if np.ptp(y) == 0:
        return LinearFit(slope=0.0, intercept=float(y[0]), r=math.nan)
    xc = x - x.mean()
    yc = y - y.mean()
    slope = float(xc @ yc / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    r = float(xc @ yc / math.sqrt((xc @ xc) * (yc @ yc)))
    return LinearFit(slope=slope, intercept=intercept, r=min(1.0, max(-1.0, r)))
