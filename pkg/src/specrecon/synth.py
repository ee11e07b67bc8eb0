"""Synthetic hierarchical benchmark for cross-condition transfer.

The generator builds, per sentence and repetition, three latent neural
components: planning activity (present in every condition), articulatory
activity (added for mimed and vocalized trials), and sensory activity (added
for vocalized trials only). Component time courses are smooth, mutually
decorrelated in time, and mapped to channels through loading bases whose
principal angles are configurable: 90 degrees gives cleanly separated channel
subspaces, smaller angles tilt the articulatory/sensory loadings into the
planning subspace.

Targets are a known linear function of the planning and articulatory
components (optionally also the sensory one), so the whole reconstruction
pipeline has an exact ground truth, and decoder transfer across conditions
obeys closed-form identities:

    predict(vocalized) - predict(mimed)   == W' lag(sensory part)
    predict(mimed)     - predict(imagined) == W' lag(articulatory part)

which hold for any decoder weights, trained or random.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import ConditionLabel, Dataset, NeuralTrial, StimulusSpectrogram
from .errors import ConfigError, DataError
from .lagridge import LagSpec, LinearDecoder, effective_weights, lag_matrix


@dataclass(frozen=True)
class SourceConfig:
    """Knobs for the hierarchical generator.

    ``overlap_angle_deg`` sets the principal angle between the articulatory
    loading basis and the planning one (and between the sensory basis and the
    planning+articulatory span). ``repetition_jitter`` mixes fresh smooth
    noise into each repetition so the two productions of a sentence are
    similar but not identical. Stimulus weights choose how much each
    component drives the target spectrogram; the sensory weight defaults to
    zero because feedback is downstream of the produced stimulus, and exists
    only as a counterfactual knob.
    """

    latent_dim_planning: int = 3
    latent_dim_articulatory: int = 3
    latent_dim_sensory: int = 3
    amp_planning: float = 1.0
    amp_articulatory: float = 1.0
    amp_sensory: float = 1.0
    overlap_angle_deg: float = 90.0
    smooth_len: int = 9
    repetition_jitter: float = 0.2
    stim_weight_planning: float = 1.0
    stim_weight_articulatory: float = 1.0
    stim_weight_sensory: float = 0.0
    target_noise: float = 0.0
    channel_noise: float = 0.0
    n_bands: int = 4
    sample_rate_hz: float = 100.0
    n_repetitions: int = 2

    def __post_init__(self):
        dims = (
            self.latent_dim_planning,
            self.latent_dim_articulatory,
            self.latent_dim_sensory,
        )
        if any(d < 1 for d in dims):
            raise ConfigError(f"latent dims must be >= 1, got {dims}")
        for name in ("amp_planning", "amp_articulatory", "amp_sensory"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 < self.overlap_angle_deg <= 90.0:
            raise ConfigError(
                f"overlap_angle_deg must be in (0, 90], got {self.overlap_angle_deg}"
            )
        if self.smooth_len < 1:
            raise ConfigError("smooth_len must be >= 1")
        if not 0.0 <= self.repetition_jitter <= 1.0:
            raise ConfigError("repetition_jitter must lie in [0, 1]")
        if self.n_bands < 1:
            raise ConfigError("n_bands must be >= 1")
        if self.n_repetitions not in (1, 2):
            raise ConfigError("n_repetitions must be 1 or 2")

    @property
    def total_latent_dim(self) -> int:
        return (
            self.latent_dim_planning
            + self.latent_dim_articulatory
            + self.latent_dim_sensory
        )


@dataclass(frozen=True)
class HierarchicalSources:
    """Ground-truth components behind a generated dataset.

    Component arrays are indexed (sentence_index, repetition, channel, time);
    conditions are exact sums of the stored components, measurement noise is
    only ever added on top of them in the emitted trials.
    """

    planning: np.ndarray
    articulatory: np.ndarray
    sensory: np.ndarray
    basis_planning: np.ndarray
    basis_articulatory: np.ndarray
    basis_sensory: np.ndarray
    stim_map_planning: np.ndarray
    stim_map_articulatory: np.ndarray
    stim_map_sensory: np.ndarray
    sentence_ids: tuple[int, ...]
    config: SourceConfig

    def sentence_index(self, sentence_id: int) -> int:
        try:
            return self.sentence_ids.index(sentence_id)
        except ValueError:
            raise DataError(f"unknown sentence id {sentence_id}")

    def components_for(
        self, sentence_id: int, repetition: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = self.sentence_index(sentence_id)
        return (
            self.planning[s, repetition],
            self.articulatory[s, repetition],
            self.sensory[s, repetition],
        )

    def condition_data(
        self, sentence_id: int, repetition: int, condition: ConditionLabel
    ) -> np.ndarray:
        """Noise-free neural data for one condition (exact component sums)."""
        planning, articulatory, sensory = self.components_for(sentence_id, repetition)
        if condition is ConditionLabel.IMAGINED:
            return planning
        mimed = planning + articulatory
        if condition is ConditionLabel.MIMED:
            return mimed
        return mimed + sensory


def _smooth_rows(rows: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return rows
    kernel = np.ones(width) / width
    out = np.empty_like(rows)
    for i in range(rows.shape[0]):
        out[i] = np.convolve(rows[i], kernel, mode="same")
    return out


def _smooth_noise(rng: np.random.Generator, shape: tuple[int, int], width: int) -> np.ndarray:
    return _smooth_rows(rng.normal(size=shape), width)


def _center_rows(rows: np.ndarray) -> np.ndarray:
    return rows - rows.mean(axis=1, keepdims=True)


def _orthogonalize_rows_against(rows: np.ndarray, against: np.ndarray) -> np.ndarray:
    """Remove from each row its projection onto the row span of ``against``."""
    if against.size == 0:
        return rows
    q, _ = np.linalg.qr(against.T)  # (T, rank) orthonormal columns
    return rows - (rows @ q) @ q.T


def _normalize_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.sqrt((rows**2).mean(axis=1, keepdims=True))
    norms = np.where(norms > 0, norms, 1.0)
    return rows / norms


def _tilted_basis(
    anchor: np.ndarray, ortho: np.ndarray, angle_deg: float
) -> np.ndarray:
    """Columns at ``angle_deg`` to the anchor span, orthonormal among themselves."""
    if angle_deg == 90.0:
        return ortho
    d = ortho.shape[1]
    if d > anchor.shape[1]:
        raise ConfigError(
            "overlap angles below 90 degrees require the tilted component's "
            "latent dimension not to exceed the anchor subspace dimension"
        )
    theta = math.radians(angle_deg)
    return math.cos(theta) * anchor[:, :d] + math.sin(theta) * ortho


def generate(
    config: SourceConfig,
    n_sentences: int,
    n_samples: int,
    n_channels: int,
    seed: int = 0,
) -> tuple[Dataset, HierarchicalSources]:
    """Build a three-condition dataset plus its ground truth.

    Deterministic per seed; per-sentence draws come from independent derived
    streams so sentences could be generated in any order.
    """
    if n_sentences < 1 or n_samples < 1 or n_channels < 1:
        raise ConfigError("n_sentences, n_samples, n_channels must be >= 1")
    d_total = config.total_latent_dim
    if d_total > n_channels:
        raise ConfigError(
            f"total latent dimension {d_total} exceeds channel count {n_channels}"
        )
    if n_samples < 2 * d_total:
        raise ConfigError(
            f"need n_samples >= {2 * d_total} to decorrelate {d_total} latent rows"
        )
    d_p = config.latent_dim_planning
    d_a = config.latent_dim_articulatory
    d_s = config.latent_dim_sensory

    root = np.random.default_rng(np.random.SeedSequence([seed]))
    raw = root.normal(size=(n_channels, d_total))
    q, _ = np.linalg.qr(raw)
    basis_p = q[:, :d_p]
    ortho_a = q[:, d_p : d_p + d_a]
    ortho_s = q[:, d_p + d_a :]
    basis_a = _tilted_basis(basis_p, ortho_a, config.overlap_angle_deg)
    basis_s = _tilted_basis(
        np.concatenate([basis_p, ortho_a], axis=1), ortho_s, config.overlap_angle_deg
    )

    n_bands = config.n_bands
    stim_map_p = config.stim_weight_planning * root.normal(size=(n_bands, d_p)) / math.sqrt(d_p) @ basis_p.T
    stim_map_a = config.stim_weight_articulatory * root.normal(size=(n_bands, d_a)) / math.sqrt(d_a) @ basis_a.T
    stim_map_s = config.stim_weight_sensory * root.normal(size=(n_bands, d_s)) / math.sqrt(d_s) @ basis_s.T

    n_reps = config.n_repetitions
    shape = (n_sentences, n_reps, n_channels, n_samples)
    planning = np.zeros(shape)
    articulatory = np.zeros(shape)
    sensory = np.zeros(shape)
    targets = np.zeros((n_sentences, n_reps, n_bands, n_samples))
    pairs: list[tuple[NeuralTrial, StimulusSpectrogram]] = []
    freq_centers = np.arange(1, n_bands + 1, dtype=np.float64) * 100.0

    jitter = config.repetition_jitter
    keep = math.sqrt(max(0.0, 1.0 - jitter**2))
    for s in range(n_sentences):
        rng = np.random.default_rng(np.random.SeedSequence([seed, s]))
        proto = {
            "p": _smooth_noise(rng, (d_p, n_samples), config.smooth_len),
            "a": _smooth_noise(rng, (d_a, n_samples), config.smooth_len),
            "s": _smooth_noise(rng, (d_s, n_samples), config.smooth_len),
        }
        for r in range(n_reps):
            z = {
                k: keep * proto[k]
                + jitter * _smooth_noise(rng, proto[k].shape, config.smooth_len)
                for k in proto
            }
            z_p = _normalize_rows(_center_rows(z["p"]))
            z_a = _normalize_rows(
                _orthogonalize_rows_against(_center_rows(z["a"]), z_p)
            )
            z_s = _normalize_rows(
                _orthogonalize_rows_against(
                    _center_rows(z["s"]), np.concatenate([z_p, z_a], axis=0)
                )
            )
            planning[s, r] = config.amp_planning * (basis_p @ z_p)
            articulatory[s, r] = config.amp_articulatory * (basis_a @ z_a)
            sensory[s, r] = config.amp_sensory * (basis_s @ z_s)

            target = (
                stim_map_p @ planning[s, r]
                + stim_map_a @ articulatory[s, r]
                + stim_map_s @ sensory[s, r]
            )
            if config.target_noise > 0:
                target = target + config.target_noise * _smooth_noise(
                    rng, target.shape, config.smooth_len
                )
            targets[s, r] = target
            spec = StimulusSpectrogram(
                data=target,
                freq_centers_hz=freq_centers,
                sample_rate_hz=config.sample_rate_hz,
            )

            mimed = planning[s, r] + articulatory[s, r]
            condition_data = {
                ConditionLabel.IMAGINED: planning[s, r],
                ConditionLabel.MIMED: mimed,
                ConditionLabel.VOCALIZED: mimed + sensory[s, r],
            }
            for condition, clean in condition_data.items():
                noisy = clean
                if config.channel_noise > 0:
                    noisy = clean + config.channel_noise * rng.normal(size=clean.shape)
                pairs.append(
                    (
                        NeuralTrial(
                            data=noisy,
                            sample_rate_hz=config.sample_rate_hz,
                            sentence_id=s,
                            repetition=r,
                            condition=condition,
                        ),
                        spec,
                    )
                )

    sources = HierarchicalSources(
        planning=planning,
        articulatory=articulatory,
        sensory=sensory,
        basis_planning=basis_p,
        basis_articulatory=basis_a,
        basis_sensory=basis_s,
        stim_map_planning=stim_map_p,
        stim_map_articulatory=stim_map_a,
        stim_map_sensory=stim_map_s,
        sentence_ids=tuple(range(n_sentences)),
        config=config,
    )
    return Dataset(pairs=tuple(pairs)), sources


# ---------------------------------------------------------------------------
# Subspace projections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionSplit:
    """Decomposition of a component into in-subspace and orthogonal parts."""

    parallel: np.ndarray
    perpendicular: np.ndarray
    basis: np.ndarray


def project_onto_subspace(component: np.ndarray, basis: np.ndarray) -> ProjectionSplit:
    """Split channel-space activity into its part inside span(basis) and the rest.

    ``basis`` must have orthonormal columns (checked to 1e-8);
    ``parallel = basis @ basis.T @ component``.
    """
    component = np.asarray(component, dtype=np.float64)
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or component.ndim != 2 or basis.shape[0] != component.shape[0]:
        raise DataError(
            f"component {component.shape} and basis {basis.shape} must share the channel axis"
        )
    gram = basis.T @ basis
    if np.max(np.abs(gram - np.eye(basis.shape[1]))) > 1e-8:
        raise ConfigError("basis columns are not orthonormal (tolerance 1e-8)")
    parallel = basis @ (basis.T @ component)
    return ProjectionSplit(
        parallel=parallel, perpendicular=component - parallel, basis=basis
    )


# ---------------------------------------------------------------------------
# Exact transfer identities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransferIdentityReport:
    """Max absolute deviations of the closed-form transfer identities.

    ``sensory_identity_dev``: predict(V) - predict(M) vs W' lag(sensory).
    ``articulatory_identity_dev``: predict(M) - predict(I) vs W' lag(articulatory).
    ``parallel_identity_dev``: W' lag(articulatory) vs W' lag(in-planning part),
    i.e. how much of the articulatory readout leaks from outside the planning
    subspace; the two Frobenius norms give its scale context.
    """

    sensory_identity_dev: float
    articulatory_identity_dev: float
    parallel_identity_dev: float
    offplanning_leak_fro: float
    planning_term_fro: float


def verify_transfer_identities(
    decoder: LinearDecoder,
    sources: HierarchicalSources,
    tolerance: float = 1e-10,
) -> TransferIdentityReport:
    """Measure the transfer identities on every (sentence, repetition).

    Identities are evaluated through the real prediction path on noise-free
    condition data. When the decoder standardizes inputs, the projection
    identity is evaluated in its scaled channel space.
    """
    from .lagridge import predict  # deferred: keeps module import light

    config = sources.config
    lags = decoder.lagspec.lags
    w_eff = effective_weights(decoder)
    std = (
        np.ones(decoder.n_channels)
        if decoder.scaler is None
        else decoder.scaler.std
    )
    basis_scaled = sources.basis_planning / std[:, None]
    basis_q, _ = np.linalg.qr(basis_scaled)

    dev_a = 0.0
    dev_b = 0.0
    dev_c = 0.0
    leak_sq = 0.0
    planning_sq = 0.0
    for sid in sources.sentence_ids:
        for rep in range(config.n_repetitions):
            planning, articulatory, sensory = sources.components_for(sid, rep)
            trials = {
                cond: NeuralTrial(
                    data=sources.condition_data(sid, rep, cond),
                    sample_rate_hz=config.sample_rate_hz,
                    sentence_id=sid,
                    repetition=rep,
                    condition=cond,
                )
                for cond in ConditionLabel
            }
            pred = {c: predict(decoder, t).data for c, t in trials.items()}
            sens_term = w_eff.T @ lag_matrix(sensory, lags)
            artic_term = w_eff.T @ lag_matrix(articulatory, lags)
            dev_a = max(
                dev_a,
                float(
                    np.max(
                        np.abs(
                            pred[ConditionLabel.VOCALIZED]
                            - pred[ConditionLabel.MIMED]
                            - sens_term
                        )
                    )
                ),
            )
            dev_b = max(
                dev_b,
                float(
                    np.max(
                        np.abs(
                            pred[ConditionLabel.MIMED]
                            - pred[ConditionLabel.IMAGINED]
                            - artic_term
                        )
                    )
                ),
            )
            artic_scaled = articulatory / std[:, None]
            split = project_onto_subspace(artic_scaled, basis_q)
            readout_full = decoder.weights.T @ lag_matrix(artic_scaled, lags)
            readout_par = decoder.weights.T @ lag_matrix(split.parallel, lags)
            dev_c = max(dev_c, float(np.max(np.abs(readout_full - readout_par))))
            leak_sq += float(
                np.sum((decoder.weights.T @ lag_matrix(split.perpendicular, lags)) ** 2)
            )
            planning_sq += float(
                np.sum((decoder.weights.T @ lag_matrix(planning / std[:, None], lags)) ** 2)
            )
    return TransferIdentityReport(
        sensory_identity_dev=dev_a,
        articulatory_identity_dev=dev_b,
        parallel_identity_dev=dev_c,
        offplanning_leak_fro=math.sqrt(leak_sq),
        planning_term_fro=math.sqrt(planning_sq),
    )


# ---------------------------------------------------------------------------
# Transfer ordering experiment
# ---------------------------------------------------------------------------

CANONICAL_ORDERING_CONFIG = SourceConfig(
    overlap_angle_deg=90.0,
    stim_weight_articulatory=1.0,
    target_noise=0.5,
    channel_noise=0.2,
)


@dataclass(frozen=True)
class OrderingResult:
    """Mean envelope correlations of the 3x3 grid plus the ordering verdict."""

    mean_corr: dict[tuple[ConditionLabel, ConditionLabel], float]
    eps: float
    delta: float

    @property
    def mimed_to_mimed(self) -> float:
        return self.mean_corr[(ConditionLabel.MIMED, ConditionLabel.MIMED)]

    @property
    def mimed_to_vocalized(self) -> float:
        return self.mean_corr[(ConditionLabel.MIMED, ConditionLabel.VOCALIZED)]

    @property
    def mimed_to_imagined(self) -> float:
        return self.mean_corr[(ConditionLabel.MIMED, ConditionLabel.IMAGINED)]

    @property
    def within_eps(self) -> bool:
        return abs(self.mimed_to_mimed - self.mimed_to_vocalized) < self.eps

    @property
    def margin_ok(self) -> bool:
        return (
            self.mimed_to_mimed - self.mimed_to_imagined > self.delta
            and self.mimed_to_vocalized - self.mimed_to_imagined > self.delta
        )

    @property
    def ordering_holds(self) -> bool:
        return self.within_eps and self.margin_ok


def transfer_ordering_experiment(
    config: SourceConfig = CANONICAL_ORDERING_CONFIG,
    seed: int = 0,
    n_sentences: int = 20,
    n_samples: int = 200,
    n_channels: int = 16,
    eps: float = 0.05,
    delta: float = 0.05,
    alpha_grid: Sequence[float] | None = None,
    lag_window_ms: float = 50.0,
) -> OrderingResult:
    """Run the full linear pipeline on a generated hierarchy and report the
    mimed-row transfer ordering (mimed ~ vocalized, both above imagined)."""
    from .pipeline import evaluate_linear_grid  # deferred: avoids an import cycle

    from .data import make_split

    dataset, _ = generate(config, n_sentences, n_samples, n_channels, seed)
    split = make_split(dataset, (0.6, 0.2, 0.2), seed)
    lagspec = LagSpec.from_window_ms(lag_window_ms, config.sample_rate_hz)
    cells = evaluate_linear_grid(
        dataset,
        split,
        lagspec,
        alpha_grid=tuple(alpha_grid) if alpha_grid is not None else None,
        standardize=True,
    )
    mean_corr = {key: cell.mean_envelope_corr for key, cell in cells.items()}
    return OrderingResult(mean_corr=mean_corr, eps=eps, delta=delta)
