"""End-to-end orchestration: the 3x3 train/test condition grid, null models,
statistics, and plot-ready report files.

Every training condition gets its own decoder (ridge strength picked on the
validation fold, fit on the training fold only); each decoder is then
evaluated on the held-out test sentences of all three conditions. All nine
cells share one sentence gallery, so rank analyses are comparable across
cells. Null decoders refit the same pipeline on broken pairings and provide
per-cell chance distributions.

Determinism contract: one config produces byte-identical numeric outputs
across runs and across worker counts. Jobs are pure; results are assembled
by index, never by completion order.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .data import (
    ALL_CONDITIONS,
    ConditionLabel,
    Dataset,
    SplitPlan,
    load_dataset,
    make_split,
)
from .errors import ConfigError, DataError, NumericError, SpecreconError
from .lagridge import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_LAG_WINDOW_MS,
    ChannelScaler,
    LagSpec,
    LinearDecoder,
    fit_ridge,
    grid_search_alpha,
    predict,
    stack_pairs,
)
from .metrics import (
    TopKCurve,
    UndefinedCorrelationError,
    envelope,
    pearson,
    rank_analysis,
    spectrogram_correlation,
)
from .nnet import NonlinearDecoder, TrainConfig, forward, init_decoder
from .nnet import train as train_network
from .nullstats import (
    LinearFit,
    NullKind,
    NullSpec,
    StatResult,
    linear_fit,
    make_null_dataset,
    permutation_pvalue,
    steiger_test,
)

T = TypeVar("T")

WORKERS_ENV = "SPECRECON_WORKERS"

LINEAR = "linear"
NONLINEAR = "nonlinear"


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_jobs(fn: Callable[[T], object], items: Sequence[T]) -> list:
    """Run pure jobs over the bounded pool; results keep submission order."""
    workers = _worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetConfig:
    """Nonlinear decoder settings carried inside a run config."""

    hidden: int = 32
    kernel: int = 9
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_trials: int = 4
    seed: int = 0

    def train_config(self, seed_offset: int = 0) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_trials=self.batch_trials,
            seed=self.seed + seed_offset,
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything one `run` needs; fully serializable to JSON."""

    manifest: str
    output_dir: str
    decoders: str = LINEAR  # "linear" | "nonlinear" | "both"
    lag_window_ms: float = DEFAULT_LAG_WINDOW_MS
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    standardize: bool = True
    with_nulls: bool = True
    null_kind: str = NullKind.SHUFFLED_PAIRING.value
    null_realizations: int = 20
    null_seed: int = 0
    permutation_resamples: int = 10_000
    net: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        if self.decoders not in (LINEAR, NONLINEAR, "both"):
            raise ConfigError(
                f"decoders must be 'linear', 'nonlinear', or 'both', got {self.decoders!r}"
            )
        if self.lag_window_ms < 0:
            raise ConfigError("lag_window_ms must be >= 0")
        if not self.alpha_grid:
            raise ConfigError("alpha_grid must be nonempty")
        if self.null_realizations < 1:
            raise ConfigError("null_realizations must be >= 1")
        if self.permutation_resamples < 1:
            raise ConfigError("permutation_resamples must be >= 1")
        NullKind.from_string(self.null_kind)
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "split_fractions", tuple(float(f) for f in self.split_fractions))

    @property
    def families(self) -> tuple[str, ...]:
        if self.decoders == "both":
            return (LINEAR, NONLINEAR)
        return (self.decoders,)

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "output_dir": self.output_dir,
            "decoders": self.decoders,
            "lag_window_ms": self.lag_window_ms,
            "alpha_grid": list(self.alpha_grid),
            "split_fractions": list(self.split_fractions),
            "split_seed": self.split_seed,
            "standardize": self.standardize,
            "with_nulls": self.with_nulls,
            "null_kind": self.null_kind,
            "null_realizations": self.null_realizations,
            "null_seed": self.null_seed,
            "permutation_resamples": self.permutation_resamples,
            "net": {
                "hidden": self.net.hidden,
                "kernel": self.net.kernel,
                "learning_rate": self.net.learning_rate,
                "epochs": self.net.epochs,
                "batch_trials": self.net.batch_trials,
                "seed": self.net.seed,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        net_doc = doc.pop("net", {}) or {}
        known_net = {f for f in NetConfig.__dataclass_fields__}
        bad = set(net_doc) - known_net
        if bad:
            raise ConfigError(f"unknown net config fields: {sorted(bad)}")
        known = {f for f in cls.__dataclass_fields__ if f != "net"}
        bad = set(doc) - known
        if bad:
            raise ConfigError(f"unknown config fields: {sorted(bad)}")
        if "manifest" not in doc or "output_dir" not in doc:
            raise ConfigError("config requires 'manifest' and 'output_dir'")
        if "alpha_grid" in doc:
            doc["alpha_grid"] = tuple(doc["alpha_grid"])
        if "split_fractions" in doc:
            doc["split_fractions"] = tuple(doc["split_fractions"])
        try:
            return cls(net=NetConfig(**net_doc), **doc)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"{path}: config file does not exist")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc)


# ---------------------------------------------------------------------------
# Grid cells and reports
# ---------------------------------------------------------------------------


@dataclass
class TrialScore:
    sentence_id: int
    repetition: int
    envelope_corr: float  # NaN when undefined
    spectrogram_corr: float


@dataclass
class GridCell:
    """One train-condition x test-condition evaluation."""

    train_condition: ConditionLabel
    test_condition: ConditionLabel
    scores: list[TrialScore]
    topk: TopKCurve | None
    alpha: float | None = None
    seed: int = 0
    # Null augmentation (run_nulls):
    null_envelope_corrs: list[float] = field(default_factory=list)
    null_realization_means: list[float] = field(default_factory=list)
    p_perm: float | None = None
    p_rank: float | None = None
    cohens_d: float | None = None
    underpowered: bool | None = None

    @property
    def n_trials(self) -> int:
        return len(self.scores)

    @property
    def mean_envelope_corr(self) -> float:
        vals = [s.envelope_corr for s in self.scores if not math.isnan(s.envelope_corr)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_spectrogram_corr(self) -> float:
        vals = [s.spectrogram_corr for s in self.scores if not math.isnan(s.spectrogram_corr)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def auc_raw(self) -> float:
        return self.topk.auc_raw if self.topk is not None else math.nan

    @property
    def auc_norm(self) -> float:
        return self.topk.auc_norm if self.topk is not None else math.nan


@dataclass
class GridReport:
    family: str
    cells: dict[tuple[ConditionLabel, ConditionLabel], GridCell]
    split: SplitPlan
    alpha_by_condition: dict[ConditionLabel, float] = field(default_factory=dict)

    def cell(self, train: ConditionLabel, test: ConditionLabel) -> GridCell:
        return self.cells[(train, test)]

    def ordered_cells(self) -> list[GridCell]:
        return [
            self.cells[(tr, te)]
            for tr in ALL_CONDITIONS
            for te in ALL_CONDITIONS
            if (tr, te) in self.cells
        ]


@contextmanager
def _cell_context(family: str, train: ConditionLabel, test: ConditionLabel):
    """Attach grid coordinates to any error escaping one cell's evaluation."""
    try:
        yield
    except SpecreconError as exc:
        message = f"[{family} {train.value}->{test.value}] {exc}"
        if isinstance(exc, ConfigError):
            raise ConfigError(message) from exc
        if isinstance(exc, DataError):
            raise DataError(message) from exc
        raise NumericError(message) from exc


def _mean_envelope_gallery(
    dataset: Dataset,
    condition: ConditionLabel,
    sentence_ids: Iterable[int],
) -> list[tuple[int, np.ndarray]]:
    """One candidate envelope per sentence: repetition-averaged targets."""
    gallery = []
    for sid in sorted(sentence_ids):
        envs = [
            envelope(spec)
            for trial, spec in dataset.select(condition=condition, sentence_ids=[sid])
        ]
        if not envs:
            continue
        n = min(e.size for e in envs)
        gallery.append((sid, np.mean([e[:n] for e in envs], axis=0)))
    return gallery


def _evaluate_cell(
    test_pairs,
    gallery,
    train_condition: ConditionLabel,
    test_condition: ConditionLabel,
    predictions,
) -> GridCell:
    scores = []
    queries = []
    for (trial, spec), recon in zip(test_pairs, predictions):
        try:
            env_corr = pearson(envelope(recon), envelope(spec))
        except (UndefinedCorrelationError, NumericError):
            env_corr = math.nan
        try:
            spec_corr = spectrogram_correlation(recon, spec)
        except (UndefinedCorrelationError, NumericError):
            spec_corr = math.nan
        scores.append(
            TrialScore(
                sentence_id=trial.sentence_id,
                repetition=trial.repetition,
                envelope_corr=env_corr,
                spectrogram_corr=spec_corr,
            )
        )
        queries.append((trial.sentence_id, envelope(recon)))
    topk = None
    if len(gallery) >= 2:
        topk = rank_analysis(queries, gallery)
    return GridCell(
        train_condition=train_condition,
        test_condition=test_condition,
        scores=scores,
        topk=topk,
    )


def evaluate_linear_grid(
    dataset: Dataset,
    split: SplitPlan,
    lagspec: LagSpec,
    alpha_grid: tuple[float, ...] | None = None,
    standardize: bool = True,
) -> dict[tuple[ConditionLabel, ConditionLabel], GridCell]:
    """Fit one ridge decoder per condition and fill the 3x3 (or KxK) grid.

    Ridge strength is picked on the validation fold (skipped for singleton
    grids), the final fit uses the training fold only, and every cell is
    evaluated on test-fold sentences.
    """
    grid = tuple(alpha_grid) if alpha_grid is not None else DEFAULT_ALPHA_GRID
    conditions = dataset.conditions()
    cells: dict[tuple[ConditionLabel, ConditionLabel], GridCell] = {}
    decoders = dict(
        zip(conditions, _map_jobs(
            lambda ct: _fit_condition_decoder(dataset, split, ct, lagspec, grid, standardize),
            conditions,
        ))
    )
    for ct in conditions:
        decoder = decoders[ct]
        for te in conditions:
            with _cell_context(LINEAR, ct, te):
                test_pairs = dataset.select(condition=te, sentence_ids=split.test_ids)
                if not test_pairs:
                    raise DataError(f"no test trials for condition {te.value!r}")
                predictions = [predict(decoder, trial) for trial, _ in test_pairs]
                gallery = _mean_envelope_gallery(dataset, te, split.test_ids)
                cell = _evaluate_cell(test_pairs, gallery, ct, te, predictions)
                cell.alpha = decoder.alpha
                cells[(ct, te)] = cell
    return cells


def _fit_condition_decoder(
    dataset: Dataset,
    split: SplitPlan,
    condition: ConditionLabel,
    lagspec: LagSpec,
    grid: tuple[float, ...],
    standardize: bool,
) -> LinearDecoder:
    train_pairs = dataset.select(condition=condition, sentence_ids=split.train_ids)
    if not train_pairs:
        raise DataError(f"no training trials for condition {condition.value!r}")
    if len(grid) == 1:
        alpha_star = float(grid[0])
    else:
        val_pairs = dataset.select(condition=condition, sentence_ids=split.val_ids)
        if not val_pairs:
            raise ConfigError(
                "alpha grid search needs a nonempty validation fold; "
                "provide one or pass a singleton alpha grid"
            )
        alpha_star = grid_search_alpha(
            train_pairs, val_pairs, lagspec, grid, standardize=standardize,
            trained_on=condition,
        ).alpha_star
    scaler = ChannelScaler.fit([t for t, _ in train_pairs]) if standardize else None
    design, targets = stack_pairs(train_pairs, lagspec, scaler)
    return fit_ridge(
        design,
        targets,
        alpha_star,
        lagspec,
        trained_on=condition,
        scaler=scaler,
        freq_centers_hz=dataset.freq_centers_hz,
    )


def _train_condition_network(
    dataset: Dataset,
    split: SplitPlan,
    condition: ConditionLabel,
    net: NetConfig,
    standardize: bool,
) -> NonlinearDecoder:
    train_pairs = dataset.select(condition=condition, sentence_ids=split.train_ids)
    if not train_pairs:
        raise DataError(f"no training trials for condition {condition.value!r}")
    val_pairs = dataset.select(condition=condition, sentence_ids=split.val_ids)
    scaler = ChannelScaler.fit([t for t, _ in train_pairs]) if standardize else None
    seed_offset = list(ALL_CONDITIONS).index(condition)
    initial = init_decoder(
        n_channels=dataset.n_channels,
        n_bands=dataset.n_bands,
        hidden=net.hidden,
        kernel=net.kernel,
        seed=net.seed + seed_offset,
        scaler=scaler,
        freq_centers_hz=dataset.freq_centers_hz,
    )
    result = train_network(initial, train_pairs, val_pairs, net.train_config(seed_offset))
    return result.decoder


def evaluate_network_grid(
    dataset: Dataset,
    split: SplitPlan,
    net: NetConfig,
    standardize: bool = True,
) -> dict[tuple[ConditionLabel, ConditionLabel], GridCell]:
    """Train one network per condition and fill the grid like the linear path."""
    conditions = dataset.conditions()
    nets = dict(
        zip(conditions, _map_jobs(
            lambda ct: _train_condition_network(dataset, split, ct, net, standardize),
            conditions,
        ))
    )
    cells: dict[tuple[ConditionLabel, ConditionLabel], GridCell] = {}
    for ct in conditions:
        model = nets[ct]
        for te in conditions:
            with _cell_context(NONLINEAR, ct, te):
                test_pairs = dataset.select(condition=te, sentence_ids=split.test_ids)
                if not test_pairs:
                    raise DataError(f"no test trials for condition {te.value!r}")
                predictions = [forward(model, trial) for trial, _ in test_pairs]
                gallery = _mean_envelope_gallery(dataset, te, split.test_ids)
                cells[(ct, te)] = _evaluate_cell(test_pairs, gallery, ct, te, predictions)
    return cells


def run_grid(config: RunConfig, dataset: Dataset | None = None) -> dict[str, GridReport]:
    """Load, split, fit, and evaluate every requested decoder family."""
    if dataset is None:
        dataset = load_dataset(config.manifest)
    missing = [c.value for c in ALL_CONDITIONS if c not in dataset.conditions()]
    if missing:
        raise DataError(f"dataset is missing conditions: {', '.join(missing)}")
    split = make_split(dataset, config.split_fractions, config.split_seed)
    lagspec = LagSpec.from_window_ms(config.lag_window_ms, dataset.sample_rate_hz)
    reports: dict[str, GridReport] = {}
    for family in config.families:
        if family == LINEAR:
            cells = evaluate_linear_grid(
                dataset, split, lagspec, config.alpha_grid, config.standardize
            )
            alpha_by_condition = {
                ct: cells[(ct, ct)].alpha for ct in dataset.conditions()
            }
        else:
            cells = evaluate_network_grid(dataset, split, config.net, config.standardize)
            alpha_by_condition = {}
        for cell in cells.values():
            cell.seed = config.split_seed
        reports[family] = GridReport(
            family=family,
            cells=cells,
            split=split,
            alpha_by_condition=alpha_by_condition,
        )
    return reports


# ---------------------------------------------------------------------------
# Null models
# ---------------------------------------------------------------------------


def run_nulls(
    config: RunConfig,
    reports: dict[str, GridReport],
    dataset: Dataset,
) -> dict[str, GridReport]:
    """Attach null correlation distributions, p-values, and effect sizes.

    Per training condition, ``null_realizations`` decoders are refit on
    broken pairings of its training fold (the selected ridge strength and
    scaler are reused) and evaluated on the real test trials of every test
    condition. Two p-values are attached per cell: ``p_perm`` from a
    permutation test of the observed-vs-null mean envelope correlation, and
    ``p_rank``, the add-one rank of the observed cell mean among the null
    realization means (bounded below by 1/(1 + R), hence the underpowered
    flag for small R).
    """
    spec = NullSpec(
        kind=NullKind.from_string(config.null_kind),
        n_realizations=config.null_realizations,
        seed=config.null_seed,
    )
    lagspec = LagSpec.from_window_ms(config.lag_window_ms, dataset.sample_rate_hz)
    for family, report in reports.items():
        split = report.split
        conditions = dataset.conditions()
        for ct_idx, ct in enumerate(conditions):
            train_subset = dataset.subset(condition=ct, sentence_ids=split.train_ids)
            scaler = (
                ChannelScaler.fit([t for t, _ in train_subset.pairs])
                if config.standardize
                else None
            )
            alpha = report.alpha_by_condition.get(ct)

            def fit_and_score(realization: int):
                index = ct_idx * spec.n_realizations + realization
                null_ds = make_null_dataset(train_subset, spec, index)
                if family == LINEAR:
                    design, targets = stack_pairs(null_ds.pairs, lagspec, scaler)
                    null_dec = fit_ridge(
                        design, targets, alpha, lagspec,
                        trained_on=ct, scaler=scaler,
                        freq_centers_hz=dataset.freq_centers_hz,
                    )
                    reconstruct = lambda trial: predict(null_dec, trial)
                else:
                    initial = init_decoder(
                        n_channels=dataset.n_channels,
                        n_bands=dataset.n_bands,
                        hidden=config.net.hidden,
                        kernel=config.net.kernel,
                        seed=config.net.seed + 7919 * (index + 1),
                        scaler=scaler,
                        freq_centers_hz=dataset.freq_centers_hz,
                    )
                    trained = train_network(
                        initial, null_ds.pairs, (),
                        config.net.train_config(7919 * (index + 1)),
                    )
                    reconstruct = lambda trial: forward(trained.decoder, trial)
                per_test: dict[ConditionLabel, list[float]] = {}
                for te in conditions:
                    vals = []
                    for trial, spec_t in dataset.select(condition=te, sentence_ids=split.test_ids):
                        try:
                            vals.append(pearson(envelope(reconstruct(trial)), envelope(spec_t)))
                        except NumericError:
                            continue
                    per_test[te] = vals
                return per_test

            results = _map_jobs(fit_and_score, list(range(spec.n_realizations)))
            for te in conditions:
                cell = report.cells[(ct, te)]
                cell.null_envelope_corrs = [
                    v for per_test in results for v in per_test[te]
                ]
                cell.null_realization_means = [
                    float(np.mean(per_test[te])) if per_test[te] else math.nan
                    for per_test in results
                ]
                observed = [
                    s.envelope_corr for s in cell.scores if not math.isnan(s.envelope_corr)
                ]
                if observed and cell.null_envelope_corrs:
                    stat = permutation_pvalue(
                        observed,
                        cell.null_envelope_corrs,
                        alternative="greater",
                        n_resamples=config.permutation_resamples,
                        seed=[config.null_seed, ct_idx, list(conditions).index(te)],
                    )
                    cell.p_perm = stat.p_value
                    cell.cohens_d = stat.effect_size_d
                obs_mean = cell.mean_envelope_corr
                means = [m for m in cell.null_realization_means if not math.isnan(m)]
                if means and not math.isnan(obs_mean):
                    exceed = sum(1 for m in means if m >= obs_mean)
                    cell.p_rank = (1 + exceed) / (1 + len(means))
                cell.underpowered = spec.n_realizations < 19
    return reports


# ---------------------------------------------------------------------------
# Model comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelComparison:
    """Discriminability-vs-correlation comparison between decoder families.

    Per family, ``auc_norm`` is regressed on the mean envelope correlation
    over the nine grid cells. The two correlation strengths are then compared
    with the shared-variable dependent-correlation test, treating the AUC
    axis as the shared variable and using the correlation between the two
    families' mean-correlation vectors as the cross term.
    """

    points: dict[str, list[tuple[float, float]]]  # family -> (mean corr, auc_norm)
    fits: dict[str, LinearFit]
    steiger: StatResult | None
    computable: bool
    reason: str = ""

    @property
    def slope_difference(self) -> float:
        if LINEAR in self.fits and NONLINEAR in self.fits:
            return self.fits[LINEAR].slope - self.fits[NONLINEAR].slope
        return math.nan


def run_model_comparison(
    linear_report: GridReport, nonlinear_report: GridReport
) -> ModelComparison:
    """Compare how discriminability scales with reconstruction correlation."""
    points: dict[str, list[tuple[float, float]]] = {}
    for family, report in ((LINEAR, linear_report), (NONLINEAR, nonlinear_report)):
        cells = report.ordered_cells()
        pts = [(c.mean_envelope_corr, c.auc_norm) for c in cells]
        points[family] = pts
    keys_lin = [(c.train_condition, c.test_condition) for c in linear_report.ordered_cells()]
    keys_nn = [(c.train_condition, c.test_condition) for c in nonlinear_report.ordered_cells()]
    if keys_lin != keys_nn:
        raise DataError("reports cover different grid cells")

    fits: dict[str, LinearFit] = {}
    reason = ""
    computable = True
    for family, pts in points.items():
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        if any(math.isnan(v) for v in xs + ys):
            computable = False
            reason = f"{family}: undefined correlation or discriminability values"
            continue
        try:
            fits[family] = linear_fit(xs, ys)
        except NumericError as exc:
            computable = False
            reason = f"{family}: {exc}"
            continue
        if not fits[family].r_defined:
            computable = False
            reason = f"{family}: correlation of the fit is undefined (constant values)"

    steiger = None
    if computable:
        x_lin = [p[0] for p in points[LINEAR]]
        x_nn = [p[0] for p in points[NONLINEAR]]
        try:
            r_cross = pearson(x_lin, x_nn)
            steiger = steiger_test(
                fits[LINEAR].r, fits[NONLINEAR].r, r_cross, n=len(x_lin)
            )
        except (NumericError, ConfigError) as exc:
            computable = False
            reason = f"dependent-correlation test not computable: {exc}"
    return ModelComparison(
        points=points, fits=fits, steiger=steiger, computable=computable, reason=reason
    )


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    """Shortest exact decimal for floats; empty string for missing values."""
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_reports(
    config: RunConfig,
    reports: dict[str, GridReport],
    comparison: ModelComparison | None,
    output_dir: str | Path,
) -> list[Path]:
    """Write the full report set. Deterministic: same inputs, same bytes."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    written: list[Path] = []

    def emit(name: str, header: list[str], rows) -> None:
        path = out / name
        _write_csv(path, header, rows)
        written.append(path)

    (out / "config.json").write_text(
        json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(out / "config.json")

    split = next(iter(reports.values())).split if reports else None
    if split is not None:
        (out / "split.json").write_text(
            json.dumps(
                {
                    "seed": split.seed,
                    "train": sorted(split.train_ids),
                    "val": sorted(split.val_ids),
                    "test": sorted(split.test_ids),
                },
                indent=1,
            )
            + "\n",
            encoding="utf-8",
        )
        written.append(out / "split.json")

    summary_rows = []
    trial_rows = []
    topk_rows = []
    null_rows = []
    stat_rows = []
    for family in (LINEAR, NONLINEAR):
        report = reports.get(family)
        if report is None:
            continue
        for cell in report.ordered_cells():
            tr, te = cell.train_condition.value, cell.test_condition.value
            summary_rows.append(
                [
                    family, tr, te, cell.n_trials,
                    cell.mean_envelope_corr, cell.mean_spectrogram_corr,
                    cell.auc_raw, cell.auc_norm, cell.alpha,
                    cell.p_perm, cell.p_rank, cell.cohens_d,
                    len(cell.null_realization_means) or None,
                    cell.underpowered, cell.seed,
                ]
            )
            for s in cell.scores:
                trial_rows.append(
                    [family, tr, te, s.sentence_id, s.repetition,
                     s.envelope_corr, s.spectrogram_corr]
                )
            if cell.topk is not None:
                for k in range(1, cell.topk.n + 1):
                    topk_rows.append(
                        [family, tr, te, k, cell.topk.topk[k - 1], k / cell.topk.n]
                    )
            for i, val in enumerate(cell.null_envelope_corrs):
                null_rows.append([family, tr, te, i, val])
            if cell.p_perm is not None:
                stat_rows.append(
                    [
                        f"{family}:{tr}->{te}:vs_null",
                        cell.mean_envelope_corr
                        - float(np.mean(cell.null_envelope_corrs)),
                        cell.p_perm,
                        cell.cohens_d,
                        config.permutation_resamples,
                        config.null_seed,
                    ]
                )
    if comparison is not None:
        for family, fit in comparison.fits.items():
            stat_rows.append(
                [f"fit_slope:{family}", fit.slope, None, None, 0, config.split_seed]
            )
        if comparison.steiger is not None:
            stat_rows.append(
                [
                    "steiger:linear_vs_nonlinear",
                    comparison.steiger.statistic,
                    comparison.steiger.p_value,
                    None,
                    0,
                    config.split_seed,
                ]
            )

    emit(
        "grid_summary.csv",
        ["family", "train", "test", "n_trials", "mean_envelope_corr",
         "mean_spectrogram_corr", "auc_raw", "auc_norm", "alpha",
         "p_perm", "p_rank", "cohens_d", "n_null_realizations",
         "underpowered", "seed"],
        summary_rows,
    )
    emit(
        "per_trial_correlations.csv",
        ["family", "train", "test", "sentence_id", "repetition",
         "envelope_corr", "spectrogram_corr"],
        trial_rows,
    )
    emit("topk_curves.csv", ["family", "train", "test", "k", "topk", "chance"], topk_rows)
    emit(
        "null_correlations.csv",
        ["family", "train", "test", "sample_index", "envelope_corr"],
        null_rows,
    )
    emit(
        "statistics.csv",
        ["comparison", "statistic", "p_value", "cohens_d", "n_permutations", "seed"],
        stat_rows,
    )
    comparison_rows = []
    if comparison is not None:
        for family in (LINEAR, NONLINEAR):
            report = reports.get(family)
            if report is None:
                continue
            for cell, (mc, auc) in zip(report.ordered_cells(), comparison.points[family]):
                comparison_rows.append(
                    [family, cell.train_condition.value, cell.test_condition.value, mc, auc]
                )
    emit(
        "model_comparison.csv",
        ["family", "train", "test", "mean_envelope_corr", "auc_norm"],
        comparison_rows,
    )
    return written


def run(config: RunConfig, log=lambda msg: print(msg, file=sys.stderr)) -> Path:
    """Full pipeline: grid, nulls, comparison, reports. Returns the output dir."""
    dataset = load_dataset(config.manifest)
    log(f"loaded {len(dataset.pairs)} pairs, N={dataset.n_sentences} sentences")
    reports = run_grid(config, dataset)
    log(f"grid done for: {', '.join(reports)}")
    if config.with_nulls:
        run_nulls(config, reports, dataset)
        log(f"nulls done ({config.null_realizations} realizations per condition)")
    comparison = None
    if LINEAR in reports and NONLINEAR in reports:
        comparison = run_model_comparison(reports[LINEAR], reports[NONLINEAR])
        log("model comparison done")
    emit_reports(config, reports, comparison, config.output_dir)
    return Path(config.output_dir)


# ---------------------------------------------------------------------------
# Statistics recomputation from saved reports
# ---------------------------------------------------------------------------


def recompute_statistics(
    report_dir: str | Path,
    n_resamples: int = 10_000,
    seed: int = 0,
) -> Path:
    """Rebuild statistics.csv from the per-trial and null CSVs in a run directory."""
    report_dir = Path(report_dir)
    trials_path = report_dir / "per_trial_correlations.csv"
    nulls_path = report_dir / "null_correlations.csv"
    if not trials_path.exists():
        raise DataError(f"{trials_path}: missing per-trial report")
    observed: dict[tuple[str, str, str], list[float]] = {}
    with open(trials_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["family"], row["train"], row["test"])
            val = float(row["envelope_corr"])
            if not math.isnan(val):
                observed.setdefault(key, []).append(val)
    nulls: dict[tuple[str, str, str], list[float]] = {}
    if nulls_path.exists():
        with open(nulls_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key = (row["family"], row["train"], row["test"])
                nulls.setdefault(key, []).append(float(row["envelope_corr"]))
    rows = []
    for i, (key, obs) in enumerate(sorted(observed.items())):
        nul = nulls.get(key)
        if not nul:
            continue
        stat = permutation_pvalue(obs, nul, "greater", n_resamples, seed=[seed, i])
        rows.append(
            [
                f"{key[0]}:{key[1]}->{key[2]}:vs_null",
                stat.statistic,
                stat.p_value,
                stat.effect_size_d,
                stat.n_permutations,
                seed,
            ]
        )
    out = report_dir / "statistics.csv"
    _write_csv(
        out,
        ["comparison", "statistic", "p_value", "cohens_d", "n_permutations", "seed"],
        rows,
    )
    return out
