"""Core data model: trials, target spectrograms, datasets, and splits.

A dataset is a list of (neural trial, target spectrogram) pairs. Trials are
identified by (sentence_id, repetition, condition); the three speaking
conditions share sentence identities so decoders trained on one condition can
be evaluated on the matching held-out sentences of another.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .matrixio import read_matrix, write_matrix


class ConditionLabel(Enum):
    """Speaking condition of a trial. Exactly three labels exist."""

    VOCALIZED = "vocalized"
    MIMED = "mimed"
    IMAGINED = "imagined"

    @classmethod
    def from_string(cls, text: str) -> "ConditionLabel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            valid = ", ".join(c.value for c in cls)
            raise DataError(f"unknown condition {text!r}, expected one of: {valid}")

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


ALL_CONDITIONS = (ConditionLabel.VOCALIZED, ConditionLabel.MIMED, ConditionLabel.IMAGINED)


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NeuralTrial:
    """One trial's multichannel response, shape (channels, time).

    Attributes
    ----------
    data:
        Real matrix, channels x time, arbitrary units. Finite.
    sample_rate_hz:
        Sampling rate shared with the paired target spectrogram.
    sentence_id:
        Nonnegative stimulus identity.
    repetition:
        0 or 1; each sentence is produced at most twice per condition.
    condition:
        Speaking condition label.
    """

    data: np.ndarray
    sample_rate_hz: float
    sentence_id: int
    repetition: int
    condition: ConditionLabel

    def __post_init__(self):
        arr = _frozen_array(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"trial data must be 2-D with C,T >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("trial data contains non-finite values")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.sentence_id < 0:
            raise DataError(f"sentence_id must be >= 0, got {self.sentence_id}")
        if self.repetition not in (0, 1):
            raise DataError(f"repetition must be 0 or 1, got {self.repetition}")
        if not isinstance(self.condition, ConditionLabel):
            raise DataError(f"condition must be a ConditionLabel, got {self.condition!r}")
        object.__setattr__(self, "data", arr)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def key(self) -> tuple[int, int, ConditionLabel]:
        return (self.sentence_id, self.repetition, self.condition)


@dataclass(frozen=True)
class StimulusSpectrogram:
    """Target (or reconstructed) spectrogram, shape (frequencies, time)."""

    data: np.ndarray
    freq_centers_hz: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        arr = _frozen_array(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"spectrogram must be 2-D with F,T >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("spectrogram contains non-finite values")
        centers = _frozen_array(self.freq_centers_hz)
        if centers.ndim != 1 or centers.shape[0] != arr.shape[0]:
            raise DataError(
                f"freq_centers_hz must have one entry per band ({arr.shape[0]}), "
                f"got shape {centers.shape}"
            )
        if not np.isfinite(centers).all() or np.any(centers <= 0):
            raise DataError("freq_centers_hz must be positive and finite")
        if np.any(np.diff(centers) <= 0):
            raise DataError("freq_centers_hz must be strictly increasing")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "freq_centers_hz", centers)

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


def default_freq_centers(n_bands: int) -> np.ndarray:
    """Placeholder band centers (1..F) for spectrograms with unknown frequencies."""
    return np.arange(1, n_bands + 1, dtype=np.float64)


@dataclass(frozen=True)
class Dataset:
    """Validated collection of (trial, spectrogram) pairs.

    Invariants enforced at construction:

    - all trials share channel count and sample rate;
    - each pair has matching time length and sample rate;
    - (sentence_id, repetition, condition) keys are unique;
    - every condition present carries the same sentence/repetition structure.
    """

    pairs: tuple[tuple[NeuralTrial, StimulusSpectrogram], ...]

    def __post_init__(self):
        pairs = tuple(self.pairs)
        if not pairs:
            raise DataError("dataset has no pairs")
        c0 = pairs[0][0].n_channels
        sr0 = pairs[0][0].sample_rate_hz
        centers0 = pairs[0][1].freq_centers_hz
        seen: set[tuple[int, int, ConditionLabel]] = set()
        per_condition: dict[ConditionLabel, set[tuple[int, int]]] = {}
        for trial, spec in pairs:
            if trial.n_channels != c0:
                raise DataError(
                    f"trial {trial.key}: channel count {trial.n_channels} != {c0}"
                )
            if not np.array_equal(spec.freq_centers_hz, centers0):
                raise DataError(
                    f"pair {trial.key}: frequency bands differ from the rest of the dataset"
                )
            if trial.sample_rate_hz != sr0:
                raise DataError(
                    f"trial {trial.key}: sample rate {trial.sample_rate_hz} != {sr0}"
                )
            if spec.sample_rate_hz != trial.sample_rate_hz:
                raise DataError(
                    f"pair {trial.key}: spectrogram sample rate "
                    f"{spec.sample_rate_hz} != trial sample rate {trial.sample_rate_hz}"
                )
            if spec.n_samples != trial.n_samples:
                raise DataError(
                    f"pair {trial.key}: spectrogram has T={spec.n_samples} but "
                    f"trial has T={trial.n_samples}"
                )
            if trial.key in seen:
                raise DataError(f"duplicate (sentence, repetition, condition) key {trial.key}")
            seen.add(trial.key)
            per_condition.setdefault(trial.condition, set()).add(
                (trial.sentence_id, trial.repetition)
            )
        structures = list(per_condition.values())
        for cond, struct in per_condition.items():
            if struct != structures[0]:
                raise DataError(
                    f"condition {cond.value!r} does not carry the same "
                    "(sentence, repetition) set as the other conditions"
                )
        object.__setattr__(self, "pairs", pairs)

    @property
    def n_sentences(self) -> int:
        return len(self.sentence_ids())

    @property
    def n_channels(self) -> int:
        return self.pairs[0][0].n_channels

    @property
    def sample_rate_hz(self) -> float:
        return self.pairs[0][0].sample_rate_hz

    @property
    def freq_centers_hz(self) -> np.ndarray:
        return self.pairs[0][1].freq_centers_hz

    @property
    def n_bands(self) -> int:
        return self.pairs[0][1].n_bands

    def sentence_ids(self) -> tuple[int, ...]:
        return tuple(sorted({t.sentence_id for t, _ in self.pairs}))

    def conditions(self) -> tuple[ConditionLabel, ...]:
        present = {t.condition for t, _ in self.pairs}
        return tuple(c for c in ALL_CONDITIONS if c in present)

    def select(
        self,
        condition: ConditionLabel | None = None,
        sentence_ids: Iterable[int] | None = None,
    ) -> tuple[tuple[NeuralTrial, StimulusSpectrogram], ...]:
        """Pairs filtered by condition and/or sentence ids, in stored order."""
        wanted = None if sentence_ids is None else set(sentence_ids)
        out = []
        for trial, spec in self.pairs:
            if condition is not None and trial.condition != condition:
                continue
            if wanted is not None and trial.sentence_id not in wanted:
                continue
            out.append((trial, spec))
        return tuple(out)

    def subset(
        self,
        condition: ConditionLabel | None = None,
        sentence_ids: Iterable[int] | None = None,
    ) -> "Dataset":
        picked = self.select(condition, sentence_ids)
        if not picked:
            raise DataError("subset selects no pairs")
        return Dataset(pairs=picked)


@dataclass(frozen=True)
class SplitPlan:
    """Sentence-level train/validation/test assignment.

    Both repetitions of a sentence always land in the same fold, so no
    near-duplicate stimulus leaks across folds.
    """

    train_ids: frozenset[int]
    val_ids: frozenset[int]
    test_ids: frozenset[int]
    seed: int

    def __post_init__(self):
        folds = (self.train_ids, self.val_ids, self.test_ids)
        for i in range(3):
            for j in range(i + 1, 3):
                if folds[i] & folds[j]:
                    raise DataError("split folds are not disjoint")
        object.__setattr__(self, "train_ids", frozenset(self.train_ids))
        object.__setattr__(self, "val_ids", frozenset(self.val_ids))
        object.__setattr__(self, "test_ids", frozenset(self.test_ids))

    def all_ids(self) -> frozenset[int]:
        return self.train_ids | self.val_ids | self.test_ids


def _fold_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    # Largest-remainder rounding: sizes sum to n and match round(f * n)
    # whenever the rounded values already do.
    exact = [f * n for f in fractions]
    base = [int(math.floor(e)) for e in exact]
    remainder = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:remainder]:
        base[i] += 1
    return base


def make_split(
    dataset: Dataset,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitPlan:
    """Deterministic sentence-level split into train/val/test folds.

    A pure function of the dataset's sentence-id set, the fractions, and the
    seed. Fold sizes are the rounded fractions of N; every nonempty fraction
    must receive at least one sentence.
    """
    if len(fractions) != 3:
        raise ConfigError(f"fractions must be a 3-tuple, got {fractions!r}")
    if any(f < 0 for f in fractions):
        raise ConfigError(f"fractions must be >= 0, got {fractions!r}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {fractions!r}")
    ids = sorted(dataset.sentence_ids())
    n = len(ids)
    sizes = _fold_sizes(n, fractions)
    for frac, size, name in zip(fractions, sizes, ("train", "val", "test")):
        if frac > 0 and size == 0:
            raise ConfigError(
                f"N={n} is too small to give the {name} fold (fraction {frac}) "
                "at least one sentence"
            )
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(n)]
    train = frozenset(shuffled[: sizes[0]])
    val = frozenset(shuffled[sizes[0] : sizes[0] + sizes[1]])
    test = frozenset(shuffled[sizes[0] + sizes[1] :])
    return SplitPlan(train_ids=train, val_ids=val, test_ids=test, seed=seed)


# ---------------------------------------------------------------------------
# Manifest ingestion and emission
# ---------------------------------------------------------------------------
#
# A manifest is one UTF-8 JSON file:
#
# {
#   "freq_centers_hz": [ ... ],          # optional, shared by all entries
#   "entries": [
#     {"sentence_id": 0, "repetition": 0, "condition": "vocalized",
#      "trial": "trials/s000_r0_voc.f64",
#      "spectrogram": "specs/s000_r0_voc.f64",
#      "sample_rate_hz": 100.0},
#     ...
#   ]
# }
#
# Matrix paths are resolved relative to the manifest's directory.

_ENTRY_FIELDS = ("sentence_id", "repetition", "condition", "trial", "spectrogram", "sample_rate_hz")


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load and validate a dataset from a manifest file."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"{manifest_path}: manifest does not exist")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "entries" not in doc:
        raise DataError(f"{manifest_path}: manifest must be an object with an 'entries' list")
    entries = doc["entries"]
    if not isinstance(entries, list) or not entries:
        raise DataError(f"{manifest_path}: 'entries' must be a nonempty list")
    shared_centers = doc.get("freq_centers_hz")
    base = manifest_path.parent

    pairs = []
    for idx, entry in enumerate(entries):
        where = f"{manifest_path} entry {idx}"
        for fieldname in _ENTRY_FIELDS:
            if fieldname not in entry:
                raise DataError(f"{where}: missing field {fieldname!r}")
        trial_path = base / entry["trial"]
        spec_path = base / entry["spectrogram"]
        trial_mat = read_matrix(trial_path)
        spec_mat = read_matrix(spec_path)
        if not np.isfinite(trial_mat).all():
            raise DataError(f"{trial_path}: field 'trial' contains non-finite values")
        if not np.isfinite(spec_mat).all():
            raise DataError(f"{spec_path}: field 'spectrogram' contains non-finite values")
        if trial_mat.shape[1] != spec_mat.shape[1]:
            raise DataError(
                f"{where}: time alignment mismatch, trial file {trial_path} has "
                f"T={trial_mat.shape[1]} but spectrogram file {spec_path} has "
                f"T={spec_mat.shape[1]}"
            )
        centers = shared_centers if shared_centers is not None else default_freq_centers(spec_mat.shape[0])
        try:
            trial = NeuralTrial(
                data=trial_mat,
                sample_rate_hz=float(entry["sample_rate_hz"]),
                sentence_id=int(entry["sentence_id"]),
                repetition=int(entry["repetition"]),
                condition=ConditionLabel.from_string(entry["condition"]),
            )
            spec = StimulusSpectrogram(
                data=spec_mat,
                freq_centers_hz=centers,
                sample_rate_hz=float(entry["sample_rate_hz"]),
            )
        except DataError as exc:
            raise DataError(f"{where}: {exc}") from exc
        pairs.append((trial, spec))

    try:
        return Dataset(pairs=tuple(pairs))
    except DataError as exc:
        raise DataError(f"{manifest_path}: {exc}") from exc


def save_dataset(
    dataset: Dataset,
    manifest_path: str | Path,
    matrix_format: str = ".f64",
) -> Path:
    """Write a dataset (manifest plus matrix files) so it reloads bit-exactly.

    Matrices go into ``trials/`` and ``specs/`` next to the manifest.
    """
    if matrix_format not in (".csv", ".f64"):
        raise ConfigError(f"matrix_format must be '.csv' or '.f64', got {matrix_format!r}")
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    (base / "trials").mkdir(parents=True, exist_ok=True)
    (base / "specs").mkdir(parents=True, exist_ok=True)
    entries = []
    for trial, spec in dataset.pairs:
        stem = f"s{trial.sentence_id:04d}_r{trial.repetition}_{trial.condition.value}"
        trial_rel = f"trials/{stem}{matrix_format}"
        spec_rel = f"specs/{stem}{matrix_format}"
        write_matrix(base / trial_rel, trial.data)
        write_matrix(base / spec_rel, spec.data)
        entries.append(
            {
                "sentence_id": trial.sentence_id,
                "repetition": trial.repetition,
                "condition": trial.condition.value,
                "trial": trial_rel,
                "spectrogram": spec_rel,
                "sample_rate_hz": trial.sample_rate_hz,
            }
        )
    doc = {
        "freq_centers_hz": [float(v) for v in dataset.freq_centers_hz],
        "entries": entries,
    }
    manifest_path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return manifest_path
