"""Reconstruction metrics: envelopes, correlations, and rank-based
sentence discriminability.

The retrieval analysis ranks, for every reconstructed envelope, all candidate
target envelopes by descending correlation and asks where the correct
sentence lands. The top-k curve collects the fraction of queries whose
correct candidate ranks within the best k; its summed exceedance over the
chance line k/N is the headline discriminability score, reported both raw
and normalized by the perfect-retrieval value (N - 1) / 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import StimulusSpectrogram
from .errors import DataError, UndefinedCorrelationError


def envelope(spec: StimulusSpectrogram | np.ndarray) -> np.ndarray:
    """Frequency-averaged spectrogram trace: values[t] = mean over bands."""
    data = spec.data if isinstance(spec, StimulusSpectrogram) else np.asarray(spec, dtype=np.float64)
    if data.ndim != 2:
        raise DataError(f"expected a 2-D spectrogram, got shape {data.shape}")
    return data.mean(axis=0)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two equal-length vectors.

    Raises :class:`UndefinedCorrelationError` when either input is constant;
    a silent 0 would hide degenerate reconstructions.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise DataError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise DataError("correlation needs at least 2 samples")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedCorrelationError("correlation undefined for zero-variance input")
    ac = a - a.mean()
    bc = b - b.mean()
    r = float(ac @ bc / np.sqrt((ac @ ac) * (bc @ bc)))
    return min(1.0, max(-1.0, r))


def spectrogram_correlation(pred: StimulusSpectrogram, target: StimulusSpectrogram) -> float:
    """Pearson correlation over all F*T spectrogram entries, flattened."""
    if pred.data.shape != target.data.shape:
        raise DataError(
            f"shape mismatch: {pred.data.shape} vs {target.data.shape}"
        )
    return pearson(pred.data.ravel(), target.data.ravel())


@dataclass(frozen=True)
class TopKCurve:
    """Top-k retrieval curve over an N-sentence gallery.

    ``topk[k-1]`` is the fraction of queries whose correct candidate ranks
    within the best k. ``auc_raw`` sums ``topk[k-1] - k/N`` over k;
    ``auc_norm`` divides by the perfect value (N - 1) / 2 so 1.0 is perfect
    retrieval, 0 is chance, and -1.0 is worst-case.
    """

    topk: np.ndarray
    n: int
    auc_raw: float
    auc_norm: float
    n_undefined: int = 0

    def __post_init__(self):
        topk = np.asarray(self.topk, dtype=np.float64)
        topk.setflags(write=False)
        if topk.shape != (self.n,):
            raise DataError(f"topk must have length n={self.n}, got {topk.shape}")
        if np.any(topk < 0) or np.any(topk > 1) or np.any(np.diff(topk) < 0):
            raise DataError("topk fractions must be nondecreasing within [0, 1]")
        if topk[-1] != 1.0:
            raise DataError("topk at k=N must be exactly 1")
        object.__setattr__(self, "topk", topk)

    def chance(self, k: int) -> float:
        return k / self.n


def _curve_from_topk(topk: np.ndarray, n: int, n_undefined: int = 0) -> TopKCurve:
    # sum(k/N for k=1..N) == (N+1)/2 exactly; using the closed form keeps
    # the perfect curve's raw score exact in floating point.
    auc_raw = float(topk.sum() - (n + 1) / 2.0)
    auc_norm = float(auc_raw / ((n - 1) / 2.0))
    return TopKCurve(topk=topk, n=n, auc_raw=auc_raw, auc_norm=auc_norm, n_undefined=n_undefined)


def rank_curve_from_scores(
    scores: np.ndarray,
    correct_column: Sequence[int],
    n_undefined: int = 0,
) -> TopKCurve:
    """Top-k curve from a (queries, candidates) score matrix.

    NaN marks an undefined comparison and ranks below every defined score.
    Ties are pessimistic: the correct candidate places after every candidate
    sharing its score.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise DataError(f"score matrix must be 2-D, got shape {scores.shape}")
    n_queries, n_candidates = scores.shape
    if n_candidates < 2:
        raise DataError("need at least 2 candidates for a rank analysis")
    correct = np.asarray(list(correct_column), dtype=int)
    if correct.shape != (n_queries,):
        raise DataError("one correct column index is required per query")
    ranks = np.empty(n_queries, dtype=int)
    for q in range(n_queries):
        row = scores[q]
        own = row[correct[q]]
        if np.isnan(own):
            ranks[q] = n_candidates
            continue
        others = np.delete(row, correct[q])
        defined = others[~np.isnan(others)]
        # pessimistic: strictly-better plus every tied competitor
        ranks[q] = 1 + int(np.sum(defined > own)) + int(np.sum(defined == own))
    topk = np.array(
        [np.mean(ranks <= k) for k in range(1, n_candidates + 1)], dtype=np.float64
    )
    return _curve_from_topk(topk, n_candidates, n_undefined)


def rank_analysis(
    predictions: Sequence[tuple[int, np.ndarray]],
    candidates: Sequence[tuple[int, np.ndarray]],
) -> TopKCurve:
    """Rank every predicted envelope against a gallery of target envelopes.

    ``predictions`` holds (sentence_id, envelope) queries, one or more per
    sentence; ``candidates`` holds exactly one (sentence_id, envelope) per
    sentence over the same id set. Envelopes of unequal length are truncated
    to the shorter before correlating. Undefined comparisons score as
    rank-worst and are tallied in ``n_undefined``.
    """
    if len(candidates) < 2:
        raise DataError("need at least 2 candidate sentences")
    cand_ids = [int(i) for i, _ in candidates]
    if len(set(cand_ids)) != len(cand_ids):
        raise DataError("candidate sentence ids must be unique")
    pred_ids = {int(i) for i, _ in predictions}
    if pred_ids != set(cand_ids):
        raise DataError("prediction and candidate sentence-id sets differ")

    col_of = {sid: j for j, sid in enumerate(cand_ids)}
    scores = np.full((len(predictions), len(candidates)), np.nan)
    n_undefined = 0
    for q, (sid, pred_env) in enumerate(predictions):
        pred_env = np.asarray(pred_env, dtype=np.float64).ravel()
        for j, (_, cand_env) in enumerate(candidates):
            cand_env = np.asarray(cand_env, dtype=np.float64).ravel()
            n = min(pred_env.size, cand_env.size)
            try:
                scores[q, j] = pearson(pred_env[:n], cand_env[:n])
            except (UndefinedCorrelationError, DataError):
                n_undefined += 1
    correct = [col_of[int(sid)] for sid, _ in predictions]
    return rank_curve_from_scores(scores, correct, n_undefined)


def auc_above_chance(curve: TopKCurve) -> tuple[float, float]:
    """Recompute (auc_raw, auc_norm) from a curve's stored fractions."""
    recomputed = _curve_from_topk(curve.topk, curve.n, curve.n_undefined)
    return recomputed.auc_raw, recomputed.auc_norm
