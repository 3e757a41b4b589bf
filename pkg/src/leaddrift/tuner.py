"""Alert-threshold selection by maximising pointwise F1 on smoothed scores."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import TuningError

log = logging.getLogger(__name__)

GRID_SIZE = 256
GRID_EPS = 1e-9


def f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class ThresholdSearch:
    grid: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    tau: float
    best: int

    @property
    def best_f1(self) -> float:
        return float(self.f1[self.best])

    def summary(self) -> dict:
        return {
            "tau": self.tau,
            "f1": self.best_f1,
            "precision": float(self.precision[self.best]),
            "recall": float(self.recall[self.best]),
        }


def threshold_grid(S, size: int = GRID_SIZE) -> np.ndarray:
    """Evenly spaced quantiles of S plus one never-alert candidate above max(S)."""
    S = np.asarray(S, dtype=np.float64)
    q = np.quantile(S, np.linspace(0.0, 1.0, size))
    top = S.max()
    return np.unique(np.concatenate([q, [top + max(GRID_EPS, abs(top) * GRID_EPS)]]))


def pr_curve(S, y, thresholds):
    """Precision and recall of 1{S >= tau} against y for each candidate tau."""
    S = np.asarray(S, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    order = np.argsort(S, kind="stable")
    s_sorted = S[order]
    pos_sorted = y[order]
    # positives among scores >= tau = total minus positives strictly below tau
    pos_below = np.concatenate([[0], np.cumsum(pos_sorted)])
    first = np.searchsorted(s_sorted, thresholds, side="left")
    predicted = len(S) - first
    tp = pos_below[-1] - pos_below[first]
    n_pos = pos_below[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 0.0)
    recall = tp / n_pos
    return precision, recall


def candidate_thresholds(S) -> np.ndarray:
    """Every distinct score plus the never-alert candidate: an exact scan."""
    S = np.asarray(S, dtype=np.float64)
    top = S.max()
    return np.unique(np.concatenate([S, [top + max(GRID_EPS, abs(top) * GRID_EPS)]]))


def tune_threshold(S, y, grid_size: Optional[int] = None) -> ThresholdSearch:
    """Pick the threshold with maximal F1; ties go to the larger threshold.

    By default every distinct score is a candidate (O(n log n) through sorted
    cumulative counts). ``grid_size`` restricts the search to that many quantiles.
    """
    S = np.asarray(S, dtype=np.float64)
    y = np.asarray(y)
    if S.shape != y.shape or S.ndim != 1 or S.size == 0:
        raise TuningError(f"scores {S.shape} and labels {y.shape} are not aligned")
    if not np.any(y):
        raise TuningError("no positive labels in the tuning split; recall is undefined")
    grid = candidate_thresholds(S) if grid_size is None else threshold_grid(S, grid_size)
    precision, recall = pr_curve(S, y, grid)
    with np.errstate(invalid="ignore"):
        scores = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    if S.min() == S.max():
        # A constant score ranks nothing: fall back to the never-alert candidate.
        log.warning("constant score stream; threshold set above its maximum")
        best = len(grid) - 1
    else:
        best = int(np.flatnonzero(scores == scores.max())[-1])
    return ThresholdSearch(grid, precision, recall, scores, float(grid[best]), best)
