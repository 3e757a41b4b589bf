"""Comparison scorers: an importance-weighted KPI deviation heuristic and a
Euclidean distance-to-healthy-state detector.

Both map raw feature rows to a non-negative score and are then pushed through
the same EMA, threshold tuning and first-crossing code as the learned model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._seeding import make_rng
from .dataset import FEATURE_NAMES, N_FEATURES
from .detector import DEFAULT_EMA_WINDOW, stream_detect
from .errors import DataError
from .explainer import default_background, exact_shapley
from .model import MlpModel

log = logging.getLogger(__name__)

SCALE_FLOOR = 1e-8
IMPORTANCE_SAMPLE = 512
# Distance compares KPI states only, so the two delta columns are excluded.
DISTANCE_FEATURES = tuple(range(5))


@dataclass
class WeightedKpiScorer:
    weights: np.ndarray
    reference: np.ndarray
    scale: np.ndarray

    def __call__(self, X) -> np.ndarray:
        return score_weighted(self, X)

    def to_dict(self):
        return {
            "weights": dict(zip(FEATURE_NAMES, self.weights.tolist())),
            "reference": self.reference.tolist(),
            "scale": self.scale.tolist(),
        }


@dataclass
class DistanceScorer:
    target: np.ndarray
    scale: np.ndarray
    features: tuple = DISTANCE_FEATURES

    def __call__(self, X) -> np.ndarray:
        return score_distance(self, X)


def _iqr(X) -> np.ndarray:
    # Robust to the outage rows that sit among the y=0 rows.
    q75, q25 = np.percentile(X, [75, 25], axis=0)
    return np.maximum(q75 - q25, SCALE_FLOOR)


def normalize_importances(importances) -> np.ndarray:
    imp = np.asarray(importances, dtype=np.float64)
    total = imp.sum()
    if not total > 0:
        log.warning("all feature importances are zero; using uniform weights")
        return np.full(len(imp), 1.0 / len(imp))
    return imp / total


def shapley_importances(model: MlpModel, X_raw, seed: int = 0, n_sample: int = IMPORTANCE_SAMPLE) -> np.ndarray:
    """Mean |phi| per feature over a seeded sample of rows."""
    X_raw = np.asarray(X_raw, dtype=np.float64)
    rng = make_rng(seed, "importance-sample")
    rows = rng.choice(len(X_raw), size=min(n_sample, len(X_raw)), replace=False)
    Xs = model.standardizer.apply(X_raw[rows]) if model.standardizer is not None else X_raw[rows]
    bg = default_background(model)
    return np.mean([np.abs(exact_shapley(model, x, bg).phi) for x in Xs], axis=0)


def fit_weighted_kpi(model: MlpModel, X_raw, y, seed: int = 0) -> WeightedKpiScorer:
    X_raw = np.asarray(X_raw, dtype=np.float64)
    healthy = X_raw[np.asarray(y) == 0]
    if len(healthy) == 0:
        raise DataError("no healthy (y=0) rows to fit the reference state")
    weights = normalize_importances(shapley_importances(model, X_raw, seed))
    return WeightedKpiScorer(weights, np.median(healthy, axis=0), _iqr(healthy))


def score_weighted(scorer: WeightedKpiScorer, X) -> np.ndarray:
    """sum_i w_i |x_i - ref_i| / scale_i on raw features."""
    X = np.asarray(X, dtype=np.float64)
    return (np.abs(X - scorer.reference) / scorer.scale) @ scorer.weights


def fit_distance(X_raw, y) -> DistanceScorer:
    X_raw = np.asarray(X_raw, dtype=np.float64)
    healthy = X_raw[np.asarray(y) == 0][:, DISTANCE_FEATURES]
    if len(healthy) == 0:
        raise DataError("no healthy (y=0) rows to fit the target state")
    return DistanceScorer(healthy.mean(axis=0), _iqr(healthy))


def score_distance(scorer: DistanceScorer, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] == N_FEATURES:
        X2 = X2[:, list(scorer.features)]
    z = np.abs((X2 - scorer.target) / scorer.scale)
    # Rescale by the largest component so tiny deviations do not underflow to 0.
    m = z.max(axis=1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    d = m[:, 0] * np.sqrt(((z / safe) ** 2).sum(axis=1))
    return d[0] if single else d


def run_baseline(scorer, X_raw, tau: float, window: int = DEFAULT_EMA_WINDOW, t_index=None):
    """Score rows, smooth, and return rising-edge alerts (same path as the model)."""
    return stream_detect(scorer(X_raw), tau, window, t_index)
