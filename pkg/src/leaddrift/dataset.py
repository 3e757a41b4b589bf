"""Feature construction, fixed-horizon labels and leakage-safe fold splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .telemetry import KPI_NAMES, EpisodeAnnotation, TelemetryTrace

# Order is load-bearing: the model, explainer and baselines index by position.
FEATURE_NAMES = KPI_NAMES + ("cpu_delta", "serv_resp_delta")
N_FEATURES = len(FEATURE_NAMES)
DEFAULT_HORIZON = 60
STD_FLOOR = 1e-8


def first_difference(values: np.ndarray, t_index: np.ndarray) -> np.ndarray:
    """First-order difference that restarts at 0 wherever the minute index jumps.

    A row whose predecessor is not the previous minute (split start, or a gap
    left by a removed block) has no usable predecessor, so its delta is 0.
    """
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros_like(values)
    if len(values) > 1:
        contiguous = np.diff(t_index) == 1
        out[1:] = np.where(contiguous, np.diff(values), 0.0)
    return out


def featurize(trace: TelemetryTrace) -> np.ndarray:
    """(n, 7) feature matrix for one split."""
    k = trace.kpis()
    cpu_delta = first_difference(trace.cpu_pct, trace.t)
    serv_delta = first_difference(trace.serv_resp, trace.t)
    return np.column_stack([k, cpu_delta, serv_delta])


def assign_labels(t_index, annotations: Sequence[EpisodeAnnotation], horizon: int) -> np.ndarray:
    """y_t = 1 iff some failure time lies in [t, t + horizon]."""
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    t_index = np.asarray(t_index)
    y = np.zeros(len(t_index), dtype=np.int8)
    for ep in annotations:
        if ep.is_failure:
            y[(t_index <= ep.t_fail) & (t_index >= ep.t_fail - horizon)] = 1
    return y


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    t_index: np.ndarray
    horizon_min: int

    def __len__(self):
        return len(self.t_index)


def build_dataset(trace: TelemetryTrace, annotations, horizon: int = DEFAULT_HORIZON) -> LabeledDataset:
    return LabeledDataset(featurize(trace), assign_labels(trace.t, annotations, horizon), trace.t.copy(), horizon)


@dataclass(frozen=True)
class SplitPlan:
    """Contiguous, disjoint row blocks covering the trace, one per fold."""

    k: int
    blocks: tuple  # ((start, stop), ...) row ranges

    @classmethod
    def contiguous(cls, n_rows: int, k: int = 5) -> "SplitPlan":
        if k < 2:
            raise ConfigError(f"need at least 2 folds, got {k}")
        if n_rows < 2 * k:
            raise ConfigError(f"{n_rows} rows cannot form {k} folds of >= 2 rows")
        edges = np.linspace(0, n_rows, k + 1).round().astype(int)
        return cls(k, tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])))

    def validate(self, n_rows: int) -> None:
        if self.k < 2 or len(self.blocks) != self.k:
            raise ConfigError("split plan needs k >= 2 blocks")
        pos = 0
        for a, b in self.blocks:
            if a != pos:
                raise ConfigError("split blocks must be contiguous and disjoint")
            if b - a < 2:
                raise ConfigError("every split block needs at least 2 rows")
            pos = b
        if pos != n_rows:
            raise ConfigError(f"split plan covers {pos} rows, trace has {n_rows}")


@dataclass
class FoldSplit:
    fold: int
    train: TelemetryTrace
    test: TelemetryTrace
    X_train: np.ndarray
    X_test: np.ndarray


def _concat(traces: list[TelemetryTrace]) -> TelemetryTrace:
    return TelemetryTrace(
        np.concatenate([tr.t for tr in traces]),
        *(np.concatenate([getattr(tr, k) for tr in traces]) for k in KPI_NAMES),
    )


def split_then_featurize(trace: TelemetryTrace, plan: SplitPlan) -> list[FoldSplit]:
    """Split raw KPIs into folds first, then compute features inside each split."""
    plan.validate(len(trace))
    folds = []
    for i, (a, b) in enumerate(plan.blocks):
        test = trace.slice(a, b)
        train = _concat([trace.slice(s, e) for j, (s, e) in enumerate(plan.blocks) if j != i])
        folds.append(FoldSplit(i, train, test, featurize(train), featurize(test)))
    return folds


def fold_of_minute(plan: SplitPlan, trace: TelemetryTrace, minute: int) -> int:
    for i, (a, b) in enumerate(plan.blocks):
        if trace.t[a] <= minute <= trace.t[b - 1]:
            return i
    return -1


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_standardizer(X) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot fit a standardizer on empty input")
    return Standardizer(X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR))


def apply_standardizer(X, stats: Standardizer) -> np.ndarray:
    return stats.apply(X)


def export_dataset(ds: LabeledDataset, path) -> Path:
    """Write features plus ``y`` and ``t`` columns as CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(FEATURE_NAMES) + ["y", "t"])
        for row, y, t in zip(ds.X, ds.y, ds.t_index):
            w.writerow([f"{v:.6f}" for v in row] + [int(y), int(t)])
    return path
