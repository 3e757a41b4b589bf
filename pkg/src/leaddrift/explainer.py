"""Exact Shapley attributions by enumerating every feature coalition.

With seven inputs there are only 128 coalitions, so all of them go through the
model in a single batch. Absent features take their background value
(interventional value function).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Callable, Union

import numpy as np

from .dataset import FEATURE_NAMES
from .errors import DataError
from .model import MlpModel

ModelLike = Union[MlpModel, Callable[[np.ndarray], np.ndarray]]


@dataclass
class Attribution:
    phi: np.ndarray
    base_value: float
    instance_output: float
    feature_names: tuple = FEATURE_NAMES

    def as_dict(self) -> dict:
        return {name: float(v) for name, v in zip(self.feature_names, self.phi)}


@lru_cache(maxsize=None)
def _coalition_tables(n: int):
    masks = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
    sizes = masks.sum(axis=1)
    # weight for adding a feature to a coalition of size s: s!(n-s-1)!/n!
    w = np.array([factorial(s) * factorial(n - s - 1) / factorial(n) for s in range(n)])
    return masks, sizes, w


def _as_fn(model: ModelLike):
    if isinstance(model, MlpModel):
        return model.forward
    return model


def exact_shapley(model: ModelLike, x, background) -> Attribution:
    """Shapley values of ``model`` at ``x`` relative to a single background point.

    ``x`` and ``background`` must live in the model's input space (standardized
    features for an ``MlpModel``).
    """
    x = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if x.ndim != 1 or x.shape != background.shape:
        raise DataError(f"x {x.shape} and background {background.shape} must be equal-length vectors")
    n = x.shape[0]
    if isinstance(model, MlpModel) and n != model.n_inputs:
        raise DataError(f"model expects {model.n_inputs} features, got {n}")
    masks, sizes, w = _coalition_tables(n)
    composites = np.where(masks, x, background)
    v = np.asarray(_as_fn(model)(composites), dtype=np.float64).reshape(-1)

    phi = np.zeros(n)
    for i in range(n):
        without = ~masks[:, i]
        idx = np.flatnonzero(without)
        with_i = idx | (1 << i)
        phi[i] = np.sum(w[sizes[idx]] * (v[with_i] - v[idx]))
    names = FEATURE_NAMES if n == len(FEATURE_NAMES) else tuple(f"x{i}" for i in range(n))
    return Attribution(phi, float(v[0]), float(v[-1]), names)


def default_background(model: MlpModel) -> np.ndarray:
    """Mean training feature vector in standardized space, i.e. the origin."""
    return np.zeros(model.n_inputs)


def explain_alert(model: MlpModel, raw_row, t: int = None, background=None) -> dict:
    """Attribution record for one alert row, sorted by |phi| descending."""
    raw_row = np.asarray(raw_row, dtype=np.float64)
    x = model.standardizer.apply(raw_row) if model.standardizer is not None else raw_row
    bg = default_background(model) if background is None else np.asarray(background, dtype=np.float64)
    attr = exact_shapley(model, x, bg)
    order = sorted(range(len(attr.phi)), key=lambda i: (-abs(attr.phi[i]), i))
    return {
        "t": None if t is None else int(t),
        "base": attr.base_value,
        "output": attr.instance_output,
        "phi": attr.as_dict(),
        "ranked": [
            {"feature": attr.feature_names[i], "phi": float(attr.phi[i]), "value": float(raw_row[i])}
            for i in order
        ],
    }


def format_attribution(record: dict) -> str:
    lines = [f"risk {record['output']:.4f} (base {record['base']:.4f})"]
    for item in record["ranked"]:
        lines.append(f"  {item['feature']:<16} {item['phi']:+.4f}  (value {item['value']:.4f})")
    return "\n".join(lines)
