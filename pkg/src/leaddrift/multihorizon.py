"""Time-to-failure bracketing from a set of models trained at different horizons."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detector import DEFAULT_EMA_WINDOW, EmaState, ema
from .errors import ConfigError
from .model import MlpModel

DEFAULT_HORIZONS = (120, 60, 30)


@dataclass(frozen=True)
class TtfEstimate:
    lower_min: float
    upper_min: float
    active_horizons: frozenset
    consistent: bool = True

    def to_dict(self):
        return {
            "lower": self.lower_min,
            "upper": None if math.isinf(self.upper_min) else self.upper_min,
            "active": sorted(self.active_horizons, reverse=True),
            "consistent": self.consistent,
        }


def infer_ttf(active, horizons: Sequence[int] = DEFAULT_HORIZONS) -> Optional[TtfEstimate]:
    """Bracket time-to-failure from which horizon models are alerting.

    The smallest active horizon H bounds TTF from above; the next smaller
    horizon (0 if none) bounds it from below: TTF in (H_next, H]. The pattern is
    consistent only if every horizon longer than the smallest active one is
    active too.
    """
    active = frozenset(int(h) for h in active)
    hs = sorted(int(h) for h in horizons)
    if not active <= set(hs):
        raise ConfigError(f"active horizons {sorted(active)} not in {hs}")
    if not active:
        return None
    tightest = min(active)
    pos = hs.index(tightest)
    lower = float(hs[pos - 1]) if pos > 0 else 0.0
    consistent = all(h in active for h in hs[pos:])
    return TtfEstimate(lower, float(tightest), active, consistent)


@dataclass
class HorizonMember:
    horizon: int
    model: MlpModel
    tau: float
    ema: EmaState = field(default=None)

    def __post_init__(self):
        if self.ema is None:
            self.ema = EmaState(DEFAULT_EMA_WINDOW)


class HorizonEnsemble:
    """Members ordered by strictly decreasing horizon, each with its own EMA and threshold."""

    def __init__(self, members: Sequence[HorizonMember], window: int = DEFAULT_EMA_WINDOW):
        hs = [m.horizon for m in members]
        if not members or any(a <= b for a, b in zip(hs, hs[1:])):
            raise ConfigError(f"horizons must be strictly decreasing, got {hs}")
        self.window = window
        self.members = list(members)
        for m in self.members:
            m.ema = EmaState(window)

    @property
    def horizons(self) -> tuple:
        return tuple(m.horizon for m in self.members)

    def reset(self):
        for m in self.members:
            m.ema.reset()

    def step(self, x_raw) -> tuple[frozenset, Optional[TtfEstimate]]:
        """Feed one raw feature row to every member; return the active set and TTF."""
        active = set()
        for m in self.members:
            S = m.ema.update(m.model.score(x_raw))
            if S >= m.tau:
                active.add(m.horizon)
        active = frozenset(active)
        return active, infer_ttf(active, self.horizons)


@dataclass
class EnsembleRun:
    t_index: np.ndarray
    smoothed: dict  # horizon -> smoothed score array
    active: np.ndarray  # (n, n_members) bool, columns in ensemble order
    horizons: tuple

    def active_sets(self):
        return [frozenset(h for h, a in zip(self.horizons, row) if a) for row in self.active]

    def estimates(self):
        return [infer_ttf(s, self.horizons) for s in self.active_sets()]

    def first_activation(self, start: int, stop: int) -> dict:
        """Earliest minute in [start, stop] each horizon is active, or None."""
        sel = (self.t_index >= start) & (self.t_index <= stop)
        out = {}
        for j, h in enumerate(self.horizons):
            hit = np.flatnonzero(self.active[sel, j])
            out[h] = int(self.t_index[sel][hit[0]]) if len(hit) else None
        return out

    def timeline(self) -> list[dict]:
        rows = []
        for t, s, est in zip(self.t_index, self.active_sets(), self.estimates()):
            rows.append({"t": int(t), "active": sorted(s, reverse=True), "ttf": None if est is None else est.to_dict()})
        return rows


def run_ensemble(ensemble: HorizonEnsemble, X_raw, t_index=None) -> EnsembleRun:
    """Batch equivalent of calling ``step`` on every row from a fresh state."""
    X_raw = np.asarray(X_raw, dtype=np.float64)
    t_index = np.arange(len(X_raw)) if t_index is None else np.asarray(t_index)
    smoothed = {}
    cols = []
    for m in ensemble.members:
        S = ema(m.model.score(X_raw), ensemble.window)
        smoothed[m.horizon] = S
        cols.append(S >= m.tau)
    return EnsembleRun(t_index, smoothed, np.column_stack(cols), ensemble.horizons)


def activation_order_holds(first: dict, horizons: Sequence[int] = DEFAULT_HORIZONS) -> bool:
    """True when every horizon fired and longer horizons fired no later than shorter ones."""
    times = [first.get(h) for h in sorted(horizons, reverse=True)]
    if any(t is None for t in times):
        return False
    return all(a <= b for a, b in zip(times, times[1:]))
