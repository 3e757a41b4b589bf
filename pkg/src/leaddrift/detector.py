"""EMA smoothing, first-crossing alerts and episode scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError
from .telemetry import MINUTES_PER_DAY, EpisodeAnnotation

DEFAULT_EMA_WINDOW = 5


def ema_alpha(window: int) -> float:
    if window < 1:
        raise ConfigError(f"EMA window must be >= 1, got {window}")
    return 2.0 / (window + 1)


class EmaState:
    """Streaming EMA. The first sample initialises the average."""

    def __init__(self, window: int = DEFAULT_EMA_WINDOW):
        self.window = window
        self.alpha = ema_alpha(window)
        self.value: Optional[float] = None

    @property
    def initialized(self) -> bool:
        return self.value is not None

    def update(self, s: float) -> float:
        s = float(s)
        if not math.isfinite(s):
            raise DataError(f"non-finite score {s!r} fed to EMA")
        if self.value is None:
            self.value = s
        else:
            self.value = self.alpha * s + (1 - self.alpha) * self.value
        return self.value

    def reset(self):
        self.value = None


def ema(scores, window: int = DEFAULT_EMA_WINDOW) -> np.ndarray:
    """Vectorised equivalent of feeding ``scores`` through a fresh ``EmaState``."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        return s.copy()
    if not np.all(np.isfinite(s)):
        raise DataError("non-finite score fed to EMA")
    a = ema_alpha(window)
    out, _ = lfilter([a], [1.0, a - 1.0], s[1:], zi=[(1 - a) * s[0]])
    return np.concatenate([s[:1], out])


@dataclass(frozen=True)
class AlertEvent:
    t: int
    smoothed_score: float
    kind: str = "rising_edge"

    def to_dict(self):
        return {"t": self.t, "S": self.smoothed_score}


def rising_edges(smoothed, tau: float, t_index=None) -> list[AlertEvent]:
    """Events where S crosses up through tau. A first sample at or above tau also fires."""
    if not math.isfinite(tau):
        raise ConfigError(f"threshold must be finite, got {tau}")
    S = np.asarray(smoothed, dtype=np.float64)
    t_index = np.arange(len(S)) if t_index is None else np.asarray(t_index)
    above = S >= tau
    prev = np.concatenate([[False], above[:-1]])
    idx = np.flatnonzero(above & ~prev)
    return [AlertEvent(int(t_index[i]), float(S[i])) for i in idx]


def stream_detect(scores, tau: float, window: int = DEFAULT_EMA_WINDOW, t_index=None) -> list[AlertEvent]:
    """Smooth raw scores and return the rising-edge alerts."""
    return rising_edges(ema(scores, window), tau, t_index)


@dataclass(frozen=True)
class EpisodeOutcome:
    episode: EpisodeAnnotation
    detected: bool
    t_alert: Optional[int]
    lead_time_min: float

    def to_dict(self):
        return {
            "t_start": self.episode.t_start,
            "t_fail": self.episode.t_fail,
            "t_end": self.episode.t_end,
            "detected": self.detected,
            "t_alert": self.t_alert,
            "lead_time_min": self.lead_time_min,
        }


def lead_time(t_fail: int, t_alert: int) -> float:
    return float(max(t_fail - t_alert, 0))


def score_episodes(
    events: Sequence[AlertEvent],
    annotations: Sequence[EpisodeAnnotation],
    scored: Optional[Sequence[EpisodeAnnotation]] = None,
) -> tuple[list[EpisodeOutcome], int]:
    """Attribute alert events to failure episodes and count false positives.

    An event inside any failure window [t_start, t_end] is never a false
    positive. Events elsewhere, benign high-load windows included, are. Episodes
    are detected by their earliest event in [t_start, t_end]; an event after
    t_fail still counts, with zero lead.

    ``scored`` restricts which failure episodes get an outcome (e.g. those whose
    t_fail lies in the evaluated fold); every failure window in ``annotations``
    still exempts its events from the false-positive count.
    """
    failures = [ep for ep in annotations if ep.is_failure]
    times = np.array([e.t for e in events], dtype=np.int64)
    if len(times) > 1 and np.any(np.diff(times) < 0):
        raise DataError("alert events must be time-sorted")
    in_window = np.zeros(len(times), dtype=bool)
    for ep in failures:
        in_window |= (times >= ep.t_start) & (times <= ep.t_end)
    fp_count = int(np.count_nonzero(~in_window))

    outcomes = []
    for ep in (failures if scored is None else [e for e in scored if e.is_failure]):
        hit = np.flatnonzero((times >= ep.t_start) & (times <= ep.t_end))
        if len(hit):
            t_alert = int(times[hit[0]])
            outcomes.append(EpisodeOutcome(ep, True, t_alert, lead_time(ep.t_fail, t_alert)))
        else:
            outcomes.append(EpisodeOutcome(ep, False, None, 0.0))
    return outcomes, fp_count


def fp_per_day(fp_count: int, n_minutes: int) -> float:
    if n_minutes <= 0:
        raise DataError("evaluated duration must be positive")
    return fp_count / (n_minutes / MINUTES_PER_DAY)
