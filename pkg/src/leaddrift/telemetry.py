"""Synthetic collector-service telemetry with annotated drift episodes.

The generator produces one row per minute with five KPIs. CPU and RAM follow a
daily sinusoid, storage creeps upward, and the two service-health fractions sit
near 1.0. Two kinds of episode are injected on top of that baseline:

* ``imbalance_failure``: CPU ramps up while RAM ramps down, the health KPIs
  drift down and get noisier, then collapse at ``t_fail`` for a short outage and
  recover at ``t_end`` (service restart).
* ``benign_high_load``: CPU and RAM are elevated while service health stays
  normal. These are hard negatives.

Episode counts are ``n // 1440`` failures and ``n // 2880`` benign periods.
Start times are drawn uniformly under a non-overlap guard band.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from ._seeding import make_rng
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

KPI_NAMES = ("cpu_pct", "ram_pct", "storage_pct", "net_conn", "serv_resp")
KPI_BOUNDS = {
    "cpu_pct": (0.0, 100.0),
    "ram_pct": (0.0, 100.0),
    "storage_pct": (0.0, 100.0),
    "net_conn": (0.0, 1.0),
    "serv_resp": (0.0, 1.0),
}
IMBALANCE = "imbalance_failure"
BENIGN = "benign_high_load"
MINUTES_PER_DAY = 1440
CSV_DECIMALS = 6

# Imbalance shaping amplitudes, reached at t_fail.
DRIFT_CPU_RISE = 30.0
DRIFT_RAM_DROP = 25.0
DRIFT_HEALTH_DROP = 0.1
DRIFT_HEALTH_NOISE = 0.1
# Health degradation ramps over this many minutes before t_fail (capped at the
# drift length), so it is locked to time-to-failure rather than drift progress.
HEALTH_ONSET_MINUTES = 90
OUTAGE_MINUTES = 10
OUTAGE_LEVEL = 0.02
STORAGE_START = 30.0
STORAGE_END = 70.0
# Benign plateau offsets and edge length.
BENIGN_CPU_RISE = 40.0
BENIGN_RAM_RISE = 35.0
BENIGN_EDGE_MINUTES = 10


@dataclass(frozen=True)
class KpiSample:
    t: int
    cpu_pct: float
    ram_pct: float
    storage_pct: float
    net_conn: float
    serv_resp: float


@dataclass
class TelemetryTrace:
    """Minute-indexed KPI columns, stored as aligned numpy arrays."""

    t: np.ndarray
    cpu_pct: np.ndarray
    ram_pct: np.ndarray
    storage_pct: np.ndarray
    net_conn: np.ndarray
    serv_resp: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        n = len(self.t)
        for name in KPI_NAMES:
            col = np.asarray(getattr(self, name), dtype=np.float64)
            if col.shape != (n,):
                raise DataError(f"column {name} has shape {col.shape}, expected ({n},)")
            setattr(self, name, col)

    @property
    def n_minutes(self) -> int:
        return len(self.t)

    def __len__(self) -> int:
        return len(self.t)

    def kpis(self) -> np.ndarray:
        """KPI matrix of shape (n, 5) in ``KPI_NAMES`` order."""
        return np.column_stack([getattr(self, k) for k in KPI_NAMES])

    def samples(self) -> Iterator[KpiSample]:
        for i in range(len(self.t)):
            yield KpiSample(int(self.t[i]), *(float(getattr(self, k)[i]) for k in KPI_NAMES))

    def slice(self, start: int, stop: int) -> "TelemetryTrace":
        return TelemetryTrace(self.t[start:stop], *(getattr(self, k)[start:stop] for k in KPI_NAMES))

    def __eq__(self, other):
        if not isinstance(other, TelemetryTrace):
            return NotImplemented
        return np.array_equal(self.t, other.t) and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in KPI_NAMES
        )


@dataclass(frozen=True)
class EpisodeAnnotation:
    kind: str
    t_start: int
    t_end: int
    t_fail: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (IMBALANCE, BENIGN):
            raise DataError(f"unknown episode kind {self.kind!r}")
        if not self.t_start < self.t_end:
            raise DataError(f"episode needs t_start < t_end, got {self.t_start}, {self.t_end}")
        if self.kind == IMBALANCE:
            if self.t_fail is None or not self.t_start < self.t_fail <= self.t_end:
                raise DataError(f"imbalance episode needs t_start < t_fail <= t_end: {self}")
        elif self.t_fail is not None:
            raise DataError("benign episodes carry no t_fail")

    @property
    def is_failure(self) -> bool:
        return self.kind == IMBALANCE

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t_start": self.t_start, "t_end": self.t_end, "t_fail": self.t_fail}

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeAnnotation":
        t_fail = d.get("t_fail")
        return cls(d["kind"], int(d["t_start"]), int(d["t_end"]), None if t_fail is None else int(t_fail))


@dataclass(frozen=True)
class GeneratorConfig:
    n_minutes: int = 100_000
    seed: int = 0
    guard_band: int = 120
    drift_duration_range: tuple = (90, 180)
    benign_duration_range: tuple = (60, 180)
    noise_std: dict = field(
        default_factory=lambda: {
            "cpu_pct": 3.0,
            "ram_pct": 3.0,
            "storage_pct": 0.5,
            "net_conn": 0.01,
            "serv_resp": 0.01,
        }
    )
    max_placement_attempts: int = 1000

    def validate(self) -> None:
        if self.n_minutes < MINUTES_PER_DAY:
            raise ConfigError(f"n_minutes must be >= {MINUTES_PER_DAY}, got {self.n_minutes}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.guard_band < 0:
            raise ConfigError("guard_band must be non-negative")
        for name, rng in (("drift", self.drift_duration_range), ("benign", self.benign_duration_range)):
            lo, hi = rng
            if lo < 2 or hi < lo:
                raise ConfigError(f"{name}_duration_range {rng} is empty or too short")
        missing = set(KPI_NAMES) - set(self.noise_std)
        if missing:
            raise ConfigError(f"noise_std missing {sorted(missing)}")
        if any(v < 0 for v in self.noise_std.values()):
            raise ConfigError("noise_std values must be non-negative")
        if self.max_placement_attempts < 1:
            raise ConfigError("max_placement_attempts must be >= 1")


@dataclass(frozen=True)
class GenerationMetadata:
    n_minutes: int
    seed: int
    requested_failures: int
    requested_benign: int
    shortfall: int


def expected_episode_counts(n_minutes: int) -> tuple[int, int]:
    return n_minutes // MINUTES_PER_DAY, n_minutes // (2 * MINUTES_PER_DAY)


def _overlaps(start, end, placed, guard):
    for s, e in placed:
        if start <= e + guard and s - guard <= end:
            return True
    return False


def _place_episodes(cfg: GeneratorConfig, rng: np.random.Generator):
    n = cfg.n_minutes
    n_fail, n_benign = expected_episode_counts(n)
    placed: list[tuple[int, int]] = []
    episodes: list[EpisodeAnnotation] = []
    shortfall = 0
    plan = [IMBALANCE] * n_fail + [BENIGN] * n_benign
    for kind in plan:
        for _ in range(cfg.max_placement_attempts):
            if kind == IMBALANCE:
                lo, hi = cfg.drift_duration_range
                drift = int(rng.integers(lo, hi + 1))
                length = drift + OUTAGE_MINUTES
            else:
                lo, hi = cfg.benign_duration_range
                length = int(rng.integers(lo, hi + 1))
            if length > n - 1:
                continue
            start = int(rng.integers(0, n - length))
            end = start + length
            if _overlaps(start, end, placed, cfg.guard_band):
                continue
            placed.append((start, end))
            if kind == IMBALANCE:
                episodes.append(EpisodeAnnotation(kind, start, end, start + drift))
            else:
                episodes.append(EpisodeAnnotation(kind, start, end))
            break
        else:
            shortfall += 1
            log.warning("could not place %s episode after %d attempts", kind, cfg.max_placement_attempts)
    episodes.sort(key=lambda e: e.t_start)
    meta = GenerationMetadata(n, cfg.seed, n_fail, n_benign, shortfall)
    return episodes, meta


def _quantize(a: np.ndarray) -> np.ndarray:
    # Round through the CSV text form so exported traces re-import bit-identically.
    return np.array([float(s) for s in np.char.mod(f"%.{CSV_DECIMALS}f", a)])


def generate(config: GeneratorConfig) -> tuple[TelemetryTrace, list[EpisodeAnnotation], GenerationMetadata]:
    """Generate a trace and its episode annotations. Pure function of ``config``."""
    config.validate()
    n = config.n_minutes
    place_rng = make_rng(config.seed, "placement")
    noise_rng = make_rng(config.seed, "noise")
    sd = config.noise_std

    t = np.arange(n)
    phase = 2 * math.pi * t / MINUTES_PER_DAY
    cpu = 45 + 15 * np.sin(phase) + noise_rng.normal(0, sd["cpu_pct"], n)
    ram = 55 + 10 * np.sin(phase + math.pi / 4) + noise_rng.normal(0, sd["ram_pct"], n)
    storage = STORAGE_START + (STORAGE_END - STORAGE_START) * t / max(n - 1, 1) + noise_rng.normal(0, sd["storage_pct"], n)
    net = 0.99 + noise_rng.normal(0, sd["net_conn"], n)
    serv = 0.99 + noise_rng.normal(0, sd["serv_resp"], n)

    episodes, meta = _place_episodes(config, place_rng)
    for ep in episodes:
        if ep.is_failure:
            idx = np.arange(ep.t_start, ep.t_fail)
            progress = (idx - ep.t_start) / (ep.t_fail - ep.t_start)
            cpu[idx] += DRIFT_CPU_RISE * progress
            ram[idx] -= DRIFT_RAM_DROP * progress
            onset = min(HEALTH_ONSET_MINUTES, ep.t_fail - ep.t_start)
            health = np.clip(1 - (ep.t_fail - idx) / onset, 0.0, 1.0)
            sigma = DRIFT_HEALTH_NOISE * health
            net[idx] += -DRIFT_HEALTH_DROP * health + noise_rng.normal(0, 1, len(idx)) * sigma
            serv[idx] += -DRIFT_HEALTH_DROP * health + noise_rng.normal(0, 1, len(idx)) * sigma
            out = np.arange(ep.t_fail, ep.t_end)
            net[out] = OUTAGE_LEVEL + noise_rng.normal(0, sd["net_conn"], len(out))
            serv[out] = OUTAGE_LEVEL + noise_rng.normal(0, sd["serv_resp"], len(out))
        else:
            idx = np.arange(ep.t_start, ep.t_end)
            k = np.minimum(idx - ep.t_start, ep.t_end - 1 - idx)
            level = np.minimum(1.0, (k + 1) / BENIGN_EDGE_MINUTES)
            cpu[idx] += BENIGN_CPU_RISE * level
            ram[idx] += BENIGN_RAM_RISE * level

    cols = {}
    for name, arr in zip(KPI_NAMES, (cpu, ram, storage, net, serv)):
        lo, hi = KPI_BOUNDS[name]
        cols[name] = _quantize(np.clip(arr, lo, hi))
    return TelemetryTrace(t, **cols), episodes, meta


def export_trace(trace: TelemetryTrace, path) -> Path:
    if not path:
        raise DataError("export path is empty")
    path = Path(path)
    fmt = f"%.{CSV_DECIMALS}f"
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t",) + KPI_NAMES)
            cols = [np.char.mod(fmt, getattr(trace, k)) for k in KPI_NAMES]
            for i, t in enumerate(trace.t):
                w.writerow([int(t)] + [c[i] for c in cols])
    except OSError as exc:
        raise DataError(f"cannot write trace to {path}: {exc}") from exc
    return path


def import_trace(path) -> TelemetryTrace:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            expected = ["t", *KPI_NAMES]
            if header is None or header[: len(expected)] != expected:
                raise DataError(f"{path}: expected header {','.join(expected)}")
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read trace {path}: {exc}") from exc
    try:
        t = np.array([int(r[0]) for r in rows], dtype=np.int64)
        vals = np.array([[float(x) for x in r[1:6]] for r in rows], dtype=np.float64).reshape(-1, 5)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row ({exc})") from exc
    if len(t) > 1 and np.any(np.diff(t) != 1):
        raise DataError(f"{path}: minute index must be contiguous and increasing")
    return TelemetryTrace(t, *vals.T)


def export_annotations(episodes, metadata: GenerationMetadata, path) -> Path:
    if not path:
        raise DataError("export path is empty")
    doc = {
        "n_minutes": metadata.n_minutes,
        "seed": metadata.seed,
        "episodes": [e.to_dict() for e in episodes],
        "shortfall": metadata.shortfall,
    }
    path = Path(path)
    try:
        path.write_text(json.dumps(doc, indent=2) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write annotations to {path}: {exc}") from exc
    return path


def import_annotations(path) -> tuple[list[EpisodeAnnotation], GenerationMetadata]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        episodes = [EpisodeAnnotation.from_dict(d) for d in doc["episodes"]]
        n_fail, n_benign = expected_episode_counts(int(doc["n_minutes"]))
        meta = GenerationMetadata(int(doc["n_minutes"]), int(doc["seed"]), n_fail, n_benign, int(doc.get("shortfall", 0)))
    except OSError as exc:
        raise DataError(f"cannot read annotations {path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed annotation file ({exc})") from exc
    return episodes, meta
