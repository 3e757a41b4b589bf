"""Blocked k-fold evaluation of the learned detector and the baselines.

Per fold: fit on the training blocks, tune the threshold on the EMA-smoothed
training scores, then run first-crossing detection over the held-out block and
score episodes whose failure falls inside it.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ._seeding import derive_seed
from .baselines import fit_distance, fit_weighted_kpi
from .dataset import DEFAULT_HORIZON, SplitPlan, assign_labels, split_then_featurize
from .detector import DEFAULT_EMA_WINDOW, ema, fp_per_day, rising_edges, score_episodes
from .errors import ConfigError, DataError
from .model import MlpModel, TrainConfig, fit_risk_model
from .multihorizon import DEFAULT_HORIZONS, HorizonEnsemble, HorizonMember, activation_order_holds, run_ensemble
from .telemetry import GeneratorConfig, generate
from .tuner import tune_threshold

log = logging.getLogger(__name__)

REPORT_VERSION = 1
METHODS = ("lead", "weighted", "distance")
REFERENCE_METHODS = ("oracle", "zero")


def ema_by_segment(scores, t_index, window: int) -> np.ndarray:
    """EMA restarted at every gap in the minute index."""
    scores = np.asarray(scores, dtype=np.float64)
    t_index = np.asarray(t_index)
    cuts = np.flatnonzero(np.diff(t_index) != 1) + 1
    return np.concatenate([ema(seg, window) for seg in np.split(scores, cuts)]) if len(scores) else scores


@dataclass
class FoldContext:
    """Inputs one method needs to fit and score a single fold."""

    fold: int
    X_train: np.ndarray
    y_train: np.ndarray
    t_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    t_test: np.ndarray
    horizon: int
    seed: int
    train_config: TrainConfig
    annotations: list = field(default_factory=list)
    _models: dict = field(default_factory=dict)

    def risk_model(self, horizon: Optional[int] = None) -> MlpModel:
        """Learned model for this fold, trained once and shared between methods."""
        h = self.horizon if horizon is None else horizon
        if h not in self._models:
            y = self.y_train if h == self.horizon else assign_labels(self.t_train, self.annotations, h)
            cfg = TrainConfig(**{**self.train_config.__dict__, "seed": derive_seed(self.seed, "train", self.fold, h)})
            self._models[h], _ = fit_risk_model(self.X_train, y, h, cfg)
        return self._models[h]


# A method turns a fold context into a scorer: (X_raw, y) -> raw scores.
Scorer = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _fit_lead(ctx: FoldContext) -> Scorer:
    model = ctx.risk_model()
    return lambda X, y: model.score(X)


def _fit_weighted(ctx: FoldContext) -> Scorer:
    scorer = fit_weighted_kpi(ctx.risk_model(), ctx.X_train, ctx.y_train, seed=derive_seed(ctx.seed, "weighted", ctx.fold))
    return lambda X, y: scorer(X)


def _fit_distance(ctx: FoldContext) -> Scorer:
    scorer = fit_distance(ctx.X_train, ctx.y_train)
    return lambda X, y: scorer(X)


def _fit_oracle(ctx: FoldContext) -> Scorer:
    return lambda X, y: np.asarray(y, dtype=np.float64)


def _fit_zero(ctx: FoldContext) -> Scorer:
    return lambda X, y: np.zeros(len(X))


METHOD_FITTERS = {
    "lead": _fit_lead,
    "weighted": _fit_weighted,
    "distance": _fit_distance,
    "oracle": _fit_oracle,
    "zero": _fit_zero,
}


@dataclass
class FoldResult:
    fold: int
    tau: float
    tune_f1: float
    n_minutes: int
    outcomes: list
    fp_count: int
    alerts: list

    @property
    def n_episodes(self) -> int:
        return len(self.outcomes)

    @property
    def n_detected(self) -> int:
        return sum(o.detected for o in self.outcomes)

    @property
    def detection_rate(self) -> Optional[float]:
        return self.n_detected / self.n_episodes if self.outcomes else None

    @property
    def lead_times(self) -> list[float]:
        return [o.lead_time_min for o in self.outcomes if o.detected]

    @property
    def mean_lead(self) -> Optional[float]:
        return float(np.mean(self.lead_times)) if self.lead_times else None

    @property
    def fp_per_day(self) -> float:
        return fp_per_day(self.fp_count, self.n_minutes)

    def to_dict(self):
        return {
            "fold": self.fold,
            "tau": self.tau,
            "tune_f1": self.tune_f1,
            "n_minutes": self.n_minutes,
            "n_episodes": self.n_episodes,
            "detection_rate": self.detection_rate,
            "mean_lead_min": self.mean_lead,
            "lead_times": self.lead_times,
            "fp_count": self.fp_count,
            "fp_per_day": self.fp_per_day,
            "n_alerts": len(self.alerts),
            "episodes": [o.to_dict() for o in self.outcomes],
        }


@dataclass
class EvalReport:
    method: str
    folds: list
    config: dict

    @property
    def n_episodes(self):
        return sum(f.n_episodes for f in self.folds)

    @property
    def detection_rate(self) -> float:
        n = self.n_episodes
        return sum(f.n_detected for f in self.folds) / n if n else 0.0

    @property
    def fold_mean_leads(self) -> list[float]:
        return [f.mean_lead for f in self.folds if f.mean_lead is not None]

    @property
    def mean_lead(self) -> float:
        m = self.fold_mean_leads
        return float(np.mean(m)) if m else 0.0

    @property
    def std_lead(self) -> float:
        m = self.fold_mean_leads
        return float(np.std(m)) if m else 0.0

    @property
    def episode_leads(self) -> list[float]:
        return [x for f in self.folds for x in f.lead_times]

    @property
    def fp_per_day(self) -> float:
        return float(np.mean([f.fp_per_day for f in self.folds]))

    def summary(self) -> dict:
        ep = self.episode_leads
        return {
            "method": self.method,
            "detection_rate": self.detection_rate,
            "mean_lead_min": self.mean_lead,
            "std_lead_min": self.std_lead,
            "episode_mean_lead_min": float(np.mean(ep)) if ep else 0.0,
            "episode_std_lead_min": float(np.std(ep)) if ep else 0.0,
            "fp_per_day": self.fp_per_day,
            "n_episodes": self.n_episodes,
        }

    def to_dict(self):
        return {"version": REPORT_VERSION, **self.summary(), "config": self.config, "folds": [f.to_dict() for f in self.folds]}


def _evaluate_fold(ctx: FoldContext, scorer: Scorer, episodes, window: int, scored_episodes) -> FoldResult:
    S_train = ema_by_segment(scorer(ctx.X_train, ctx.y_train), ctx.t_train, window)
    search = tune_threshold(S_train, ctx.y_train)
    S_test = ema(scorer(ctx.X_test, ctx.y_test), window)
    events = rising_edges(S_test, search.tau, ctx.t_test)
    outcomes, fp = score_episodes(events, episodes, scored_episodes)
    return FoldResult(ctx.fold, search.tau, search.best_f1, len(ctx.t_test), outcomes, fp, events)


def fold_contexts(trace, episodes, k, horizon, seed, train_config):
    plan = SplitPlan.contiguous(len(trace), k)
    y_all = assign_labels(trace.t, episodes, horizon)
    contexts = []
    for split, (a, b) in zip(split_then_featurize(trace, plan), plan.blocks):
        y_test = y_all[a:b]
        y_train = np.concatenate([y_all[s:e] for j, (s, e) in enumerate(plan.blocks) if j != split.fold])
        ctx = FoldContext(split.fold, split.X_train, y_train, split.train.t, split.X_test, y_test, split.test.t, horizon, seed, train_config, list(episodes))
        contexts.append(ctx)
    return plan, contexts


def _episodes_in_block(episodes, t_lo, t_hi):
    return [ep for ep in episodes if ep.is_failure and t_lo <= ep.t_fail <= t_hi]


def cross_validate(
    trace,
    episodes,
    methods: Sequence[str] = METHODS,
    k: int = 5,
    horizon: int = DEFAULT_HORIZON,
    window: int = DEFAULT_EMA_WINDOW,
    seed: int = 0,
    train_config: Optional[TrainConfig] = None,
) -> dict:
    """Run k-fold CV for several methods on identical folds. Returns {method: EvalReport}."""
    unknown = [m for m in methods if m not in METHOD_FITTERS]
    if unknown:
        raise ConfigError(f"unknown method(s) {unknown}; choose from {sorted(METHOD_FITTERS)}")
    train_config = train_config or TrainConfig()
    _, contexts = fold_contexts(trace, episodes, k, horizon, seed, train_config)
    config = {
        "n_minutes": len(trace),
        "k": k,
        "H": horizon,
        "W": window,
        "seed": seed,
        "epochs": train_config.epochs,
        "batch_size": train_config.batch_size,
    }
    results = {m: [] for m in methods}
    for ctx in contexts:
        scored = _episodes_in_block(episodes, int(ctx.t_test[0]), int(ctx.t_test[-1]))
        if not scored:
            log.warning("fold %d holds no failure; excluded from lead-time aggregation", ctx.fold)
        for m in methods:
            results[m].append(_evaluate_fold(ctx, METHOD_FITTERS[m](ctx), episodes, window, scored))
    return {m: EvalReport(m, results[m], {**config, "method": m}) for m in methods}


def run_cv(trace, episodes, method: str = "lead", k: int = 5, horizon: int = DEFAULT_HORIZON,
           window: int = DEFAULT_EMA_WINDOW, seed: int = 0, train_config: Optional[TrainConfig] = None) -> EvalReport:
    return cross_validate(trace, episodes, [method], k, horizon, window, seed, train_config)[method]


@dataclass
class MultiHorizonResult:
    horizons: tuple
    taus: list  # per fold {H: tau}
    first_activations: list  # per episode {H: minute or None}
    episodes: list

    @property
    def order_fraction(self) -> float:
        if not self.first_activations:
            return 0.0
        return float(np.mean([activation_order_holds(f, self.horizons) for f in self.first_activations]))

    def to_dict(self):
        return {
            "horizons": list(self.horizons),
            "order_fraction": self.order_fraction,
            "taus": [{str(h): t for h, t in d.items()} for d in self.taus],
            "episodes": [
                {"t_start": e.t_start, "t_fail": e.t_fail, "first_activation": {str(h): f[h] for h in self.horizons}}
                for e, f in zip(self.episodes, self.first_activations)
            ],
        }


def fit_ensemble(ctx: FoldContext, horizons=DEFAULT_HORIZONS, window: int = DEFAULT_EMA_WINDOW) -> HorizonEnsemble:
    members = []
    for h in sorted(horizons, reverse=True):
        model = ctx.risk_model(h)
        y = assign_labels(ctx.t_train, ctx.annotations, h)
        S = ema_by_segment(model.score(ctx.X_train), ctx.t_train, window)
        members.append(HorizonMember(h, model, tune_threshold(S, y).tau))
    return HorizonEnsemble(members, window)


def multi_horizon_cv(
    trace,
    episodes,
    horizons=DEFAULT_HORIZONS,
    k: int = 5,
    window: int = DEFAULT_EMA_WINDOW,
    seed: int = 0,
    train_config: Optional[TrainConfig] = None,
) -> MultiHorizonResult:
    """Per fold, fit one model per horizon and record when each first activates
    within every held-out failure's [t_start, t_fail]."""
    train_config = train_config or TrainConfig()
    _, contexts = fold_contexts(trace, episodes, k, max(horizons), seed, train_config)
    taus, firsts, eps = [], [], []
    for ctx in contexts:
        ens = fit_ensemble(ctx, horizons, window)
        taus.append({m.horizon: m.tau for m in ens.members})
        run = run_ensemble(ens, ctx.X_test, ctx.t_test)
        for ep in _episodes_in_block(episodes, int(ctx.t_test[0]), int(ctx.t_test[-1])):
            firsts.append(run.first_activation(ep.t_start, ep.t_fail))
            eps.append(ep)
    return MultiHorizonResult(tuple(sorted(horizons, reverse=True)), taus, firsts, eps)


def sweep_sizes(sizes: Sequence[int], methods: Sequence[str] = METHODS, seed: int = 0, k: int = 5,
                horizon: int = DEFAULT_HORIZON, window: int = DEFAULT_EMA_WINDOW,
                train_config: Optional[TrainConfig] = None) -> list[dict]:
    """One generated trace and one CV per size; a flat row per (size, method)."""
    rows = []
    for n in sizes:
        trace, episodes, _ = generate(GeneratorConfig(n_minutes=int(n), seed=seed))
        reports = cross_validate(trace, episodes, methods, k, horizon, window, seed, train_config)
        for m in methods:
            rows.append({"n_minutes": int(n), "seed": seed, "k": k, "H": horizon, "W": window, **reports[m].summary()})
    return rows


def compare(reports: Sequence) -> dict:
    """Pairwise deltas (a minus b) and trade-off coordinates.

    Accepts ``EvalReport`` objects or their summary dicts.
    """
    summaries = [r.summary() if isinstance(r, EvalReport) else r for r in reports]
    if len(summaries) < 2:
        raise ConfigError("compare needs at least two reports")
    pairs = []
    for a in summaries:
        for b in summaries:
            if a is b:
                continue
            fp_b = b["fp_per_day"]
            pairs.append({
                "a": a["method"],
                "b": b["method"],
                "delta_lead_min": a["mean_lead_min"] - b["mean_lead_min"],
                "delta_fp_per_day": a["fp_per_day"] - fp_b,
                "fp_reduction_pct": 100.0 * (fp_b - a["fp_per_day"]) / fp_b if fp_b > 0 else None,
            })
    points = [{"method": s["method"], "mean_lead_min": s["mean_lead_min"], "fp_per_day": s["fp_per_day"]} for s in summaries]
    return {"version": REPORT_VERSION, "pairs": pairs, "tradeoff": points}


SUMMARY_FIELDS = ("method", "n_minutes", "seed", "H", "W", "detection_rate", "mean_lead_min", "std_lead_min",
                  "episode_mean_lead_min", "episode_std_lead_min", "fp_per_day", "n_episodes")


def write_rows_csv(rows: Sequence[dict], path, fields: Sequence[str] = SUMMARY_FIELDS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def report_row(report: EvalReport) -> dict:
    return {**report.config, **report.summary()}


def check_same_data(reports: Sequence) -> None:
    """Reports (objects or their JSON dicts) must share data and protocol settings."""
    keys = ("n_minutes", "k", "H", "W", "seed")
    configs = [r.config if isinstance(r, EvalReport) else r.get("config", {}) for r in reports]
    ref = {k: configs[0].get(k) for k in keys}
    for c in configs[1:]:
        if {k: c.get(k) for k in keys} != ref:
            raise DataError("reports were produced on different data/config; comparison is meaningless")
