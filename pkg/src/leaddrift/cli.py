"""Command-line entry point: ``leaddrift <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training failure.
Errors are reported as a single ``error: <kind>: <message>`` line on stderr.

Seeds: every stage derives its own seed from ``--seed`` via
``derive_seed(seed, <stage>, ...)`` (generation noise/placement, per-fold
training, batch shuffling, importance sampling), so one number reproduces a run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DEFAULT_HORIZON, build_dataset, featurize
from .detector import DEFAULT_EMA_WINDOW, ema, stream_detect
from .errors import ConfigError, DataError, LeadDriftError
from .evaluation import (
    METHODS,
    check_same_data,
    compare,
    cross_validate,
    fit_ensemble,
    fold_contexts,
    report_row,
    sweep_sizes,
    write_rows_csv,
)
from .explainer import explain_alert, format_attribution
from .model import TrainConfig, fit_risk_model, load_model, save_model
from .multihorizon import HorizonEnsemble, HorizonMember, run_ensemble
from .telemetry import (
    GeneratorConfig,
    export_annotations,
    export_trace,
    generate,
    import_annotations,
    import_trace,
)
from .tuner import tune_threshold

log = logging.getLogger("leaddrift")

OUTPUT_VERSION = 1
REPRODUCE_MINUTES = 100_000


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path


def _out(args, path) -> Path:
    if path is None:
        raise ConfigError("an output path is required")
    p = Path(path)
    if not p.is_absolute() and args.out_dir:
        p = Path(args.out_dir) / p
    return p


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _train_config(args) -> TrainConfig:
    return TrainConfig(batch_size=args.batch_size, epochs=args.epochs, seed=args.seed)


def _echo(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_gen(args):
    trace, episodes, meta = generate(GeneratorConfig(n_minutes=args.minutes, seed=args.seed))
    export_trace(trace, _out(args, args.out_trace))
    export_annotations(episodes, meta, _out(args, args.out_annot))
    if meta.shortfall:
        log.warning("%d episode(s) could not be placed", meta.shortfall)
    log.info("wrote %d minutes, %d episodes", len(trace), len(episodes))


def cmd_train(args):
    trace = import_trace(args.data)
    episodes, _ = import_annotations(args.annot)
    ds = build_dataset(trace, episodes, args.horizon)
    model, history = fit_risk_model(ds.X, ds.y, args.horizon, _train_config(args))
    model.meta["loss_history"] = history
    model.meta["config"] = _echo(args)
    save_model(model, _out(args, args.out))
    log.info("final training mse %.6f", history[-1])


def _smoothed_scores(model, trace, window):
    return ema(model.score(featurize(trace)), window)


def cmd_tune(args):
    model = load_model(args.model)
    trace = import_trace(args.data)
    episodes, _ = import_annotations(args.annot)
    ds = build_dataset(trace, episodes, args.horizon)
    search = tune_threshold(_smoothed_scores(model, trace, args.ema_window), ds.y)
    _write_json(_out(args, args.out), {"version": OUTPUT_VERSION, **search.summary(), "config": _echo(args)})


def cmd_detect(args):
    model = load_model(args.model)
    trace = import_trace(args.data)
    events = stream_detect(model.score(featurize(trace)), args.tau, args.ema_window, trace.t)
    _write_json(_out(args, args.out), {"version": OUTPUT_VERSION, "config": _echo(args), "alerts": [e.to_dict() for e in events]})
    log.info("%d alert(s)", len(events))


def cmd_explain(args):
    model = load_model(args.model)
    trace = import_trace(args.data)
    hit = np.flatnonzero(trace.t == args.t)
    if len(hit) == 0:
        raise DataError(f"minute {args.t} is not in {args.data}")
    X = featurize(trace)
    record = explain_alert(model, X[hit[0]], t=args.t)
    _write_json(_out(args, args.out), {"version": OUTPUT_VERSION, **record})
    if not args.quiet:
        print(format_attribution(record))


def cmd_multi(args):
    paths = [p for p in args.models.split(",") if p]
    taus = [float(x) for x in args.taus.split(",") if x]
    if len(paths) != len(taus):
        raise ConfigError("--models and --taus need the same number of entries")
    models = [load_model(p) for p in paths]
    members = sorted(
        (HorizonMember(int(m.meta.get("H", 0)), m, tau) for m, tau in zip(models, taus)),
        key=lambda mem: -mem.horizon,
    )
    ensemble = HorizonEnsemble(members, args.ema_window)
    trace = import_trace(args.data)
    run = run_ensemble(ensemble, featurize(trace), trace.t)
    doc = {"version": OUTPUT_VERSION, "config": _echo(args), "horizons": list(ensemble.horizons), "timeline": run.timeline()}
    _write_json(_out(args, args.out), doc)


def _cv_report(args, methods):
    trace = import_trace(args.data)
    episodes, _ = import_annotations(args.annot)
    return cross_validate(trace, episodes, methods, args.folds, args.horizon, args.ema_window, args.seed, _train_config(args))


def cmd_eval(args):
    report = _cv_report(args, [args.method])[args.method]
    _write_json(_out(args, args.out), report.to_dict())
    if args.plot_csv:
        write_rows_csv([report_row(report)], _out(args, args.plot_csv))
    if not args.quiet:
        print(json.dumps(report.summary()))


def cmd_baseline(args):
    args.method = args.baseline_method
    cmd_eval(args)


def cmd_sweep(args):
    methods = [m for m in args.methods.split(",") if m]
    rows = sweep_sizes(_int_list(args.sizes), methods, args.seed, args.folds, args.horizon, args.ema_window, _train_config(args))
    write_rows_csv(rows, _out(args, args.out))


def cmd_compare(args):
    reports = []
    for p in args.reports:
        try:
            reports.append(json.loads(Path(p).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read report {p}: {exc}") from exc
    check_same_data(reports)
    doc = compare(reports)
    if args.out:
        _write_json(_out(args, args.out), doc)
    print(json.dumps(doc, indent=2))


def reproduce(seed: int, out_dir, minutes: int = REPRODUCE_MINUTES, horizon: int = DEFAULT_HORIZON,
              window: int = DEFAULT_EMA_WINDOW, k: int = 5, train_config: TrainConfig | None = None) -> dict:
    """Full experiment: generate, cross-validate all methods, multi-horizon demo, one explained alert."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_config = train_config or TrainConfig(seed=seed)
    stage = "gen"
    try:
        trace, episodes, meta = generate(GeneratorConfig(n_minutes=minutes, seed=seed))
        export_trace(trace, out / "trace.csv")
        export_annotations(episodes, meta, out / "annotations.json")

        stage = "eval"
        reports = cross_validate(trace, episodes, METHODS, k, horizon, window, seed, train_config)
        for m, r in reports.items():
            _write_json(out / f"report_{m}.json", r.to_dict())
        write_rows_csv([report_row(r) for r in reports.values()], out / "table.csv")
        comparison = compare(list(reports.values()))
        _write_json(out / "comparison.json", comparison)

        stage = "multi"
        _, contexts = fold_contexts(trace, episodes, k, horizon, seed, train_config)
        ctx = contexts[-1]
        ensemble = fit_ensemble(ctx)
        for m in ensemble.members:
            save_model(m.model, out / f"model_h{m.horizon}.json")
        run = run_ensemble(ensemble, ctx.X_test, ctx.t_test)
        lo, hi = int(ctx.t_test[0]), int(ctx.t_test[-1])
        demo_ep = next(ep for ep in episodes if ep.is_failure and lo <= ep.t_fail <= hi)
        first = run.first_activation(demo_ep.t_start, demo_ep.t_fail)
        window_rows = [r for r in run.timeline() if demo_ep.t_start - 30 <= r["t"] <= demo_ep.t_end]
        multi_doc = {
            "version": OUTPUT_VERSION,
            "episode": demo_ep.to_dict(),
            "taus": {str(m.horizon): m.tau for m in ensemble.members},
            "first_activation": {str(h): t for h, t in first.items()},
            "timeline": window_rows,
        }
        _write_json(out / "multi_horizon.json", multi_doc)

        stage = "explain"
        model = ctx.risk_model(horizon)
        S_train = ema(model.score(ctx.X_train), window)
        tau = tune_threshold(S_train, ctx.y_train).tau
        events = stream_detect(model.score(ctx.X_test), tau, window, ctx.t_test)
        alert = next((e for e in events if demo_ep.t_start <= e.t <= demo_ep.t_end), events[0] if events else None)
        explanation = None
        if alert is not None:
            row = int(np.flatnonzero(ctx.t_test == alert.t)[0])
            explanation = explain_alert(model, ctx.X_test[row], t=alert.t)
            _write_json(out / "explanation.json", {"version": OUTPUT_VERSION, **explanation})
    except LeadDriftError as exc:
        raise type(exc)(f"stage {stage}: {exc}") from exc
    except StopIteration as exc:
        raise DataError(f"stage {stage}: no failure episode available for the demo") from exc

    summary = {
        "version": OUTPUT_VERSION,
        "config": {"seed": seed, "n_minutes": minutes, "H": horizon, "W": window, "k": k,
                   "epochs": train_config.epochs, "batch_size": train_config.batch_size, "shortfall": meta.shortfall},
        "methods": {m: r.summary() for m, r in reports.items()},
        "comparison": comparison["pairs"],
        "multi_horizon": {"episode": demo_ep.to_dict(), "first_activation": multi_doc["first_activation"]},
        "explained_alert": explanation,
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_reproduce(args):
    started = time.perf_counter()
    summary = reproduce(args.seed, args.out_dir or "reproduce_out", train_config=_train_config(args))
    if not args.quiet:
        print(f"{'method':<10} {'detection':>10} {'lead (min)':>16} {'FP/day':>8}")
        for m, s in summary["methods"].items():
            lead = f"{s['mean_lead_min']:.2f} ± {s['std_lead_min']:.2f}"
            print(f"{m:<10} {s['detection_rate']:>10.2%} {lead:>16} {s['fp_per_day']:>8.2f}")
        print(f"done in {time.perf_counter() - started:.1f}s")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    common.add_argument("--quiet", action="store_true", help="suppress informational output")
    common.add_argument("--out-dir", default=None, help="base directory for relative output paths")

    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument("--epochs", type=int, default=25)
    train_opts.add_argument("--batch-size", type=int, default=512)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="trace CSV")
    data.add_argument("--annot", required=True, help="annotation JSON")

    window = argparse.ArgumentParser(add_help=False)
    window.add_argument("--ema-window", type=int, default=DEFAULT_EMA_WINDOW)

    cv = argparse.ArgumentParser(add_help=False)
    cv.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    cv.add_argument("--folds", type=int, default=5)
    cv.add_argument("--out", required=True)
    cv.add_argument("--plot-csv", default=None)

    p = argparse.ArgumentParser(prog="leaddrift", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", parents=[common], help="generate a synthetic trace and annotations")
    s.add_argument("--minutes", type=int, required=True)
    s.add_argument("--out-trace", required=True)
    s.add_argument("--out-annot", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("train", parents=[common, data, train_opts], help="train a risk model on a whole trace")
    s.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tune", parents=[common, data, window], help="F1-tune the alert threshold")
    s.add_argument("--model", required=True)
    s.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("detect", parents=[common, window], help="emit rising-edge alerts for a trace")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--tau", type=float, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("explain", parents=[common], help="exact Shapley attribution for one minute")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--t", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("multi", parents=[common, window], help="multi-horizon time-to-failure timeline")
    s.add_argument("--models", required=True, help="comma-separated model files")
    s.add_argument("--taus", required=True, help="comma-separated thresholds, same order as --models")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_multi)

    s = sub.add_parser("baseline", parents=[common, data, window, cv, train_opts], help="cross-validate a baseline")
    s.add_argument("--method", dest="baseline_method", choices=["weighted", "distance"], required=True)
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("eval", parents=[common, data, window, cv, train_opts], help="k-fold evaluation of one method")
    s.add_argument("--method", choices=list(METHODS) + ["oracle", "zero"], default="lead")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", parents=[common, window, train_opts], help="evaluate across trace sizes")
    s.add_argument("--sizes", default="5000,20000,50000,100000")
    s.add_argument("--methods", default=",".join(METHODS))
    s.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--out", required=True, help="plot-ready CSV")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", parents=[common], help="pairwise deltas between report files")
    s.add_argument("reports", nargs="+")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("reproduce", parents=[common, train_opts], help="run the full experiment end to end")
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except LeadDriftError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: DataError: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
