import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leaddrift.errors import ConfigError, DataError
from leaddrift.telemetry import (
    BENIGN,
    IMBALANCE,
    KPI_BOUNDS,
    KPI_NAMES,
    EpisodeAnnotation,
    GenerationMetadata,
    GeneratorConfig,
    TelemetryTrace,
    export_annotations,
    export_trace,
    generate,
    import_annotations,
    import_trace,
)


def _counts(episodes):
    return (sum(e.kind == IMBALANCE for e in episodes), sum(e.kind == BENIGN for e in episodes))


@pytest.mark.parametrize("n, expected", [(1440, (1, 0)), (5000, (3, 1)), (100_000, (69, 34))])
def test_episode_counts_follow_floor_formulas(n, expected):
    _, episodes, meta = generate(GeneratorConfig(n_minutes=n, seed=1))
    assert meta.shortfall == 0
    assert _counts(episodes) == expected


def test_same_config_gives_byte_identical_exports(tmp_path):
    for name in ("a", "b"):
        trace, eps, meta = generate(GeneratorConfig(n_minutes=5000, seed=9))
        export_trace(trace, tmp_path / f"{name}.csv")
        export_annotations(eps, meta, tmp_path / f"{name}.json")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_different_seeds_differ():
    a, _, _ = generate(GeneratorConfig(n_minutes=2000, seed=1))
    b, _, _ = generate(GeneratorConfig(n_minutes=2000, seed=2))
    assert a != b


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1440, 8000))
def test_kpis_within_bounds_and_episodes_separated(seed, n):
    cfg = GeneratorConfig(n_minutes=n, seed=seed)
    trace, episodes, _ = generate(cfg)
    assert len(trace) == n
    for name in KPI_NAMES:
        lo, hi = KPI_BOUNDS[name]
        col = getattr(trace, name)
        assert col.min() >= lo and col.max() <= hi
    for a in episodes:
        assert 0 <= a.t_start < a.t_end < n
        for b in episodes:
            if a is not b:
                assert b.t_end < a.t_start - cfg.guard_band or b.t_start > a.t_end + cfg.guard_band


def test_cpu_rises_before_each_failure(standard_run):
    trace, episodes, _ = standard_run
    overall = trace.cpu_pct.mean()
    for ep in episodes:
        if ep.is_failure:
            assert trace.cpu_pct[ep.t_fail - 30:ep.t_fail].mean() > overall


def test_failure_shaping_directions(standard_run):
    trace, episodes, _ = standard_run
    for ep in (e for e in episodes if e.is_failure):
        pre = slice(ep.t_start - 30, ep.t_start)
        late = slice(ep.t_fail - 15, ep.t_fail)
        assert trace.ram_pct[late].mean() < trace.ram_pct[pre].mean()
        assert trace.serv_resp[late].std() > trace.serv_resp[pre].std()
        assert trace.serv_resp[ep.t_fail:ep.t_end].max() < 0.2
        assert trace.net_conn[ep.t_end + 1:ep.t_end + 20].mean() > 0.9


def test_benign_episodes_keep_service_healthy(standard_run):
    trace, episodes, _ = standard_run
    for ep in (e for e in episodes if not e.is_failure):
        mid = slice(ep.t_start + 15, ep.t_end - 15)
        before = slice(ep.t_start - 60, ep.t_start)
        assert trace.cpu_pct[mid].mean() > trace.cpu_pct[before].mean() + 20
        assert trace.serv_resp[mid].mean() > 0.95


def test_dense_config_reports_shortfall():
    cfg = GeneratorConfig(n_minutes=1440 * 3, seed=0, guard_band=1000, max_placement_attempts=5)
    _, episodes, meta = generate(cfg)
    assert meta.shortfall > 0
    assert len(episodes) == meta.requested_failures + meta.requested_benign - meta.shortfall


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_minutes": 1000},
        {"drift_duration_range": (100, 90)},
        {"benign_duration_range": (1, 1)},
        {"guard_band": -1},
        {"noise_std": {"cpu_pct": 1.0}},
    ],
)
def test_invalid_config_is_rejected(kwargs):
    with pytest.raises(ConfigError):
        generate(GeneratorConfig(**kwargs))


def test_three_sample_trace_csv(tmp_path):
    t = np.arange(3)
    trace = TelemetryTrace(t, *(np.full(3, 0.5) for _ in KPI_NAMES))
    path = export_trace(trace, tmp_path / "x.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "t," + ",".join(KPI_NAMES)
    assert len(lines) == 4
    assert lines[1] == "0,0.500000,0.500000,0.500000,0.500000,0.500000"


def test_trace_round_trip(tmp_path, small_run):
    trace, _, _ = small_run
    export_trace(trace, tmp_path / "t.csv")
    assert import_trace(tmp_path / "t.csv") == trace


def test_empty_path_is_an_io_error():
    trace = TelemetryTrace(np.arange(2), *(np.zeros(2) for _ in KPI_NAMES))
    with pytest.raises(DataError):
        export_trace(trace, "")
    with pytest.raises(DataError):
        export_annotations([], GenerationMetadata(0, 0, 0, 0, 0), "")


def test_malformed_trace_csv(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,cpu_pct\n0,1\n")
    with pytest.raises(DataError):
        import_trace(p)


def test_annotation_schema(tmp_path):
    eps = [EpisodeAnnotation(IMBALANCE, 10, 130, 120), EpisodeAnnotation(BENIGN, 400, 500)]
    meta = GenerationMetadata(1440, 5, 1, 0, 0)
    doc = json.loads(export_annotations(eps, meta, tmp_path / "a.json").read_text())
    assert doc["n_minutes"] == 1440 and doc["seed"] == 5 and doc["shortfall"] == 0
    assert doc["episodes"][0] == {"kind": IMBALANCE, "t_start": 10, "t_end": 130, "t_fail": 120}
    assert doc["episodes"][1]["t_fail"] is None
    back, meta_back = import_annotations(tmp_path / "a.json")
    assert back == eps and meta_back == meta


def test_zero_episodes_export(tmp_path):
    doc = json.loads(export_annotations([], GenerationMetadata(1440, 0, 1, 0, 1), tmp_path / "e.json").read_text())
    assert doc["episodes"] == []


@pytest.mark.parametrize(
    "args",
    [(IMBALANCE, 10, 20, None), (IMBALANCE, 10, 20, 25), (BENIGN, 10, 20, 15), ("crash", 0, 5, None), (BENIGN, 5, 5, None)],
)
def test_invalid_annotations(args):
    with pytest.raises(DataError):
        EpisodeAnnotation(*args)
