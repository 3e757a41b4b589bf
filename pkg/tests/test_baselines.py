import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from leaddrift.baselines import (
    DistanceScorer,
    WeightedKpiScorer,
    fit_distance,
    fit_weighted_kpi,
    normalize_importances,
    run_baseline,
    score_distance,
    score_weighted,
    shapley_importances,
)
from leaddrift.dataset import fit_standardizer
from leaddrift.detector import ema, ema_alpha, stream_detect
from leaddrift.errors import DataError
from leaddrift.model import init_model
from leaddrift.tuner import tune_threshold

vec5 = arrays(np.float64, 5, elements=st.floats(-100, 100))


@pytest.fixture
def model_and_data(rng):
    X = rng.normal(50, 10, size=(800, 7))
    y = (rng.random(800) < 0.2).astype(int)
    m = init_model(2)
    m.standardizer = fit_standardizer(X)
    return m, X, y


def test_weighted_fit(model_and_data):
    m, X, y = model_and_data
    scorer = fit_weighted_kpi(m, X, y, seed=1)
    assert scorer.weights.sum() == pytest.approx(1.0)
    assert np.all(scorer.weights >= 0)
    assert np.allclose(scorer.reference, np.median(X[y == 0], axis=0))
    q75, q25 = np.percentile(X[y == 0], [75, 25], axis=0)
    assert np.allclose(scorer.scale, q75 - q25)
    assert set(scorer.to_dict()["weights"]) == {"cpu_pct", "ram_pct", "storage_pct", "net_conn", "serv_resp", "cpu_delta", "serv_resp_delta"}


def test_ignored_feature_gets_zero_weight(model_and_data):
    m, X, y = model_and_data
    m.weights[0][:, 3] = 0.0
    assert fit_weighted_kpi(m, X, y).weights[3] == 0.0


def test_importances_are_seeded(model_and_data):
    m, X, _ = model_and_data
    a = shapley_importances(m, X, seed=5, n_sample=64)
    assert np.array_equal(a, shapley_importances(m, X, seed=5, n_sample=64))
    assert not np.array_equal(a, shapley_importances(m, X, seed=6, n_sample=64))


def test_uniform_fallback_for_zero_importances(caplog):
    assert np.allclose(normalize_importances(np.zeros(4)), 0.25)
    assert "uniform" in caplog.text


def test_weighted_score_formula():
    sc = WeightedKpiScorer(np.array([0.5, 0.5]), np.array([1.0, 2.0]), np.array([2.0, 4.0]))
    assert score_weighted(sc, np.array([[3.0, 0.0]])).tolist() == [0.5 * 1 + 0.5 * 0.5]
    assert sc(np.array([[1.0, 2.0]])).tolist() == [0.0]


def test_fits_need_healthy_rows(model_and_data):
    m, X, _ = model_and_data
    with pytest.raises(DataError):
        fit_weighted_kpi(m, X, np.ones(len(X)))
    with pytest.raises(DataError):
        fit_distance(X, np.ones(len(X)))


def test_distance_fit_uses_kpis_only(rng):
    X = rng.normal(size=(500, 7))
    y = (rng.random(500) < 0.3).astype(int)
    sc = fit_distance(X, y)
    assert np.allclose(sc.target, X[y == 0][:, :5].mean(axis=0))
    assert sc.target.shape == (5,)
    moved = X.copy()
    moved[:, 5:] += 100.0
    assert np.array_equal(score_distance(sc, X), score_distance(sc, moved))


@settings(max_examples=200)
@given(vec5, vec5, vec5)
def test_distance_is_a_metric(a, b, c):
    scale = np.array([1.0, 2.0, 0.5, 3.0, 1.5])
    d = lambda x, target: score_distance(DistanceScorer(target, scale), x)
    assert d(a, b) >= 0
    assert (d(a, b) == 0) == np.array_equal(a, b)
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-9 * (1 + d(a, b) + d(b, c))


def test_distance_is_pointwise(rng):
    sc = DistanceScorer(np.zeros(5), np.ones(5))
    X = rng.normal(size=(50, 7))
    base = score_distance(sc, X)
    shuffled = X[::-1]
    assert np.array_equal(score_distance(sc, shuffled), base[::-1])
    assert score_distance(sc, X[7]) == base[7]


def test_constant_healthy_stream_never_alerts():
    sc = DistanceScorer(np.zeros(5), np.ones(5))
    X = np.zeros((200, 7))
    y = np.r_[np.zeros(150), np.ones(50)]
    tau = tune_threshold(ema(sc(X)), y).tau
    assert run_baseline(sc, X, tau) == []


@pytest.mark.parametrize("step", [3.0, 4.0, 8.0])
def test_step_deviation_alerts_within_window_plus_two(step):
    sc = DistanceScorer(np.zeros(5), np.ones(5))
    t0, n = 100, 200
    X = np.zeros((n, 7))
    X[t0:, 1] = step
    y = (np.arange(n) >= t0).astype(int)
    tau = tune_threshold(ema(sc(X)), y).tau
    events = run_baseline(sc, X, tau, window=5)
    # EMA after k post-step samples is step * (1 - (1 - alpha)^k).
    k = math.ceil(math.log(1 - tau / step) / math.log(1 - ema_alpha(5)))
    assert [e.t for e in events] == [t0 + k - 1]
    assert events[0].t - t0 <= 5 + 2


def test_run_baseline_shares_the_detector_path(rng):
    sc = DistanceScorer(np.zeros(5), np.ones(5))
    X = rng.normal(size=(300, 7))
    assert run_baseline(sc, X, 2.0) == stream_detect(sc(X), 2.0)
