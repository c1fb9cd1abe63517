import math

import numpy as np
import pytest
from scipy.special import ndtr

from giicov import autodiff as ad
from giicov.covcore import check_grid
from giicov.models import MODEL_NAMES, DynamicProbit, OrderedProbit, get_model
from giicov.models.base import PanelData, Smoother
from giicov.randsrc import SeedSpec, generator, make_uniform_panel, open_uniforms

from oracles import queue_events


def test_registry():
    for name in MODEL_NAMES:
        m = get_model(name)
        assert m.d_theta == len(m.theta0) == m.bounds.shape[0]
        m.check_theta(m.theta0)
    with pytest.raises(ValueError):
        get_model("nope")


def test_binary_grid_examples():
    m = get_model("model1")
    g = m.critical_grid(np.array([0.0, 0.0]), np.array(1.7), np.array(0.3))
    assert g.tolist() == [0.0, 0.5, 1.0]
    g = m.critical_grid(np.array([1.0, 0.4]), np.array(1.0), np.array(0.0))
    assert g[1] == pytest.approx(0.158655253931457, abs=1e-12)
    g = m.critical_grid(np.array([1.0, 0.4]), np.array(-1.0), np.array(2.5))
    assert g[1] == pytest.approx(0.5, abs=1e-15)


def test_dynamic_grid_examples():
    m2, m1 = get_model("model2"), get_model("model1")
    x, v = np.array([0.3, -1.2]), np.array([0.5, 0.1])
    assert np.array_equal(m2.critical_grid(np.array([1.0, 0.7, 0.4]), x, v, None),
                          m1.critical_grid(np.array([1.0, 0.4]), x, v))
    g = m2.critical_grid(np.array([0.0, 0.2, 0.0]), np.array(0.0), np.array(0.0), np.array(1.0))
    assert g[1] == pytest.approx(ndtr(-0.2), abs=1e-15)
    assert np.array_equal(m2.critical_grid(np.array([1.0, 0.0, 0.4]), x, v, np.array([1.0, 0.0])),
                          m1.critical_grid(np.array([1.0, 0.4]), x, v))


def test_ordered_grid_examples():
    m = OrderedProbit(J=2)
    g = m.critical_grid(np.array([-1.0, 1.0, 0.0, 0.0]), np.array(0.4), np.array(0.0))
    assert g.tolist() == pytest.approx([0.0, ndtr(-1.0), ndtr(1.0), 1.0], abs=1e-15)
    g = m.critical_grid(np.array([-1.0, 1.0, 0.0, 1.0]), np.array(0.0), np.array(-5.0))
    check_grid(g)
    assert g[1] < g[2] < 1.0
    with pytest.raises(ValueError):
        m.critical_grid(np.array([1.0, -1.0, 1.0, 0.5]), np.array(0.0), np.array(0.0))
    one = OrderedProbit(J=1)
    x, v = np.array(0.8), np.array(0.0)
    gb = get_model("model1").critical_grid(np.array([1.0, 0.0]), x, v)
    assert np.allclose(one.critical_grid(np.array([0.0, 1.0, 0.0]), x, v), gb, atol=1e-15)


@pytest.mark.parametrize("name", ["model1", "model2", "ordered"])
def test_grid_fuzz(name):
    m = get_model(name)
    rng = np.random.default_rng(0)
    lo, hi = m.bounds[:, 0], m.bounds[:, 1]
    for _ in range(200):
        th = rng.uniform(lo, hi)
        if name == "ordered":
            th[: m.J] = np.sort(th[: m.J])
            if np.any(np.diff(th[: m.J]) <= 0):
                continue
        x = rng.normal(1, math.sqrt(2), 50)
        v = rng.normal(0, 2, 50)
        if name == "ordered":
            check_grid(m.critical_grid(th, x, v))
        elif name == "model2":
            check_grid(m.critical_grid(th, x, v, rng.integers(0, 2, 50).astype(float)))
        else:
            check_grid(m.critical_grid(th, x, v))


def test_model3_window_and_determinism():
    m = get_model("model3")
    a = m.simulate_observed(m.theta0, SeedSpec(1, 0), 30)
    b = m.simulate_observed(m.theta0, SeedSpec(1, 0), 30)
    assert a.times == (3, 4, 5) and a.y.shape == (30, 3)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)
    full = get_model("model2").simulate_observed(m.theta0, SeedSpec(1, 0), 30)
    assert np.array_equal(full.y[:, 2:], a.y)


def test_model1_observed_panel():
    m = get_model("model1")
    d = m.simulate_observed((1.0, 0.4), SeedSpec(3, 0), 200)
    assert d.y.shape == (200, 5) and set(np.unique(d.y)) <= {0.0, 1.0}
    assert 0.0 < d.y.mean() < 1.0
    assert d.x.mean() == pytest.approx(1.0, abs=0.2)
    assert d.x.var() == pytest.approx(2.0, rel=0.15)
    sat = m.simulate_observed((5.0, 0.0), SeedSpec(3, 0), 200)
    assert sat.y[d.x[:, :, 0] > 1.0].min() == 1.0


def test_initial_conditions():
    # Model 2 at t = 1 uses y_0 = 0 and v_0 = 0: y_1 = 1[x gamma + eps > 0]
    m = get_model("model2")
    seed = SeedSpec(8, 0)
    d = m.simulate_observed((1.0, 0.9, 0.9), seed, 100)
    eps = ad.norm_ppf(open_uniforms(generator(seed, 1), (100, 5, 1)))[:, 0, 0]
    assert np.array_equal(d.y[:, 0], (d.x[:, 0, 0] + eps > 0).astype(float))


@pytest.mark.parametrize("name", ["model1", "model2", "model3", "ordered", "exp_ar", "queue"])
def test_cov_path_at_anchor_matches_standard(name):
    m = get_model(name)
    seed = SeedSpec(6, 0)
    n, T = (1, 80) if name in ("exp_ar", "queue") else (25, None)
    data = m.simulate_observed(m.theta0, seed, n, T)
    draws = m.sim_draws(seed, data, 3)
    th = np.array(m.theta0)
    std = m.simulate(th, draws, data)
    cov = m.simulate(ad.seed_parameter(th), draws, data, anchor=std.anchor)
    for a, b in zip(std.y, cov.y):
        assert np.array_equal(ad.value(a), ad.value(b))
    for w in cov.weight:
        if w is not None:
            assert np.all(ad.value(w) == 1.0)


def test_exp_ar_step_weight():
    m = get_model("exp_ar")
    data = PanelData(np.zeros((1, 1)), None, (1,))
    draws = {"switch": np.full((1, 1, 1), 0.3), "size": np.full((1, 1, 1), 0.5)}
    th = np.array([1.0, 0.5])
    std = m.simulate(th, draws, data)
    assert std.y[0][0, 0] > 0
    cov = m.simulate(ad.seed_parameter(th), draws, data, anchor=std.anchor)
    assert cov.weight[0].val[0, 0] == 1.0
    # branch u <= phi: weight phi / phi*, derivative 1 / phi* in phi
    assert cov.weight[0].grad[0, 0, 1] == pytest.approx(2.0)
    draws["switch"] = np.full((1, 1, 1), 0.8)
    std = m.simulate(th, draws, data)
    cov = m.simulate(ad.seed_parameter(th), draws, data, anchor=std.anchor)
    assert cov.weight[0].grad[0, 0, 1] == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        m.simulate(np.array([1.0, 1.0]), draws, data)


@pytest.mark.parametrize("theta", [(1.0, 0.3), (2.0, 0.7)])
def test_exp_ar_stationary_mean(theta):
    m = get_model("exp_ar")
    mu, phi = theta
    d = m.simulate_observed(theta, SeedSpec(21, 0), 1, 100_000)
    y = d.y[0, 1000:]
    # batch means absorb the serial correlation
    b = y[: (y.size // 100) * 100].reshape(100, -1).mean(axis=1)
    se = b.std(ddof=1) / math.sqrt(b.size)
    assert abs(y.mean() - mu * phi / (1 - phi)) <= 3 * se


def _queue_inputs(seed, n):
    uv = make_uniform_panel(seed, 1, n, 1, stream=100).draws
    uw = make_uniform_panel(seed, 1, n, 1, stream=101).draws
    return {"service": uv, "arrival": uw}


@pytest.mark.parametrize("k", range(10))
def test_queue_matches_event_simulation(k):
    rng = np.random.default_rng(k)
    m = get_model("queue")
    n = int(rng.integers(2, 51))
    tv, tw = rng.uniform(0.1, 0.9), rng.uniform(1.0, 4.0)
    draws = _queue_inputs(SeedSpec(30, k), n)
    data = PanelData(np.zeros((1, n)), None, tuple(range(1, n + 1)))
    th = np.array([tv, tw])
    std = m.simulate(th, draws, data)
    cov = m.simulate(ad.seed_parameter(th), draws, data, anchor=std.anchor)
    services = list(tv * -np.log1p(-draws["service"][0, :, 0]))
    gaps = list(-(tw * np.log1p(-draws["arrival"][0, :, 0])))
    ref = queue_events(gaps, services)
    got = [float(ad.value(y)[0, 0]) for y in cov.y]
    assert got == ref


def test_queue_idle_branch():
    m = get_model("queue")
    data = PanelData(np.zeros((1, 3)), None, (1, 2, 3))
    # tiny services, long gaps: the server is always idle on arrival
    draws = {"service": np.full((1, 3, 1), 1e-6), "arrival": np.full((1, 3, 1), 0.999)}
    th = np.array([0.5, 1.0])
    path = m.simulate(th, draws, data)
    v = 0.5 * -math.log1p(-1e-6)
    w = -math.log1p(-0.999)
    assert path.y[0][0, 0] == v
    assert path.y[1][0, 0] == pytest.approx(w, rel=1e-12)


def test_queue_mean_interdeparture():
    m = get_model("queue")
    d = m.simulate_observed((0.5, 1.0), SeedSpec(31, 0), 1, 100_000)
    y = d.y[0]
    b = y.reshape(100, -1).mean(axis=1)
    se = b.std(ddof=1) / 10.0
    assert abs(y.mean() - 1.0) <= 3 * se


def test_queue_stability_check():
    m = get_model("queue")
    with pytest.raises(ValueError):
        m.check_stable((1.0, 0.5))


def test_smoother_limit():
    m = get_model("model1")
    seed = SeedSpec(12, 0)
    data = m.simulate_observed(m.theta0, seed, 50)
    draws = m.sim_draws(seed, data, 2)
    th = np.array(m.theta0)
    hard = m.simulate(th, draws, data)
    soft = m.simulate(th, draws, data, smoother=Smoother(1e-6))
    # compare away from the thresholds only
    gap = np.abs(ad.norm_ppf(draws["eps"][:, 0, :]) + th[0] * data.x[:, 0, 0][:, None])
    mask = gap > 1e-3
    assert np.max(np.abs(soft.y[0] - hard.y[0])[mask]) <= 1e-3


def test_smoother_validation():
    with pytest.raises(ValueError):
        Smoother(0.0)
    with pytest.raises(ValueError):
        Smoother(0.1, "box")
    assert Smoother(0.1, "logistic")(np.array(0.0)) == 0.5
