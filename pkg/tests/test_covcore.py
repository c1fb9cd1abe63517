import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from giicov import autodiff as ad
from giicov.covcore import (check_grid, cov_transform, locate_segment, locate_segments,
                            simulated_outcome, weighted_moment_panel)
from giicov.errors import ContractError, DegenerateSegmentError
from giicov.models import get_model
from giicov.models.base import PanelData
from giicov.models.toys import ThresholdToy
from giicov.randsrc import SeedSpec, make_uniform_panel


@pytest.mark.parametrize("grid, u, j", [
    ((0, 0.4, 1), 0.7, 1),
    ((0, 0.4, 1), 0.4, 0),
    ((0, 0.2, 0.7, 1), 0.05, 0),
    ((0, 0.2, 0.7, 1), 0.7, 1),
    ((0, 0.2, 0.7, 1), 1.0, 2),
])
def test_locate_segment(grid, u, j):
    assert locate_segment(u, grid) == j
    assert int(locate_segments(u, np.array(grid, dtype=float))) == j


def test_locate_segment_rejects_bad_grid():
    with pytest.raises(ContractError):
        locate_segment(0.5, (0, 0.6, 0.4, 1))


def test_check_grid_contract():
    with pytest.raises(ContractError):
        check_grid([0.0, 0.5, 0.9])
    with pytest.raises(ContractError):
        check_grid([1e-20, 0.5, 1.0])
    with pytest.raises(ContractError):
        check_grid([0.0, 0.7, 0.3, 1.0])
    with pytest.raises(ContractError):
        check_grid([0.0, np.nan, 1.0])


def test_hand_example():
    res = cov_transform(0.25, np.array([0.0, 0.6, 1.0]), np.array([0.0, 0.5, 1.0]))
    assert res.u_new == pytest.approx(0.30, abs=1e-15)
    assert res.weight == pytest.approx(1.2, abs=1e-15)
    assert int(res.segment) == 0


def test_single_segment_identity():
    u = np.linspace(0.01, 0.99, 50)
    g = np.broadcast_to([0.0, 1.0], (50, 2))
    res = cov_transform(u, g, g)
    assert np.array_equal(res.u_new, u) and np.all(res.weight == 1.0)


def test_dual_grid_at_anchor():
    x, = ad.seed_parameter([0.3])
    grid = ad.stack([0.0, ad.norm_cdf(x), 1.0])
    res = cov_transform(0.45, grid, ad.value(grid))
    assert res.u_new.val == 0.45 and res.weight.val == 1.0
    assert res.weight.grad[0] != 0.0


def test_degenerate_segment():
    with pytest.raises(DegenerateSegmentError) as info:
        cov_transform(np.array([0.3, 0.5]), np.array([[0, 0.5, 1.0], [0, 0.5, 1.0]]),
                      np.array([[0, 0.5, 1.0], [0, 0.5, 0.5 + 1e-13]]), segment=np.array([0, 1]))
    assert info.value.location == (1,)


def test_ties_allowed_when_draw_avoids_them():
    g = np.array([0.0, 0.4, 0.4, 1.0])
    res = cov_transform(0.7, g, g)
    assert int(res.segment) == 2 and res.u_new == 0.7


def test_simulated_outcome():
    assert simulated_outcome((0.0, 1.0), np.array(1)) == 1.0
    assert simulated_outcome((0.0, 1.0, 2.0), np.array(1)) == 1.0
    x, = ad.seed_parameter([0.5])
    levels = ad.stack([ad.constant(0.0, x), x * 2.0 + 1.0])
    y = simulated_outcome(levels, np.array(1))
    assert y.val == 2.0 and y.grad[0] == 2.0


@st.composite
def grids(draw):
    k = draw(st.integers(1, 5))
    inner = sorted(draw(st.lists(st.floats(1e-6, 1 - 1e-6), min_size=k, max_size=k, unique=True)))
    g = np.array([0.0] + inner + [1.0])
    if np.any(np.diff(g) < 1e-9):
        g = np.array([0.0] + list(np.linspace(0, 1, k + 2)[1:-1]) + [1.0])
    return g


@settings(max_examples=300, deadline=None)
@given(grids(), st.floats(1e-9, 1.0, exclude_min=True))
def test_identity_property(g, u):
    res = cov_transform(u, g, g)
    assert res.u_new == u
    assert res.weight == 1.0
    assert int(res.segment) == locate_segment(u, g)


@settings(max_examples=300, deadline=None)
@given(grids(), st.floats(0.0, 1.0), st.floats(1e-6, 1.0))
def test_segment_preserved_under_perturbation(g, shift, u):
    other = g.copy()
    inner = np.sort(np.clip(g[1:-1] + 0.05 * (shift - 0.5), 1e-7, 1 - 1e-7))
    other[1:-1] = inner
    if np.any(np.diff(other) < 1e-9):
        return
    res = cov_transform(u, other, g)
    j = int(res.segment)
    assert other[j] < res.u_new <= other[j + 1]
    assert res.weight > 0


@settings(max_examples=200, deadline=None)
@given(grids(), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_monotone_within_segment(g, a, b):
    other = g.copy()
    other[1:-1] = np.sqrt(g[1:-1])
    j = 0
    lo, hi = g[j], g[j + 1]
    u1, u2 = sorted((lo + (hi - lo) * max(a, 1e-6), lo + (hi - lo) * max(b, 1e-6)))
    if u1 == u2 or u1 <= lo:
        return
    r1, r2 = cov_transform(u1, other, g), cov_transform(u2, other, g)
    assert r1.u_new < r2.u_new


@pytest.mark.parametrize("theta_star", [-1.0, -0.3, 0.2, 0.8, 1.5])
def test_unbiased_derivative_toy(theta_star):
    toy = ThresholdToy(z=1.5, beta=0.2)
    data = PanelData(np.zeros((1, 1)), None, (1,))
    draws = {"eps": make_uniform_panel(SeedSpec(5, 0), 1, 1, 100_000).draws}
    th = ad.seed_parameter([theta_star])
    anchor = toy.simulate(np.array([theta_star]), draws, data).anchor
    path = toy.simulate(th, draws, data, anchor=anchor)
    per = toy.aux_design().sim_moments(path, data, np.array([toy.beta]), per_path=True)
    g = per.grad[:, 0, 0]
    se = g.std(ddof=1) / np.sqrt(g.size)
    assert abs(g.mean() - toy.analytic_derivative(theta_star)) <= 3 * se


def test_smooth_model_moments_unweighted():
    m = get_model("linear_gaussian")
    seed = SeedSpec(2, 0)
    data = m.simulate_observed(m.theta0, seed, 40)
    draws = m.sim_draws(seed, data, 3)
    aux = m.aux_design()
    beta = aux.fit_observed(data)
    th = np.array([0.3, 1.4])
    wm = weighted_moment_panel(m, ad.seed_parameter(th), th, beta, draws, data)
    plain = aux.sim_moments(m.simulate(ad.seed_parameter(th), draws, data), data, beta)
    assert np.array_equal(wm.m.val, plain.val)
    assert np.allclose(wm.m.grad, plain.grad, rtol=1e-13, atol=1e-15)
    assert wm.d_beta == beta.size and wm.n == 40 and wm.R == 3


@pytest.mark.parametrize("name", ["model1", "model2", "model3", "ordered"])
def test_value_matches_standard_simulation(name):
    m = get_model(name)
    seed = SeedSpec(4, 1)
    data = m.simulate_observed(m.theta0, seed, 30)
    draws = m.sim_draws(seed, data, 2)
    aux = m.aux_design()
    beta = aux.fit_observed(data)
    th = np.array(m.theta0) + 0.05
    wm = weighted_moment_panel(m, ad.seed_parameter(th), th, beta, draws, data)
    plain = aux.sim_moments(m.simulate(th, draws, data), data, beta)
    assert np.array_equal(wm.m.val, plain)


def test_example1_single_cell_bit_exact():
    m = get_model("model1")
    seed = SeedSpec(9, 0)
    data = m.simulate_observed(m.theta0, seed, 1)
    draws = m.sim_draws(seed, data, 1)
    aux = m.aux_design()
    beta = np.arange(1, 19) / 10.0
    th = np.array(m.theta0)
    wm = weighted_moment_panel(m, ad.seed_parameter(th), th, beta, draws, data)
    assert np.array_equal(wm.m.val, aux.sim_moments(m.simulate(th, draws, data), data, beta))
