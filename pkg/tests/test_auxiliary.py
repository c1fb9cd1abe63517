import math

import numpy as np
import pytest

from giicov import autodiff as ad
from giicov.auxiliary import (LagRegressionDesign, MixtureDesign, ProductMoment, SURDesign,
                              check_mixture, mixture_moments, mixture_responsibility)
from giicov.errors import DomainError, RankError
from giicov.estimate.criteria import observed_xi
from giicov.models import get_model
from giicov.models.base import PanelData
from giicov.randsrc import SeedSpec


def _panel(n=300, T=4, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(1, 1.4, (n, T))
    y = (rng.uniform(size=(n, T)) < 0.5).astype(float)
    return PanelData(y, x, tuple(range(1, T + 1)))


def test_sur_exact_fit():
    d = _panel()
    # y_1 stays binary so that y_1 is not collinear with the period-2 regressors
    for t in range(1, d.T):
        d.y[:, t] = 0.1 - 0.2 * d.x[:, t, 0] + 0.4 * d.x[:, t - 1, 0] + 0.5 * d.y[:, t - 1]
    beta = SURDesign().fit_observed(d)
    for t in range(1, d.T):
        assert np.allclose(beta[2 + 4 * (t - 1): 6 + 4 * (t - 1)], [0.1, -0.2, 0.4, 0.5], atol=1e-10)
    one = _panel(T=1)
    one.y[:, 0] = 0.3 + 0.7 * one.x[:, 0, 0]
    assert np.allclose(SURDesign().fit_observed(one), [0.3, 0.7], atol=1e-10)


def test_intercept_only_gives_mean():
    y = np.random.default_rng(2).normal(size=(50, 1))
    d = PanelData(y, None, (1,))
    beta = ProductMoment(1.0).fit_observed(d)
    assert beta[0] == pytest.approx(y.mean(), abs=1e-12)


def test_residuals_orthogonal():
    d = _panel(seed=3)
    aux = SURDesign()
    beta = aux.fit_observed(d)
    assert np.max(np.abs(aux.observed_moments(d, beta))) <= 1e-10
    assert aux.contributions(d, beta).shape == (d.n, beta.size)


def test_sur_matches_lstsq():
    d = _panel(seed=4)
    beta = SURDesign().fit_observed(d)
    z = np.column_stack([np.ones(d.n), d.x[:, 2, 0], d.x[:, 1, 0], d.y[:, 1]])
    ref = np.linalg.lstsq(z, d.y[:, 2], rcond=None)[0]
    assert np.allclose(beta[6:10], ref, atol=1e-12)


def test_rank_deficient_design():
    d = _panel()
    d.x[:] = 1.0
    with pytest.raises(RankError):
        SURDesign().fit_observed(d)


def test_ordered_levels_and_lag_design():
    d = _panel()
    d.y[:] = np.random.default_rng(5).integers(0, 3, d.y.shape)
    assert SURDesign(levels=2).fit_observed(d).size == 2 * (2 + 3 * 4)
    s = PanelData(np.random.default_rng(6).normal(size=(1, 200)), None, tuple(range(1, 201)))
    b = LagRegressionDesign().fit_observed(s)
    yy = s.y[0]
    ref = np.polyfit(yy[:-1], yy[1:], 1)
    assert np.allclose(b, ref[::-1], atol=1e-12)


def test_binding_at_anchor_is_plain_fit():
    m = get_model("model1")
    seed = SeedSpec(2, 0)
    data = m.simulate_observed(m.theta0, seed, 60)
    draws = m.sim_draws(seed, data, 1)
    aux = m.aux_design()
    th = np.array(m.theta0)
    std = m.simulate(th, draws, data)
    cov = m.simulate(ad.seed_parameter(th), draws, data, anchor=std.anchor)
    b = aux.binding(cov, data)
    sim = PanelData(np.stack([y[:, 0] for y in std.y], axis=1), data.x, data.times)
    assert np.allclose(b.val, aux.fit_observed(sim), rtol=1e-12, atol=1e-13)


def test_binding_forms_agree():
    m = get_model("model1")
    seed = SeedSpec(2, 1)
    data = m.simulate_observed(m.theta0, seed, 80)
    draws = m.sim_draws(seed, data, 3)
    aux = m.aux_design()
    th = np.array(m.theta0)
    anc = m.simulate(th, draws, data).anchor
    path = m.simulate(ad.seed_parameter(th), draws, data, anchor=anc)
    a, b = aux.binding(path, data), aux.binding_moment_form(path, data)
    assert np.allclose(a.val, b.val, atol=1e-9)
    assert np.allclose(a.grad, b.grad, atol=1e-6)


def test_smooth_binding_gradient_against_differences():
    m = get_model("linear_gaussian", T=3)
    seed = SeedSpec(3, 0)
    data = m.simulate_observed(m.theta0, seed, 100)
    draws = m.sim_draws(seed, data, 2)
    aux = m.aux_design()
    th = np.array([0.2, 0.8])
    b = aux.binding(m.simulate(ad.seed_parameter(th), draws, data), data)
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1e-6
        fd = (aux.binding(m.simulate(th + e, draws, data), data)
              - aux.binding(m.simulate(th - e, draws, data), data)) / 2e-6
        assert np.allclose(b.grad[:, k], fd, rtol=1e-6, atol=1e-8)


def test_binding_consistent_with_observed_fit():
    m = get_model("model1")
    seed = SeedSpec(40, 0)
    data = m.simulate_observed(m.theta0, seed, 2000)
    aux = m.aux_design()
    beta = aux.fit_observed(data)
    R = 10
    path = m.simulate(np.array(m.theta0), m.sim_draws(seed, data, R), data)
    bbar = aux.binding(path, data)
    L = aux.beta_jacobian(data, beta)
    Li = np.linalg.inv(L)
    V = Li @ observed_xi(aux, data, beta) @ Li.T / data.n * (1 + 1 / R)
    z = (bbar - beta) / np.sqrt(np.diag(V))
    assert np.max(np.abs(z)) <= 3.5


def test_mixture_symmetric_case():
    y = np.linspace(-2, 3, 11)
    beta = (0.5, 1.2, 0.5, 1.2, 0.3)
    assert np.allclose(mixture_responsibility(y, beta), 0.3)
    assert np.allclose(mixture_moments(y, beta)[:, 4], 0.0, atol=1e-15)


def test_mixture_limit():
    m = mixture_moments(np.array([1.5]), (1.5, 1.0, 4.0, 1.0, 1e-9))
    assert abs(m[0, 0]) < 1e-12


def test_mixture_domain():
    with pytest.raises(DomainError):
        check_mixture((0, -1.0, 1, 1.0, 0.5))
    with pytest.raises(DomainError):
        check_mixture((0, 1.0, 1, 1.0, 1.0))


def test_mixture_moments_mean_zero_under_model():
    rng = np.random.default_rng(7)
    beta = np.array([0.4, 0.3, 2.0, 0.8, 0.35])
    n = 10_000
    comp = rng.uniform(size=n) < beta[4]
    y = np.where(comp, rng.normal(beta[2], math.sqrt(beta[3]), n),
                 rng.normal(beta[0], math.sqrt(beta[1]), n))
    m = mixture_moments(y, beta)
    se = m.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(m.mean(axis=0)) <= 3 * se)


def test_mixture_fit_solves_moments():
    rng = np.random.default_rng(8)
    y = np.concatenate([rng.normal(0, 1, 400), rng.normal(4, 0.7, 300)])
    d = PanelData(y[None, :], None, tuple(range(1, y.size + 1)))
    aux = MixtureDesign()
    beta = aux.fit_observed(d)
    assert np.max(np.abs(aux.observed_moments(d, beta))) <= 1e-8
    assert beta[0] == pytest.approx(0, abs=0.2) and beta[2] == pytest.approx(4, abs=0.2)
