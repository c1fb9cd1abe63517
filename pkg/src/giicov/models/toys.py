"""Small models with closed-form answers, used as oracles."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..randsrc import generator, open_uniforms
from .base import Model, PanelData, SimPath, Stepper
from .probit import _sim_x, draw_regressors


class LinearGaussian(Model):
    """``y_it = a + b x_it + eps_it``: no discontinuity (``J = 0``).

    The change of variables reduces to the identity with unit weight, so
    the weighted criterion coincides with the standard one.
    """

    name = "linear_gaussian"
    param_names = ("a", "b")
    theta0 = (0.5, 1.0)
    bounds = np.array([[-10.0, 10.0], [-10.0, 10.0]])
    J = 0
    accumulation = "per-cell"
    T_default = 1

    def __init__(self, T=1):
        self.T_default = int(T)
        self.streams = {"eps": None}

    def simulate(self, theta, draws, data, anchor=None, smoother=None):
        a, b = self.unpack(theta)
        U = draws["eps"]
        n, T, R = U.shape
        xs = _sim_x(data, T, n, R, None)
        st = Stepper(theta, anchor, self.accumulation)
        ys = []
        for t in range(T):
            u = U[:, t, :]
            u_eff, _ = st.step(t, u, np.broadcast_to([0.0, 1.0], u.shape + (2,)))
            y = a + b * xs[t] + ad.norm_ppf(u_eff)
            st.outcome(y)
            ys.append(y)
        return SimPath(ys, st.weights, st.record, n, R)

    def simulate_observed(self, theta0, seed, n, T=None):
        T = int(T or self.T_default)
        x = draw_regressors(open_uniforms(generator(seed, 0), (n, T)))
        data = PanelData(np.zeros((n, T)), x, tuple(range(1, T + 1)))
        path = self.simulate(np.asarray(theta0, dtype=float),
                             {"eps": open_uniforms(generator(seed, 1), (n, T, 1))}, data)
        return PanelData(np.stack([yt[:, 0] for yt in path.y], axis=1), x, data.times)

    def aux_design(self):
        from ..auxiliary import SURDesign
        return SURDesign(levels=1)


class ThresholdToy(Model):
    """One observation, scalar theta: ``y = 1[Phi(theta) < u]``.

    Paired with the moment ``z (y - z beta)`` its expectation is
    ``z (1 - Phi(theta)) - z^2 beta``.
    """

    name = "threshold_toy"
    param_names = ("theta",)
    theta0 = (0.0,)
    bounds = np.array([[-4.0, 4.0]])
    J = 1
    accumulation = "per-cell"
    T_default = 1

    def __init__(self, z=1.5, beta=0.2):
        self.z = float(z)
        self.beta = float(beta)
        self.streams = {"eps": None}

    def critical_grid(self, theta):
        (th,) = self.unpack(theta)
        return ad.stack([0.0, ad.norm_cdf(th), 1.0])

    def analytic_moment(self, theta):
        from scipy.special import ndtr
        return self.z * (1.0 - ndtr(theta)) - self.z ** 2 * self.beta

    def analytic_derivative(self, theta):
        return -self.z * float(ad.norm_pdf(np.asarray(theta, dtype=float)))

    def simulate(self, theta, draws, data, anchor=None, smoother=None):
        U = draws["eps"]
        n, T, R = U.shape
        st = Stepper(theta, anchor, self.accumulation)
        grid = self.critical_grid(theta)
        u = U[:, 0, :]
        _, seg = st.step(0, u, ad.broadcast_to(grid, u.shape + (3,)))
        y = seg.astype(float)
        st.outcome(y)
        return SimPath([y], st.weights, st.record, n, R)

    def simulate_observed(self, theta0, seed, n=1, T=None):
        path = self.simulate(np.asarray(theta0, dtype=float),
                             {"eps": open_uniforms(generator(seed, 1), (n, 1, 1))},
                             PanelData(np.zeros((n, 1)), None, (1,)))
        return PanelData(path.y[0], None, (1,))

    def aux_design(self):
        from ..auxiliary import ProductMoment
        return ProductMoment(self.z)
