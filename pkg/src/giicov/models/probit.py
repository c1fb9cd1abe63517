"""Binary and ordered probit panels with serially correlated errors.

``DynamicProbit`` covers three designs:

* Model 1: ``y_it = 1[x_it gamma + v_it > 0]``, ``v_it = rho v_{i,t-1} + eps_it``;
* Model 2: adds ``alpha * y_{i,t-1}`` to the index;
* Model 3: Model 2 observed only in periods 3-5.
"""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..randsrc import generator, open_uniforms
from .base import Model, PanelData, SimPath, Stepper

X_MEAN, X_VAR = 1.0, 2.0


def draw_regressors(u):
    """N(1, 2) regressors from uniforms (variance 2)."""
    return X_MEAN + math.sqrt(X_VAR) * ad.norm_ppf(u)


def _sim_x(data, T, n, R, xpre_draws):
    """Regressors for all simulated periods, shape (n, T, R or 1).

    Periods outside the observed window are not in the data; their
    regressors are drawn from the known N(1, 2) process as part of the
    simulation.
    """
    observed = dict(zip(data.times, range(len(data.times))))
    cols = []
    for t in range(1, T + 1):
        if t in observed:
            cols.append(np.broadcast_to(data.x[:, observed[t], 0][:, None], (n, R)))
        else:
            cols.append(draw_regressors(xpre_draws[:, t - 1, :]))
    return cols


class DynamicProbit(Model):
    """Binary probit with AR(1) errors and an optional lagged outcome.

    Parameters
    ----------
    lagged : bool
        Include ``alpha * y_{t-1}`` in the index (Models 2 and 3).
    window : tuple of int, optional
        Observed periods; defaults to all of ``1..T``.
    T : int
        Simulated periods.
    accumulation : {"sequential", "per-cell"}
        How Jacobian weights enter the period-t moments.  The moments of
        period t involve ``y_{t-1}`` and the transformed draws of earlier
        periods, so only the running product of weights gives an unbiased
        derivative; ``"per-cell"`` keeps just the period-t weight.
    """

    J = 1

    def __init__(self, lagged=False, window=None, T=5, accumulation="sequential", name=None):
        self.lagged = lagged
        self.T_default = int(T)
        self.window = tuple(window) if window is not None else tuple(range(1, T + 1))
        if min(self.window) < 1 or max(self.window) > T:
            raise ValueError("observed window must lie inside 1..T")
        if accumulation not in ("per-cell", "sequential"):
            raise ValueError("accumulation must be 'per-cell' or 'sequential'")
        self.accumulation = accumulation
        if lagged:
            self.param_names = ("gamma", "alpha", "rho")
            self.theta0 = (1.0, 0.2, 0.4)
            self.bounds = np.array([[-5.0, 5.0], [-3.0, 3.0], [-0.95, 0.95]])
        else:
            self.param_names = ("gamma", "rho")
            self.theta0 = (1.0, 0.4)
            self.bounds = np.array([[-5.0, 5.0], [-0.95, 0.95]])
        default = "model1" if not lagged else ("model2" if len(self.window) == T else "model3")
        self.name = name or default
        self.streams = {"eps": None}
        if self.window[0] > 1:
            self.streams["xpre"] = None

    def split(self, theta):
        theta = self.unpack(theta)
        if self.lagged:
            return theta[0], theta[1], theta[2]
        return theta[0], None, theta[1]

    def index(self, theta, x, v, ylag=None):
        """Threshold argument ``-x gamma - alpha ylag - rho v``."""
        gamma, alpha, rho = self.split(theta)
        s = -(gamma * x) - rho * v
        if alpha is not None and ylag is not None:
            s = s - alpha * ylag
        return s

    def critical_grid(self, theta, x, v, ylag=None):
        """Grid ``(0, Phi(-x gamma - alpha ylag - rho v), 1)`` on the last axis."""
        c = ad.norm_cdf(self.index(theta, x, v, ylag))
        return ad.stack([0.0, c, 1.0])

    def simulate(self, theta, draws, data, anchor=None, smoother=None):
        U = draws["eps"]
        n, T, R = U.shape
        xs = _sim_x(data, T, n, R, draws.get("xpre"))
        gamma, alpha, rho = self.split(theta)
        st = Stepper(theta, anchor, self.accumulation)
        v = 0.0
        ylag = None
        ys = []
        for t in range(T):
            u = U[:, t, :]
            s = self.index(theta, xs[t], v, ylag)
            if smoother is not None:
                eps = ad.norm_ppf(u)
                y = smoother(eps - s)
                st.skip()
            else:
                c = ad.norm_cdf(s)
                u_eff, seg = st.step(t, u, ad.stack([0.0, c, 1.0]))
                eps = ad.norm_ppf(u_eff)
                y = seg.astype(float)
            st.outcome(y)
            ys.append(y)
            v = rho * v + eps
            ylag = y
        return SimPath(ys, st.weights, st.record, n, R)

    def simulate_observed(self, theta0, seed, n, T=None):
        T = int(T or self.T_default)
        if T != self.T_default:
            model = DynamicProbit(self.lagged, self.window if max(self.window) <= T else None, T,
                                  self.accumulation)
            return model.simulate_observed(theta0, seed, n)
        self.check_theta(theta0)
        x = draw_regressors(open_uniforms(generator(seed, 0), (n, T)))
        full = PanelData(np.zeros((n, T)), x, tuple(range(1, T + 1)))
        eps = open_uniforms(generator(seed, 1), (n, T, 1))
        path = self.simulate(np.asarray(theta0, dtype=float), {"eps": eps}, full)
        y = np.stack([yt[:, 0] for yt in path.y], axis=1)
        keep = [t - 1 for t in self.window]
        return PanelData(y[:, keep], x[:, keep], self.window)

    def sim_periods(self, data):
        return self.T_default

    def aux_design(self):
        from ..auxiliary import SURDesign
        return SURDesign(levels=1)


class OrderedProbit(Model):
    """Ordered probit panel with a normal individual effect.

    ``y_it = j`` when ``delta_j < x_it gamma + sigma v_i + e_it <= delta_{j+1}``.
    Parameters are ``(delta_1, ..., delta_J, gamma, sigma)``.  Weights
    accumulate over time because the auxiliary instruments include the
    lagged outcome.
    """

    def __init__(self, J=2, T=5, name="ordered", accumulation="sequential"):
        if J < 1:
            raise ValueError("J must be at least 1")
        self.J = int(J)
        self.T_default = int(T)
        self.name = name
        self.accumulation = accumulation
        self.param_names = tuple(f"delta{j}" for j in range(1, J + 1)) + ("gamma", "sigma")
        if J == 1:
            deltas = (0.0,)
        else:
            deltas = tuple(float(d) for d in np.linspace(-1.0, 1.0, J))
        self.theta0 = deltas + (1.0, 0.5)
        self.bounds = np.array([[-5.0, 5.0]] * J + [[-5.0, 5.0], [0.0, 3.0]])
        self.streams = {"eps": None, "effect": 1}

    def critical_grid(self, theta, x, v):
        theta = self.unpack(theta)
        deltas, gamma, sigma = theta[: self.J], theta[self.J], theta[self.J + 1]
        dv = ad.value_vector(deltas)
        if np.any(np.diff(dv) <= 0):
            raise ValueError(f"thresholds must be strictly increasing, got {dv.tolist()}")
        base = -(gamma * x) - sigma * v
        return ad.stack([0.0] + [ad.norm_cdf(d + base) for d in deltas] + [1.0])

    def simulate(self, theta, draws, data, anchor=None, smoother=None):
        U = draws["eps"]
        n, T, R = U.shape
        v = ad.norm_ppf(draws["effect"][:, 0, :])
        xs = _sim_x(data, T, n, R, None)
        st = Stepper(theta, anchor, self.accumulation)
        theta_l = self.unpack(theta)
        ys = []
        for t in range(T):
            u = U[:, t, :]
            if smoother is not None:
                eps = ad.norm_ppf(u)
                gamma, sigma = theta_l[self.J], theta_l[self.J + 1]
                latent = gamma * xs[t] + sigma * v + eps
                y = 0.0
                for d in theta_l[: self.J]:
                    y = y + smoother(latent - d)
                st.skip()
            else:
                _, seg = st.step(t, u, self.critical_grid(theta, xs[t], v))
                y = seg.astype(float)
            st.outcome(y)
            ys.append(y)
        return SimPath(ys, st.weights, st.record, n, R)

    def simulate_observed(self, theta0, seed, n, T=None):
        T = int(T or self.T_default)
        self.check_theta(theta0)
        x = draw_regressors(open_uniforms(generator(seed, 0), (n, T)))
        full = PanelData(np.zeros((n, T)), x, tuple(range(1, T + 1)))
        draws = {"eps": open_uniforms(generator(seed, 1), (n, T, 1)),
                 "effect": open_uniforms(generator(seed, 2), (n, 1, 1))}
        path = self.simulate(np.asarray(theta0, dtype=float), draws, full)
        y = np.stack([yt[:, 0] for yt in path.y], axis=1)
        return PanelData(y, x, full.times)

    def aux_design(self):
        from ..auxiliary import SURDesign
        return SURDesign(levels=self.J)
