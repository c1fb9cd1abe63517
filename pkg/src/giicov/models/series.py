"""Time-series models whose discontinuities feed forward in time.

Both keep Jacobian weights as running products (``sequential``).  Data are
stored as a single unit (``n = 1``) observed for ``T`` periods.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..randsrc import generator, open_uniforms
from .base import Model, PanelData, SimPath, Stepper


def _series_data(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    return PanelData(y, None, tuple(range(1, y.shape[1] + 1)))


class ExpAR(Model):
    """Switching AR(1): ``y_t = phi y_{t-1} + mu v_t 1[u_t <= phi]``, ``v_t ~ Exp(1)``.

    The stationary mean is ``mu phi / (1 - phi)``.
    """

    name = "exp_ar"
    param_names = ("mu", "phi")
    theta0 = (1.0, 0.3)
    bounds = np.array([[0.05, 10.0], [0.01, 0.99]])
    J = 1
    accumulation = "sequential"
    T_default = 500

    def __init__(self):
        self.streams = {"switch": None, "size": None}

    def check_phi(self, phi):
        p = float(ad.value(phi))
        if not 0.0 < p < 1.0:
            raise ValueError(f"phi must lie in (0, 1), got {p}")

    def critical_grid(self, theta, shape=()):
        mu, phi = self.unpack(theta)
        self.check_phi(phi)
        return ad.stack([np.zeros(shape), ad.broadcast_to(phi, shape) if ad.is_dual(phi)
                         else np.full(shape, float(phi)), np.ones(shape)])

    def simulate(self, theta, draws, data, anchor=None, smoother=None):
        mu, phi = self.unpack(theta)
        self.check_phi(phi)
        U, P = draws["switch"], draws["size"]
        n, T, R = U.shape
        size = -np.log1p(-P)
        st = Stepper(theta, anchor, self.accumulation)
        y = np.zeros((n, R))
        ys = []
        for t in range(T):
            u = U[:, t, :]
            jump = mu * size[:, t, :]
            if smoother is not None:
                # 1[u <= phi] written as 1[phi - u >= 0]
                y = phi * y + jump * smoother(phi - u)
                st.skip()
            else:
                _, seg = st.step(t, u, self.critical_grid(theta, u.shape))
                y = phi * y + ad.where(seg == 0, jump, 0.0)
            st.outcome(y)
            ys.append(y)
        return SimPath(ys, st.weights, st.record, n, R)

    def simulate_observed(self, theta0, seed, n=1, T=None):
        T = int(T or self.T_default)
        self.check_theta(theta0)
        draws = {"switch": open_uniforms(generator(seed, 0), (n, T, 1)),
                 "size": open_uniforms(generator(seed, 1), (n, T, 1))}
        path = self.simulate(np.asarray(theta0, dtype=float), draws,
                             PanelData(np.zeros((n, T)), None, tuple(range(1, T + 1))))
        return PanelData(np.stack([yt[:, 0] for yt in path.y], axis=1), None,
                         tuple(range(1, T + 1)))

    def aux_design(self):
        from ..auxiliary import LagRegressionDesign
        return LagRegressionDesign()


class Queue(Model):
    """Single-server FIFO queue with exponential service and inter-arrival times.

    Observables are inter-departure times ``y_i``; time is measured from the
    first customer's arrival, so ``y_1 = v_1`` and the first inter-arrival
    gap is never used.  With ``e_i`` the work left when customer ``i``
    arrives (measured against the arrival clock), customer ``i`` waits when
    ``w_i <= e_i``, i.e. when ``u_i <= F_w(e_i)``.

    Parameters are the means ``(theta_v, theta_w)`` of service and
    inter-arrival times; the bounds keep ``theta_v < theta_w``.
    """

    name = "queue"
    param_names = ("theta_v", "theta_w")
    theta0 = (0.5, 1.0)
    bounds = np.array([[0.05, 0.95], [1.0, 5.0]])
    J = 1
    accumulation = "sequential"
    T_default = 200

    def __init__(self):
        self.streams = {"service": None, "arrival": None}

    def check_stable(self, theta):
        tv, tw = ad.value_vector(theta)
        if not (tv > 0 and tw > tv):
            raise ValueError(f"unstable queue: need 0 < theta_v < theta_w, got {(tv, tw)}")

    def critical_grid(self, theta, e):
        """Grid ``(0, F_w(e), 1)`` with ``F_w`` exponential with mean theta_w."""
        _, tw = self.unpack(theta)
        c = -ad.expm1(-(e / tw))
        return ad.stack([0.0, c, 1.0])

    def simulate(self, theta, draws, data, anchor=None, smoother=None):
        tv, tw = self.unpack(theta)
        self.check_stable(theta)
        Uv, Uw = draws["service"], draws["arrival"]
        n, T, R = Uv.shape
        service = -np.log1p(-Uv)
        st = Stepper(theta, anchor, self.accumulation)
        ys = []
        v = tv * service[:, 0, :]
        A = np.zeros((n, R))   # arrival clock
        D = v                  # departure time of the previous customer
        st.skip()
        st.outcome(v)
        ys.append(v)
        for t in range(1, T):
            v = tv * service[:, t, :]
            e = D - A
            u = Uw[:, t, :]
            if smoother is not None:
                w = -(tw * np.log1p(-u))
                A = A + w
                idle = smoother(w - e)
                D_new = D + v + idle * (A - D)
                st.skip()
            else:
                u_eff, seg = st.step(t, u, self.critical_grid(theta, e))
                w = -(tw * ad.log1p(-u_eff))
                A = A + w
                D_new = ad.where(seg == 0, D + v, A + v)
            y = D_new - D
            D = D_new
            st.outcome(y)
            ys.append(y)
        return SimPath(ys, st.weights, st.record, n, R)

    def simulate_observed(self, theta0, seed, n=1, T=None):
        T = int(T or self.T_default)
        self.check_theta(theta0)
        draws = {"service": open_uniforms(generator(seed, 0), (n, T, 1)),
                 "arrival": open_uniforms(generator(seed, 1), (n, T, 1))}
        path = self.simulate(np.asarray(theta0, dtype=float), draws,
                             PanelData(np.zeros((n, T)), None, tuple(range(1, T + 1))))
        return PanelData(np.stack([yt[:, 0] for yt in path.y], axis=1), None,
                         tuple(range(1, T + 1)))

    def aux_design(self):
        from ..auxiliary import MixtureDesign
        return MixtureDesign()
