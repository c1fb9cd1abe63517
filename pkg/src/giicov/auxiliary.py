"""Auxiliary moment designs and binding functions.

A design turns outcomes into moment contributions ``m(y, z, beta)``.  The
same code serves observed data (plain arrays, ``R = 1``) and simulated paths
(possibly dual-valued, with Jacobian weights multiplied in).
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod

import numpy as np
from scipy import optimize

from . import autodiff as ad
from .errors import DomainError, RankError

log = logging.getLogger(__name__)

COND_MAX = 1e12


def _observed_ys(data):
    return [data.y[:, k][:, None] for k in range(data.T)]


def _sim_ys(path, data):
    return [path.y[t - 1] for t in data.times], [path.weight[t - 1] for t in data.times]


def _slice_path(path, r):
    from .models.base import SimPath
    ys = [y[:, r:r + 1] if np.ndim(ad.value(y)) else y for y in path.y]
    ws = [None if w is None else w[:, r:r + 1] for w in path.weight]
    return SimPath(ys, ws, None, path.n, 1)


def _weighted(term, w):
    """Multiply a ``(..., k)`` term by a ``(...)`` weight."""
    if w is None:
        return term
    return term * w[..., None]


class AuxDesign(ABC):
    """Interface for auxiliary moment designs."""

    @abstractmethod
    def fit_observed(self, data) -> np.ndarray:
        """Solve the sample moment conditions on observed data."""

    @abstractmethod
    def contributions(self, data, beta) -> np.ndarray:
        """Observed moment contributions, one row per observation."""

    @abstractmethod
    def sim_moments(self, path, data, beta, per_path=False):
        """Average of weighted simulated moments; ``(R, d)`` when ``per_path``."""

    def observed_moments(self, data, beta):
        return self.contributions(data, beta).mean(axis=0)

    def nobs(self, data):
        return self.contributions(data, self.fit_observed(data)).shape[0]

    def binding(self, path, data, beta_start=None):
        """Average over paths of the auxiliary estimate on simulated data."""
        return self.binding_moment_form(path, data, beta_start)

    def beta_jacobian(self, data, beta, step=1e-6):
        """Central-difference ``d/d beta`` of the observed moment average."""
        beta = np.asarray(beta, dtype=float)
        cols = []
        for k in range(beta.size):
            h = step * (1.0 + abs(beta[k]))
            e = np.zeros_like(beta)
            e[k] = h
            cols.append((self.observed_moments(data, beta + e)
                         - self.observed_moments(data, beta - e)) / (2.0 * h))
        return np.column_stack(cols)

    def binding_moment_form(self, path, data, beta_start=None, tol=1e-13, max_iter=100):
        """Binding function from the per-path moment equations.

        Each path's estimate solves ``sum_i m(y_i^r, beta) w_i^r = 0``; its
        theta-derivative follows from the implicit function theorem.
        """
        beta0 = self.fit_observed_like(path, data) if beta_start is None else np.asarray(beta_start)
        vals, grads = [], []
        for r in range(path.R):
            pr = _slice_path(path, r)

            def g(b):
                return ad.value(self.sim_moments(pr, data, b))

            b = np.array(beta0, dtype=float)
            for _ in range(max_iter):
                m = g(b)
                jac = _fd_jacobian(g, b)
                step = np.linalg.solve(jac, m)
                b = b - step
                if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(b))):
                    break
            vals.append(b)
            md = self.sim_moments(pr, data, b)
            if ad.is_dual(md):
                jac = _fd_jacobian(g, b)
                grads.append(-np.linalg.solve(jac, md.grad))
        val = np.mean(vals, axis=0)
        if not grads:
            return val
        return ad.Dual(val, np.mean(grads, axis=0))

    def fit_observed_like(self, path, data):
        """Starting value for per-path solves: fit the first simulated path."""
        return self.fit_observed(data)


def _fd_jacobian(g, b, step=1e-6):
    cols = []
    for k in range(b.size):
        h = step * (1.0 + abs(b[k]))
        e = np.zeros_like(b)
        e[k] = h
        cols.append((g(b + e) - g(b - e)) / (2.0 * h))
    return np.column_stack(cols)


def _check_gram(a, what):
    a = np.asarray(a)
    c = np.linalg.cond(a)
    if not np.isfinite(c) or c > COND_MAX:
        raise RankError(f"{what} is rank deficient (condition number {c:.3g})")


class LinearDesign(AuxDesign):
    """Least-squares moments ``z (resp - z' beta)`` pooled over pieces.

    Subclasses describe equations through :meth:`equations`, which returns a
    list of equations, each a list of pieces ``(z, [responses], k)`` where
    ``z`` is ``(n, R, p)``, each response is ``(n, R)`` and ``k`` indexes the
    period whose weight applies.  Pieces of one equation share coefficients.
    """

    @abstractmethod
    def equations(self, ys, data):
        ...

    def _pieces(self, ys, data):
        eqs = self.equations(ys, data)
        if not eqs:
            raise ValueError("design produced no equations")
        return eqs

    def fit_observed(self, data):
        beta = []
        for eq in self._pieces(_observed_ys(data), data):
            p = eq[0][0].shape[-1]
            nresp = len(eq[0][1])
            A = np.zeros((p, p))
            bs = np.zeros((nresp, p))
            for z, resps, _ in eq:
                z = ad.value(z)[:, 0, :]
                A += z.T @ z
                for j, resp in enumerate(resps):
                    bs[j] += z.T @ ad.value(resp)[:, 0]
            _check_gram(A, "auxiliary Gram matrix")
            for j in range(nresp):
                beta.append(np.linalg.solve(A, bs[j]))
        return np.concatenate(beta)

    def _terms(self, ys, ws, data, beta, axes):
        out = []
        pos = 0
        for eq in self._pieces(ys, data):
            p = eq[0][0].shape[-1]
            count = 0
            acc = [None] * len(eq[0][1])
            for z, resps, k in eq:
                shape = ad.value(z).shape[:-1]
                for j, resp in enumerate(resps):
                    b = beta[pos + j * p: pos + (j + 1) * p]
                    resid = resp - (z * b).sum(axis=-1)
                    term = _weighted(z * resid[..., None], ws[k]).sum(axis=axes)
                    acc[j] = term if acc[j] is None else acc[j] + term
                count += int(np.prod([shape[a] for a in axes]))
            out.extend(a / float(count) for a in acc)
            pos += p * len(acc)
        return out

    def sim_moments(self, path, data, beta, per_path=False):
        ys, ws = _sim_ys(path, data)
        beta = np.asarray(beta, dtype=float)
        if per_path:
            terms = self._terms(ys, ws, data, beta, (0,))
            return _concat_last(terms)
        return ad.concatenate(self._terms(ys, ws, data, beta, (0, 1)))

    def contributions(self, data, beta):
        ys = _observed_ys(data)
        beta = np.asarray(beta, dtype=float)
        blocks = []
        pos = 0
        for eq in self._pieces(ys, data):
            p = eq[0][0].shape[-1]
            cols = []
            for j in range(len(eq[0][1])):
                b = beta[pos + j * p: pos + (j + 1) * p]
                rows = []
                for z, resps, _ in eq:
                    z = ad.value(z)[:, 0, :]
                    rows.append(z * (ad.value(resps[j])[:, 0] - z @ b)[:, None])
                cols.append(np.concatenate(rows, axis=0))
            blocks.append(np.concatenate(cols, axis=1))
            pos += p * len(eq[0][1])
        nrows = {b.shape[0] for b in blocks}
        if len(nrows) != 1:
            raise ValueError("equations disagree on the number of observations")
        return np.concatenate(blocks, axis=1)

    def binding(self, path, data, beta_start=None):
        """Closed form: per-path weighted least squares, averaged over paths."""
        ys, ws = _sim_ys(path, data)
        out = []
        for eq in self._pieces(ys, data):
            A = None
            bs = [None] * len(eq[0][1])
            for z, resps, k in eq:
                zz = z[..., :, None] * z[..., None, :]
                w = ws[k]
                a = (zz if w is None else zz * w[..., None, None]).sum(axis=0)
                A = a if A is None else A + a
                for j, resp in enumerate(resps):
                    zy = z * (resp if w is None else resp * w)[..., None]
                    b = zy.sum(axis=0)
                    bs[j] = b if bs[j] is None else bs[j] + b
            for j in range(len(bs)):
                _check_gram(ad.value(A)[0], "simulated Gram matrix")
                out.append(_mean0(ad.solve(A, bs[j])))
        return ad.concatenate(out)


def _mean0(x):
    return x.mean(axis=0) if ad.is_dual(x) else x.sum(axis=0) / float(x.shape[0])


def _concat_last(items):
    ref = ad.find_dual(*items)
    if ref is None:
        return np.concatenate(items, axis=-1)
    duals = [v if ad.is_dual(v) else ad.constant(v, ref) for v in items]
    return ad.Dual(np.concatenate([v.val for v in duals], axis=-1),
                   np.concatenate([v.grad for v in duals], axis=-2),
                   None if ref.hess is None else np.concatenate([v.hess for v in duals], axis=-3))


def _regressor(data, k, shape):
    return np.broadcast_to(data.x[:, k, 0][:, None], shape)


class SURDesign(LinearDesign):
    """Period-by-period linear probability equations.

    The first observed period uses ``z = (1, x_t)``; later periods use
    ``z = (1, x_t, x_{t-1}, y_{t-1})`` with the lagged outcome taken from
    the same (observed or simulated) path.  With ``levels = J > 1`` each
    period carries ``J`` responses ``1[y_t = j]``.
    """

    def __init__(self, levels=1, lags=True):
        self.levels = int(levels)
        self.lags = lags

    def _responses(self, y):
        if self.levels == 1:
            return [y]
        yv = ad.value(y)
        return [(yv == j).astype(float) for j in range(1, self.levels + 1)]

    def equations(self, ys, data):
        if data.x is None:
            raise ValueError("SUR design needs regressors")
        eqs = []
        for k, y in enumerate(ys):
            shape = ad.value(y).shape
            one = np.ones(shape)
            x = _regressor(data, k, shape)
            if k == 0 or not self.lags:
                z = ad.stack([one, x])
            else:
                z = ad.stack([one, x, _regressor(data, k - 1, shape), ad.broadcast_to(ys[k - 1], shape)])
            eqs.append([(z, self._responses(y), k)])
        return eqs


class LagRegressionDesign(LinearDesign):
    """Pooled regression of ``y_t`` on ``(1, y_{t-1})`` for ``t >= 2``."""

    def equations(self, ys, data):
        if len(ys) < 3:
            raise ValueError("lag regression needs at least three periods")
        pieces = []
        for k in range(1, len(ys)):
            shape = ad.value(ys[k]).shape
            z = ad.stack([np.ones(shape), ad.broadcast_to(ys[k - 1], shape)])
            pieces.append((z, [ys[k]], k))
        return [pieces]


class ProductMoment(LinearDesign):
    """Single moment ``z (y - z beta)`` with a fixed scalar instrument."""

    def __init__(self, z):
        self.z = float(z)

    def equations(self, ys, data):
        shape = ad.value(ys[0]).shape
        return [[(np.full(shape + (1,), self.z), [ys[0]], 0)]]


# ----------------------------------------------------------------------
# Gaussian mixture


def _sigmoid(s):
    s = ad.where(ad.value(s) > 700.0, 700.0, ad.where(ad.value(s) < -700.0, -700.0, s))
    return 1.0 / (1.0 + ad.exp(-s))


def check_mixture(beta):
    mu1, s1, mu2, s2, pi = (float(b) for b in beta)
    if not (s1 > 0 and s2 > 0):
        raise DomainError("mixture variances must be positive", min(s1, s2))
    if not 0 < pi < 1:
        raise DomainError("mixture weight must lie in (0, 1)", pi)


def mixture_responsibility(y, beta):
    """Posterior probability of the second component."""
    mu1, s1, mu2, s2, pi = (float(b) for b in beta)
    d1, d2 = y - mu1, y - mu2
    l1 = -0.5 * (d1 * d1) / s1 - 0.5 * np.log(s1)
    l2 = -0.5 * (d2 * d2) / s2 - 0.5 * np.log(s2)
    return _sigmoid(l2 - l1 + np.log(pi / (1.0 - pi)))


def mixture_moments(y, beta):
    """The five mixture moment functions, stacked on a new last axis.

    ``beta = (mu1, sigma1^2, mu2, sigma2^2, pi)``.
    """
    check_mixture(beta)
    mu1, s1, mu2, s2, pi = (float(b) for b in beta)
    g = mixture_responsibility(y, beta)
    h = 1.0 - g
    d1, d2 = y - mu1, y - mu2
    return ad.stack([h * d1, g * d2, h * (d1 * d1 - s1), g * (d2 * d2 - s2), g - pi])


def _em(y, beta, iters=500, tol=1e-12):
    beta = np.asarray(beta, dtype=float)
    for _ in range(iters):
        g = mixture_responsibility(y, beta)
        h = 1.0 - g
        mu1 = (h * y).sum() / h.sum()
        mu2 = (g * y).sum() / g.sum()
        s1 = (h * (y - mu1) ** 2).sum() / h.sum()
        s2 = (g * (y - mu2) ** 2).sum() / g.sum()
        new = np.array([mu1, s1, mu2, s2, g.mean()])
        if np.max(np.abs(new - beta)) < tol:
            return new
        beta = new
    return beta


class MixtureDesign(AuxDesign):
    """Two-component Gaussian mixture moments on every observation."""

    def fit_observed(self, data):
        y = data.y.ravel()
        return self._fit(y)

    def _fit(self, y):
        med = np.median(y)
        lo, hi = y[y <= med], y[y > med]
        if lo.size < 2 or hi.size < 2:
            raise RankError("too few observations to initialise the mixture")
        start = np.array([lo.mean(), lo.var(), hi.mean(), hi.var(), 0.5])
        start[[1, 3]] = np.maximum(start[[1, 3]], 1e-6 * max(y.var(), 1e-12))
        beta = _em(y, start)
        sol = optimize.root(lambda b: mixture_moments(y, b).mean(axis=0) if _valid(b)
                            else np.full(5, 1e6), beta, method="hybr")
        if sol.success and _valid(sol.x):
            beta = sol.x
        else:
            log.warning("mixture root polish failed (%s); keeping EM fixed point", sol.message)
        check_mixture(beta)
        return beta

    def contributions(self, data, beta):
        return mixture_moments(data.y.reshape(-1), beta)

    def sim_moments(self, path, data, beta, per_path=False):
        ys, ws = _sim_ys(path, data)
        axes = (0,) if per_path else (0, 1)
        acc = None
        count = 0
        for y, w in zip(ys, ws):
            term = _weighted(mixture_moments(y, beta), w).sum(axis=axes)
            acc = term if acc is None else acc + term
            shape = ad.value(y).shape
            count += int(np.prod([shape[a] for a in axes]))
        return acc / float(count)

    def fit_observed_like(self, path, data):
        return self.fit_observed(data)


def _valid(b):
    return b[1] > 0 and b[3] > 0 and 0 < b[4] < 1
