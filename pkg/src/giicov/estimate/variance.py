"""Sandwich variance of the estimator and Wald confidence intervals."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..errors import RankError
from .criteria import observed_xi

SCHEMES = ("ad", "fd")


def moment_jacobian(problem, theta, scheme="ad", step=None):
    """``Delta = d M_n / d theta`` at ``theta``.

    ``"ad"`` uses the change-of-variables dual simulation anchored at
    ``theta``; ``"fd"`` uses central differences of the plain simulated
    moments with step ``0.1 n^{-1/4}`` unless ``step`` is given.
    """
    theta = np.asarray(theta, dtype=float)
    aux, data, beta = problem.aux, problem.data, problem.beta_hat
    model, draws = problem.model, problem.draws
    if scheme == "ad":
        anc = problem.anchor(theta)
        path = model.simulate(ad.seed_parameter(theta, 1), draws, data, anchor=anc)
        m = aux.sim_moments(path, data, beta)
        return np.asarray(m.grad, dtype=float)
    if scheme != "fd":
        raise ValueError(f"scheme must be one of {SCHEMES}")
    h = step if step is not None else 0.1 * problem.nobs ** -0.25

    def moments(t):
        return ad.value(aux.sim_moments(model.simulate(t, draws, data), data, beta))

    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        cols.append((moments(theta + e) - moments(theta - e)) / (2.0 * h))
    return np.column_stack(cols)


def _bread(D, omega, what):
    A = D.T @ omega @ D
    A = 0.5 * (A + A.T)
    ev = np.linalg.eigvalsh(A)
    if ev[0] <= 1e-12 * max(ev[-1], 1e-300):
        raise RankError(f"{what} is singular; the parameters are not identified by these moments")
    return np.linalg.inv(A)


def sandwich_variance(problem, theta, scheme="ad", step=None):
    """Covariance matrix of ``theta_hat`` and its standard errors.

    LM criterion::

        (D' W D)^{-1} D' W Xi W D (D' W D)^{-1} (1 + 1/R) / n

    Wald criterion: the same with ``D`` replaced by ``G = -L^{-1} D`` and
    ``Xi`` by ``L^{-1} Xi L^{-1}'``, ``L`` being the beta-derivative of the
    observed moments.

    Returns
    -------
    cov : ndarray, shape (d, d)
    se : ndarray, shape (d,)
    """
    D = moment_jacobian(problem, theta, scheme, step)
    data, beta, omega = problem.data, problem.beta_hat, problem.omega
    xi = observed_xi(problem.aux, data, beta)
    n = problem.nobs
    if problem.criterion == "wald":
        L = problem.aux.beta_jacobian(data, beta)
        try:
            Linv = np.linalg.inv(L)
        except np.linalg.LinAlgError:
            raise RankError("auxiliary moment Jacobian is singular") from None
        D = -Linv @ D
        xi = Linv @ xi @ Linv.T
    bread = _bread(D, omega, "D' W D")
    meat = D.T @ omega @ xi @ omega @ D
    cov = bread @ meat @ bread * (1.0 + 1.0 / problem.R) / n
    cov = 0.5 * (cov + cov.T)
    return cov, np.sqrt(np.clip(np.diag(cov), 0.0, None))
