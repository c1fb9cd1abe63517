"""LM and Wald criteria, weighting matrices and the estimation problem bundle."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..errors import RankError
from ..randsrc import SeedSpec

RIDGE = 1e-10
CRITERIA = ("lm", "wald")
WEIGHTS = ("identity", "efficient")


def observed_xi(aux, data, beta):
    """``n^{-1} sum_i m_i m_i'`` from observed contributions at ``beta``."""
    m = aux.contributions(data, beta)
    return m.T @ m / m.shape[0]


def _regularized_inverse(xi, what):
    d = xi.shape[0]
    if not np.all(np.isfinite(xi)):
        raise RankError(f"{what} has non-finite entries")
    cond = np.linalg.cond(xi)
    if not np.isfinite(cond) or cond > 1e12:
        warnings.warn(f"{what} is near singular (condition {cond:.3g}); relying on the ridge",
                      RuntimeWarning, stacklevel=3)
    reg = xi + RIDGE * np.eye(d)
    try:
        np.linalg.cholesky(reg)
    except np.linalg.LinAlgError:
        raise RankError(f"{what} is not positive definite even after the ridge") from None
    omega = np.linalg.inv(reg)
    return 0.5 * (omega + omega.T)


def efficient_weight(aux, data, beta, criterion="lm"):
    """Efficient weighting matrix.

    For the LM criterion this is ``[Xi_hat + ridge I]^{-1}``.  For the Wald
    criterion it is ``Lambda' [Xi_hat + ridge I]^{-1} Lambda`` with
    ``Lambda`` the beta-derivative of the moments.
    """
    xi = observed_xi(aux, data, beta)
    omega = _regularized_inverse(xi, "moment covariance")
    if criterion == "wald":
        lam = aux.beta_jacobian(data, beta)
        omega = lam.T @ omega @ lam
        omega = 0.5 * (omega + omega.T)
    return omega


def check_weight(omega):
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ValueError("weighting matrix must be square")
    if not np.allclose(omega, omega.T, rtol=1e-10, atol=1e-12):
        raise ValueError("weighting matrix must be symmetric")
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise ValueError("weighting matrix must be positive definite") from None
    return omega


@dataclass
class Problem:
    """Everything needed to evaluate a criterion for one dataset.

    Attributes
    ----------
    model, aux : model and auxiliary design
    data : PanelData
    draws : dict of uniform arrays used for simulation (common random numbers)
    beta_hat : auxiliary estimate on the observed data
    omega : weighting matrix
    criterion : ``"lm"`` or ``"wald"``
    """

    model: object
    aux: object
    data: object
    draws: dict
    beta_hat: np.ndarray
    omega: np.ndarray
    criterion: str = "lm"
    seed: SeedSpec | None = None
    extra_draws: dict = field(default_factory=dict)

    @classmethod
    def build(cls, model, data, seed, R, criterion="lm", weight="efficient", aux=None, omega=None):
        if criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if weight not in WEIGHTS:
            raise ValueError(f"weight must be one of {WEIGHTS}")
        aux = aux if aux is not None else model.aux_design()
        beta = aux.fit_observed(data)
        if omega is None:
            omega = (efficient_weight(aux, data, beta, criterion) if weight == "efficient"
                     else np.eye(beta.size))
        draws = model.sim_draws(seed, data, R)
        return cls(model, aux, data, draws, beta, check_weight(omega), criterion, seed)

    @property
    def R(self):
        return next(iter(self.draws.values())).shape[2]

    @property
    def nobs(self):
        return self.aux.contributions(self.data, self.beta_hat).shape[0]

    def draws_for(self, R):
        """Simulation draws with a different number of paths (cached)."""
        if R == self.R:
            return self.draws
        if R not in self.extra_draws:
            if self.seed is None:
                raise ValueError("problem has no seed to draw extra paths from")
            self.extra_draws[R] = self.model.draws(
                self.seed, self.data.n, self.model.sim_periods(self.data), R, offset=200 + R)
        return self.extra_draws[R]

    # -- statistics whose Omega-norm is the criterion -------------------
    def _stat(self, path):
        if self.criterion == "lm":
            return self.aux.sim_moments(path, self.data, self.beta_hat)
        return self.aux.binding(path, self.data, self.beta_hat) - self.beta_hat

    def standard_stat(self, theta, draws=None):
        """Plain simulation at ``theta`` (the criterion as a step function)."""
        path = self.model.simulate(np.asarray(theta, dtype=float), draws or self.draws, self.data)
        return ad.value(self._stat(path))

    def anchor(self, theta_star, draws=None):
        return self.model.simulate(np.asarray(theta_star, dtype=float), draws or self.draws,
                                   self.data).anchor

    def cov_stat(self, theta_star, order=1, draws=None, theta=None):
        """Dual-valued statistic under the change of variables anchored at ``theta*``.

        Evaluated at ``theta`` (default ``theta*``).
        """
        draws = draws or self.draws
        anc = self.anchor(theta_star, draws)
        at = theta_star if theta is None else theta
        path = self.model.simulate(ad.seed_parameter(at, order), draws, self.data, anchor=anc)
        return self._stat(path)

    def cov_stat_at(self, theta, theta_star, draws=None):
        """Weighted statistic at ``theta`` with the anchor held at ``theta*``."""
        draws = draws or self.draws
        anc = self.anchor(theta_star, draws)
        path = self.model.simulate(np.asarray(theta, dtype=float), draws, self.data, anchor=anc)
        return ad.value(self._stat(path))

    def smoothed_stat(self, theta, smoother, draws=None):
        path = self.model.simulate(np.asarray(theta, dtype=float), draws or self.draws, self.data,
                                   smoother=smoother)
        return ad.value(self._stat(path))

    def quad(self, s):
        s = np.asarray(s, dtype=float)
        return float(s @ self.omega @ s)


def criterion_derivatives(stat, omega, hessian="gauss-newton"):
    """``(Q, gradient, Hessian)`` of ``Q = s' Omega s`` from a dual ``s``."""
    s, D, H2 = stat.val, stat.grad, stat.hess
    Os = omega @ s
    Q = float(s @ Os)
    g = 2.0 * D.T @ Os
    H = 2.0 * D.T @ omega @ D
    if hessian == "full":
        if H2 is None:
            raise ValueError("full Hessian needs second-order duals")
        H = H + 2.0 * np.einsum("i,ijk->jk", Os, H2)
    elif hessian != "gauss-newton":
        raise ValueError("hessian must be 'gauss-newton' or 'full'")
    return Q, g, 0.5 * (H + H.T)


def criterion_derivatives_at(problem, theta, theta_star, hessian="gauss-newton"):
    """``(Q, gradient, Hessian)`` of ``theta -> Q(theta, theta*)`` at ``theta``."""
    order = 2 if hessian == "full" else 1
    return criterion_derivatives(problem.cov_stat(theta_star, order, theta=theta),
                                 problem.omega, hessian)


def lm_eval(problem, theta_star, hessian="gauss-newton"):
    """LM criterion, gradient and Hessian at ``theta = theta*``."""
    if problem.criterion != "lm":
        problem = _with_criterion(problem, "lm")
    order = 2 if hessian == "full" else 1
    return criterion_derivatives(problem.cov_stat(theta_star, order), problem.omega, hessian)


def wald_eval(problem, theta_star, hessian="gauss-newton"):
    """Wald criterion ``||beta_bar(theta, theta*) - beta_hat||^2``, with derivatives."""
    if problem.criterion != "wald":
        problem = _with_criterion(problem, "wald")
    order = 2 if hessian == "full" else 1
    return criterion_derivatives(problem.cov_stat(theta_star, order), problem.omega, hessian)


def _with_criterion(problem, criterion):
    from dataclasses import replace
    omega = problem.omega
    if omega.shape[0] != problem.beta_hat.size:
        omega = np.eye(problem.beta_hat.size)
    return replace(problem, criterion=criterion, omega=omega)
