"""Estimators: criteria, Newton with pathwise derivatives, baselines, variance.

:func:`estimate` is the one-call entry point used by the CLI and the Monte
Carlo harness.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import GiiError
from .baselines import default_bandwidth, giik_solve, nelder_mead, nelder_mead_solve
from .criteria import (Problem, criterion_derivatives, criterion_derivatives_at,
                       efficient_weight, lm_eval, wald_eval)
from .newton import Z95, CovEvaluator, EstimationResult, FDEvaluator, newton_solve
from .variance import moment_jacobian, sandwich_variance

METHODS = ("giicov", "giicov-fd", "gii1", "gii2", "nelder-mead")

__all__ = [
    "METHODS", "Z95", "CovEvaluator", "EstimationResult", "FDEvaluator", "Problem",
    "criterion_derivatives", "criterion_derivatives_at", "default_bandwidth",
    "efficient_weight", "estimate", "giik_solve", "grid_start", "lm_eval", "moment_jacobian",
    "nelder_mead", "nelder_mead_solve", "newton_solve", "sandwich_variance", "wald_eval",
]


def grid_start(problem, points=8):
    """Coarse scan of ``Q_n(theta, theta)`` over the box; returns the best point.

    Each axis gets ``points`` interior nodes, so the scan costs
    ``points ** d`` plain simulations.
    """
    model = problem.model
    axes = [lo + (hi - lo) * (np.arange(points) + 0.5) / points for lo, hi in model.bounds]
    best, best_q = None, np.inf
    for node in itertools.product(*axes):
        t = np.array(node)
        try:
            q = problem.quad(problem.standard_stat(t))
        except (GiiError, ValueError, FloatingPointError):
            continue
        if q < best_q:
            best, best_q = t, q
    if best is None:
        raise GiiError("criterion could not be evaluated anywhere on the start grid")
    return best


def estimate(problem, method="giicov", theta_start=None, hessian="gauss-newton",
             fd_step=None, bandwidth=None, variance="ad", tol_g=None, max_iter=200,
             step_tol=0.05):
    """Run one estimation and attach sandwich standard errors.

    Parameters
    ----------
    problem : Problem
    method : {"giicov", "giicov-fd", "gii1", "gii2", "nelder-mead"}
    theta_start : array_like, optional
        Defaults to a coarse grid scan of the criterion.
    hessian : {"gauss-newton", "full"}
        Newton Hessian for ``"giicov"``.
    fd_step : float, optional
        Difference step for ``"giicov-fd"``.
    bandwidth : float, optional
        Kernel bandwidth for ``"gii1"``.
    variance : {"ad", "fd", None}
        Scheme for the moment Jacobian in the sandwich; ``None`` skips it.

    Returns
    -------
    EstimationResult
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if theta_start is None:
        theta_start = grid_start(problem)
    theta_start = np.asarray(theta_start, dtype=float)
    problem.model.check_theta(theta_start)
    if method == "giicov":
        res = newton_solve(CovEvaluator(problem, hessian), theta_start, tol_g, max_iter, step_tol)
    elif method == "giicov-fd":
        res = newton_solve(FDEvaluator(problem, fd_step), theta_start, tol_g, max_iter, step_tol)
        res.meta["fd_step"] = FDEvaluator(problem, fd_step).step
    elif method == "gii1":
        res = giik_solve(problem, theta_start, bandwidth, False, max_iter=max_iter, tol_g=tol_g)
    elif method == "gii2":
        res = giik_solve(problem, theta_start, two_step=True, max_iter=max_iter, tol_g=tol_g)
    else:
        res = nelder_mead_solve(problem, theta_start)
    res.method = method
    res.meta.update({"criterion": problem.criterion, "R": problem.R, "nobs": problem.nobs})
    if variance is not None and np.all(np.isfinite(res.theta)):
        try:
            res.cov, res.se = sandwich_variance(problem, res.theta, variance)
        except (GiiError, ValueError, np.linalg.LinAlgError) as exc:
            res.meta["variance_error"] = str(exc)
    return res
