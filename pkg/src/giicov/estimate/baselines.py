"""Baseline estimators: kernel-smoothed GII and Nelder-Mead on the step criterion."""

from __future__ import annotations

import time

import numpy as np
from scipy import optimize

from ..errors import GiiError
from ..models.base import Smoother
from .newton import EstimationResult

GII2_SCHEDULE = ((0.03, 10), (0.003, 300))


def default_bandwidth(n):
    """Single-step GII bandwidth: 0.08 for small panels, 0.045 from n = 1000 on."""
    return 0.08 if n < 1000 else 0.045


def _fd_grad(f, theta, lo, hi):
    g = np.empty_like(theta)
    for k in range(theta.size):
        h = 1e-5 * (1.0 + abs(theta[k]))
        up, dn = theta.copy(), theta.copy()
        up[k] = min(theta[k] + h, hi[k])
        dn[k] = max(theta[k] - h, lo[k])
        if up[k] == dn[k]:
            g[k] = 0.0
            continue
        g[k] = (f(up) - f(dn)) / (up[k] - dn[k])
    return g


def _smoothed_solve(problem, bandwidth, theta_start, draws, kernel, max_iter, tol_g):
    model = problem.model
    sm = Smoother(bandwidth, kernel)
    lo, hi = model.bounds[:, 0], model.bounds[:, 1]
    count = [0]

    def f(t):
        count[0] += 1
        try:
            return problem.quad(problem.smoothed_stat(t, sm, draws))
        except (GiiError, ValueError, FloatingPointError):
            return 1e300

    def fun(t):
        t = np.clip(t, lo, hi)
        q = f(t)
        return q, _fd_grad(f, t, lo, hi)

    res = optimize.minimize(fun, np.clip(theta_start, lo, hi), jac=True, method="L-BFGS-B",
                            bounds=list(zip(lo, hi)),
                            options={"maxiter": max_iter, "gtol": tol_g, "ftol": 1e-15})
    q, g = fun(res.x)
    return res, q, g, count[0]


def giik_solve(problem, theta_start, bandwidth=None, two_step=False, kernel="normal",
               max_iter=200, tol_g=None):
    """Generalized indirect inference with kernel-smoothed outcomes.

    Parameters
    ----------
    problem : Problem
    theta_start : array_like
    bandwidth : float, optional
        Kernel bandwidth for the single-step variant.  Defaults to
        :func:`default_bandwidth` of the panel size.
    two_step : bool
        Run the two-step schedule (0.03 with the problem's paths, then
        0.003 with 300 paths) instead of a single bandwidth.
    kernel : {"normal", "logistic"}

    Notes
    -----
    Optimization is L-BFGS-B with central-difference gradients of step
    ``1e-5 (1 + |theta_k|)``.
    """
    t0 = time.perf_counter()
    theta = np.asarray(theta_start, dtype=float)
    d = theta.size
    tol_g = 1e-8 * d if tol_g is None else tol_g
    if two_step:
        stages = [(GII2_SCHEDULE[0][0], problem.R), GII2_SCHEDULE[1]]
    else:
        lam = default_bandwidth(problem.data.n) if bandwidth is None else float(bandwidth)
        stages = [(lam, problem.R)]
    for lam, _ in stages:
        if not lam > 0:
            raise ValueError(f"bandwidth must be positive, got {lam}")
    evals, iters, meta = 0, 0, {"stages": []}
    for lam, R in stages:
        res, q, g, k = _smoothed_solve(problem, lam, theta, problem.draws_for(R), kernel,
                                       max_iter, tol_g)
        theta = np.clip(res.x, problem.model.bounds[:, 0], problem.model.bounds[:, 1])
        evals += k
        iters += int(res.nit)
        meta["stages"].append({"bandwidth": lam, "R": R, "message": str(res.message)})
    gn = float(np.linalg.norm(g))
    return EstimationResult(
        theta=theta, criterion=q, grad_norm=gn, iterations=iters, converged=bool(res.success),
        stop_reason=str(res.message), elapsed=time.perf_counter() - t0,
        method="gii2" if two_step else "gii1", evaluations=evals,
        meta={**meta, "bandwidth": stages[-1][0], "kernel": kernel},
    )


def nelder_mead(f, x0, bounds=None, xtol=1e-6, max_evals=None):
    """Minimize ``f`` with the standard Nelder-Mead simplex.

    Coefficients are the classical ones (reflection 1, expansion 2,
    contraction 0.5, shrink 0.5).  Stops when every vertex is within
    ``xtol`` of the best one, or after ``max_evals`` evaluations (default
    ``500 d``).  Returns the scipy result; ``x`` is always the best vertex.
    """
    x0 = np.asarray(x0, dtype=float)
    max_evals = 500 * x0.size if max_evals is None else int(max_evals)
    return optimize.minimize(f, x0, method="Nelder-Mead", bounds=bounds,
                             options={"xatol": xtol, "fatol": np.inf, "maxfev": max_evals,
                                      "adaptive": False})


def nelder_mead_solve(problem, theta_start, xtol=1e-6, max_evals=None):
    """Nelder-Mead on ``Q_n(theta, theta)`` from plain simulations."""
    t0 = time.perf_counter()
    model = problem.model
    theta = model.project(np.asarray(theta_start, dtype=float))

    def f(t):
        try:
            return problem.quad(problem.standard_stat(model.project(t)))
        except (GiiError, ValueError, FloatingPointError):
            return np.inf

    res = nelder_mead(f, theta, [tuple(b) for b in model.bounds], xtol, max_evals)
    x = model.project(res.x)
    return EstimationResult(
        theta=x, criterion=float(res.fun), grad_norm=np.nan, iterations=int(res.nit),
        converged=bool(res.success), stop_reason=str(res.message),
        elapsed=time.perf_counter() - t0, method="nelder-mead", evaluations=int(res.nfev),
    )
