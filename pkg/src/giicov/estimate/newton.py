"""Newton-Raphson with re-anchored pathwise derivatives.

At every iterate the anchor is moved to the current point, the dual
simulation gives the gradient and (Gauss-Newton or full) Hessian of
``Q(theta, theta_k)`` at ``theta = theta_k``, and a backtracking line search
on the plain criterion ``Q(theta, theta)`` picks the step.

For models with discontinuities ``Q(theta, theta)`` is a step function and
its gradient jumps whenever a simulated outcome switches, by an amount of
order ``1 / (n R)``.  The gradient tolerance is then reachable only by
luck, so the solver also stops, and reports convergence, when no step along
the Newton direction lowers the criterion and the full Newton step is below
``step_tol * (1 + max|theta|)``.  ``stop_reason`` is ``"gradient"`` or
``"resolution"`` accordingly.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import GiiError
from .criteria import criterion_derivatives

log = logging.getLogger(__name__)

Z95 = 1.959964


@dataclass
class EstimationResult:
    """Outcome of one estimation run."""

    theta: np.ndarray
    criterion: float
    grad_norm: float
    iterations: int
    converged: bool
    stop_reason: str = ""
    se: np.ndarray | None = None
    cov: np.ndarray | None = None
    elapsed: float = 0.0
    method: str = ""
    evaluations: int = 0
    trace: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def ci95(self):
        if self.se is None:
            return None
        return np.column_stack([self.theta - Z95 * self.se, self.theta + Z95 * self.se])

    def ci(self, z):
        return np.column_stack([self.theta - z * self.se, self.theta + z * self.se])

    def to_dict(self, names=None):
        names = names or [f"theta{k + 1}" for k in range(self.theta.size)]
        out = {
            "method": self.method,
            "converged": bool(self.converged),
            "stop_reason": self.stop_reason,
            "theta": dict(zip(names, map(float, self.theta))),
            "criterion": float(self.criterion),
            "grad_norm": float(self.grad_norm),
            "iterations": int(self.iterations),
            "evaluations": int(self.evaluations),
            "elapsed": float(self.elapsed),
        }
        if self.se is not None:
            out["se"] = dict(zip(names, map(float, self.se)))
            out["ci95"] = {k: [float(a), float(b)] for k, (a, b) in zip(names, self.ci95)}
        out["meta"] = self.meta
        return out


class CovEvaluator:
    """Derivatives from the change-of-variables dual simulation."""

    def __init__(self, problem, hessian="gauss-newton"):
        self.problem = problem
        self.hessian = hessian
        self.evaluations = 0

    def derivs(self, theta):
        self.evaluations += 1
        order = 2 if self.hessian == "full" else 1
        stat = self.problem.cov_stat(theta, order)
        return criterion_derivatives(stat, self.problem.omega, self.hessian)

    def value(self, theta):
        self.evaluations += 1
        return self.problem.quad(self.problem.standard_stat(theta))

    def project(self, theta):
        return self.problem.model.project(theta)


class FDEvaluator(CovEvaluator):
    """Central differences of the plain simulated statistic.

    ``step`` is absolute; the default ``0.1 n^{-1/4}`` averages over many
    discontinuities of the step-function criterion.
    """

    def __init__(self, problem, step=None):
        super().__init__(problem)
        self.step = step if step is not None else 0.1 * problem.nobs ** -0.25

    def derivs(self, theta):
        theta = np.asarray(theta, dtype=float)
        p = self.problem
        s = p.standard_stat(theta)
        cols = []
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = self.step
            cols.append((p.standard_stat(theta + e) - p.standard_stat(theta - e)) / (2.0 * self.step))
        self.evaluations += 1 + 2 * theta.size
        D = np.column_stack(cols)
        Os = p.omega @ s
        H = 2.0 * D.T @ p.omega @ D
        return float(s @ Os), 2.0 * D.T @ Os, 0.5 * (H + H.T)


def _newton_step(H, g):
    d = g.size
    tau = 1e-8 * max(np.trace(H), 1e-300) / d
    shift = 0.0
    for _ in range(40):
        try:
            L = np.linalg.cholesky(H + shift * np.eye(d))
            return np.linalg.solve(L.T, np.linalg.solve(L, g)), shift
        except np.linalg.LinAlgError:
            shift = tau if shift == 0.0 else shift * 10.0
    raise np.linalg.LinAlgError("Hessian could not be regularized")


def newton_solve(evaluator, theta_start, tol_g=None, max_iter=200, step_tol=0.05,
                 max_halvings=30):
    """Minimize by Newton iterations with a backtracking line search.

    Parameters
    ----------
    evaluator : object
        Provides ``derivs(theta) -> (Q, g, H)``, ``value(theta) -> Q`` and
        ``project(theta)``.
    theta_start : array_like
    tol_g : float, optional
        Gradient-norm tolerance; defaults to ``1e-8 * d_theta``.
    max_iter : int
    step_tol : float
        Relative size below which a Newton step that cannot lower the
        criterion counts as convergence (resolution of a step function).
        Pass 0 to require the gradient rule.
    max_halvings : int

    Returns
    -------
    EstimationResult
    """
    t0 = time.perf_counter()
    theta = evaluator.project(np.asarray(theta_start, dtype=float))
    d = theta.size
    tol_g = 1e-8 * d if tol_g is None else tol_g
    try:
        Q, g, H = evaluator.derivs(theta)
    except (GiiError, ValueError, FloatingPointError) as exc:
        return EstimationResult(theta, np.inf, np.inf, 0, False, f"start failed: {exc}",
                                elapsed=time.perf_counter() - t0, method="newton")
    trace = [(theta.copy(), Q, float(np.linalg.norm(g)))]
    converged, reason = False, "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        gn = float(np.linalg.norm(g))
        if gn <= tol_g:
            converged, reason = True, "gradient"
            it -= 1
            break
        try:
            step, _ = _newton_step(H, g)
        except np.linalg.LinAlgError:
            reason = "singular Hessian"
            break
        s = 1.0
        accepted = None
        for _ in range(max_halvings + 1):
            trial = evaluator.project(theta - s * step)
            if np.array_equal(trial, theta):
                break
            try:
                q_try = evaluator.value(trial)
            except (GiiError, ValueError, FloatingPointError):
                q_try = np.inf
            if q_try < Q:
                accepted = trial
                break
            s *= 0.5
        if accepted is None:
            full = evaluator.project(theta - step) - theta
            if np.max(np.abs(full)) <= step_tol * (1.0 + np.max(np.abs(theta))):
                converged, reason = True, "resolution"
            else:
                reason = "line search failed"
            break
        theta = accepted
        try:
            Q, g, H = evaluator.derivs(theta)
        except (GiiError, ValueError, FloatingPointError) as exc:
            reason = f"derivatives failed: {exc}"
            break
        trace.append((theta.copy(), Q, float(np.linalg.norm(g))))
    return EstimationResult(
        theta=theta, criterion=Q, grad_norm=float(np.linalg.norm(g)), iterations=it,
        converged=converged, stop_reason=reason, elapsed=time.perf_counter() - t0,
        method="newton", evaluations=getattr(evaluator, "evaluations", 0), trace=trace,
    )
