"""Fast internal checks run by ``giicov selftest``."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .covcore import cov_transform
from .estimate import Problem, criterion_derivatives_at
from .models import get_model
from .randsrc import SeedSpec

GRAD_TOL = 1e-5


def check_cov_identity(cases, rng):
    """Identical grids: draw returned unchanged, unit weight, segment kept."""
    fails = 0
    for _ in range(cases):
        k = int(rng.integers(1, 6))
        inner = np.sort(rng.uniform(0.0, 1.0, k))
        grid = np.concatenate([[0.0], inner, [1.0]])
        if np.any(np.diff(grid) < 1e-9):
            continue
        u = float(rng.uniform(1e-12, 1.0))
        seg = int(np.searchsorted(grid, u, side="left") - 1)
        res = cov_transform(u, grid, grid)
        fails += not (res.u_new == u and res.weight == 1.0 and int(res.segment) == seg)
    return fails


def _random_grid(rng, k):
    while True:
        grid = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 1.0, k)), [1.0]])
        if np.all(np.diff(grid) > 1e-3):
            return grid


def check_cov_mapping(cases, rng, tol=1e-12):
    """Distinct grids: the draw moves affinely onto the matching segment.

    Returns the number of cases where ``u_new`` leaves the target segment or
    the weight differs from the ratio of segment widths by more than ``tol``.
    """
    fails = 0
    for _ in range(cases):
        k = int(rng.integers(1, 5))
        star, theta = _random_grid(rng, k), _random_grid(rng, k)
        j = int(rng.integers(0, k + 1))
        u = float(rng.uniform(star[j], star[j + 1]))
        res = cov_transform(u, theta, star)
        w = (theta[j + 1] - theta[j]) / (star[j + 1] - star[j])
        u_new, weight = float(res.u_new), float(res.weight)
        fails += not (int(res.segment) == j
                      and abs(weight - w) <= tol * max(1.0, w)
                      and theta[j] <= u_new <= theta[j + 1]
                      and abs((u_new - theta[j]) - w * (u - star[j])) <= 1e-10)
    return fails


def check_gradient(name, rng, points=3):
    """Largest relative gap between the dual gradient and central differences."""
    model = get_model(name)
    theta0 = np.array(model.theta0, dtype=float)
    seed = SeedSpec(1, 0)
    n = 1 if name in ("exp_ar", "queue") else 50
    T = 60 if name in ("exp_ar", "queue") else None
    data = model.simulate_observed(theta0, seed, n, T)
    problem = Problem.build(model, data, seed, 2, weight="identity")
    worst = 0.0
    for _ in range(points):
        star = theta0 + 0.02 * rng.standard_normal(theta0.size)
        _, g, _ = criterion_derivatives_at(problem, star, star)
        fd = np.empty_like(star)
        for k in range(star.size):
            h = 1e-6 * (1.0 + abs(star[k]))
            e = np.zeros_like(star)
            e[k] = h
            fd[k] = (problem.quad(problem.cov_stat_at(star + e, star))
                     - problem.quad(problem.cov_stat_at(star - e, star))) / (2.0 * h)
        worst = max(worst, float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-8)))
    return worst


def run_selftest(cases=2000, out=print):
    """Run every check, print one line per property and return overall success."""
    rng = np.random.default_rng(12345)
    ok = True
    for label, check in (("change of variables identity", check_cov_identity),
                         ("change of variables mapping", check_cov_mapping)):
        fails = check(cases, rng)
        out(f"{'PASS' if fails == 0 else 'FAIL'}  {label} ({cases} cases, {fails} failures, "
            f"tol {'exact' if 'identity' in label else '1e-12'})")
        ok &= fails == 0
    for name in ("model1", "model2", "ordered", "exp_ar", "queue"):
        err = check_gradient(name, rng)
        good = err <= GRAD_TOL
        out(f"{'PASS' if good else 'FAIL'}  dual gradient vs differences, {name} "
            f"(max rel. gap {err:.2e}, tol {GRAD_TOL:.0e})")
        ok &= good
    return bool(ok)
