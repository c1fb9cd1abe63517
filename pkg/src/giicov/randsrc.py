"""Seeded uniform panels and inverse-CDF transforms.

Every replication of a Monte Carlo design gets its own generator, derived
from ``(master_seed, replication_index, stream)`` through numpy's
``SeedSequence`` hashing.  Streams never depend on execution order, so a
parallel run reproduces a serial one bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError

_U64 = 2**64


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus replication index."""

    master_seed: int
    replication_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < _U64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.replication_index < 0:
            raise ValueError("replication_index must be nonnegative")


def generator(seed: SeedSpec, stream: int = 0) -> np.random.Generator:
    """Independent PCG64 generator for one (seed, stream) pair."""
    ss = np.random.SeedSequence(seed.master_seed, spawn_key=(seed.replication_index, stream))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class UniformPanel:
    """Read-only ``(n, T, R)`` array of draws strictly inside (0, 1)."""

    draws: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.draws, dtype=float)
        if d.ndim != 3:
            raise ValueError("draws must be indexed (i, t, r)")
        if not np.all((d > 0.0) & (d < 1.0)):
            raise ValueError("uniform draws must lie strictly inside (0, 1)")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "draws", d)

    @property
    def n(self):
        return self.draws.shape[0]

    @property
    def T(self):
        return self.draws.shape[1]

    @property
    def R(self):
        return self.draws.shape[2]

    def to_csv(self, path):
        """Dump as rows ``i,t,r,u`` with 1-based ``i`` and ``t``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "t", "r", "u"])
            for (i, t, r), u in np.ndenumerate(self.draws):
                w.writerow([i + 1, t + 1, r + 1, repr(float(u))])


def open_uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform draws with exact zeros redrawn (``random`` never returns 1)."""
    u = rng.random(shape)
    bad = u == 0.0
    while np.any(bad):
        u[bad] = rng.random(int(bad.sum()))
        bad = u == 0.0
    return u


def make_uniform_panel(seed: SeedSpec, n: int, T: int, R: int, stream: int = 0) -> UniformPanel:
    """Deterministic panel of ``n*T*R`` open-interval uniforms.

    Parameters
    ----------
    seed : SeedSpec
        Master seed and replication index.
    n, T, R : int
        Units, periods and simulated paths, all at least 1.
    stream : int, optional
        Extra key so one replication can hold several independent panels.
    """
    for name, v in (("n", n), ("T", T), ("R", R)):
        if int(v) < 1:
            raise ValueError(f"{name} must be at least 1, got {v}")
    return UniformPanel(open_uniforms(generator(seed, stream), (int(n), int(T), int(R))))


def inv_normal_cdf(p):
    """Standard normal quantile.

    Uses the Cephes rational approximation behind ``scipy.special.ndtri``,
    accurate to a few ulps across (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    bad = ~((arr > 0.0) & (arr < 1.0))
    if np.any(bad):
        raise DomainError("inv_normal_cdf needs 0 < p < 1", float(arr[bad].flat[0]))
    out = special.ndtri(arr)
    return float(out) if np.ndim(p) == 0 else out


def normal_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(x) == 0 else out


def inv_exp_cdf(p, mean=1.0):
    """Exponential quantile ``-mean * log(1 - p)``."""
    if not mean > 0:
        raise ValueError(f"mean must be positive, got {mean}")
    arr = np.asarray(p, dtype=float)
    bad = ~((arr > 0.0) & (arr < 1.0))
    if np.any(bad):
        raise DomainError("inv_exp_cdf needs 0 < p < 1", float(arr[bad].flat[0]))
    out = -mean * np.log1p(-arr)
    return float(out) if np.ndim(p) == 0 else out
