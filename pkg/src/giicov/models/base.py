"""Shared model plumbing: data containers, anchors and the model interface."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..covcore import cov_transform, locate_segments
from ..randsrc import SeedSpec, make_uniform_panel

# uniform streams 0..99 feed the observed data, 100+ the simulated panel
SIM_STREAM_OFFSET = 100


@dataclass
class PanelData:
    """Observed outcomes and regressors.

    Attributes
    ----------
    y : ndarray, shape (n, T_obs)
    x : ndarray, shape (n, T_obs, d_x), or None for models without regressors
    times : tuple of int
        1-based periods held in the arrays.  Model 3 keeps only (3, 4, 5).
    """

    y: np.ndarray
    x: np.ndarray | None
    times: tuple

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 2:
            raise ValueError("y must be indexed (unit, time)")
        self.times = tuple(int(t) for t in self.times)
        if len(self.times) != self.y.shape[1]:
            raise ValueError("times must match the second axis of y")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=float)
            if self.x.ndim == 2:
                self.x = self.x[:, :, None]
            if self.x.shape[:2] != self.y.shape:
                raise ValueError("x must be indexed (unit, time, k) matching y")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def T(self):
        return self.y.shape[1]

    @property
    def d_x(self):
        return 0 if self.x is None else self.x.shape[2]


@dataclass
class Anchor:
    """Record of a standard simulation at the anchor parameter.

    Grid values, located segments and outcome values per simulated period.
    """

    theta: np.ndarray
    grids: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    y: list = field(default_factory=list)


@dataclass
class SimPath:
    """Simulated outcomes per period, each shaped ``(n, R)``.

    ``weight`` holds the accumulated Jacobian weight of each period (``None``
    for a standard simulation).  ``anchor`` is filled by standard runs so the
    same draws can later be re-used under the change of variables.
    """

    y: list
    weight: list
    anchor: Anchor | None
    n: int
    R: int


class Stepper:
    """Per-period switch between standard, change-of-variables and smoothed runs."""

    def __init__(self, theta, anchor, accumulation):
        self.anchor = anchor
        self.sequential = accumulation == "sequential"
        self.record = None if anchor is not None else Anchor(np.asarray(ad.value_vector(theta)))
        self.W = None
        self.weights = []

    @property
    def cov(self):
        return self.anchor is not None

    def step(self, t, u, grid):
        """Locate or transform ``u`` against ``grid``.

        Returns ``(u_eff, segment)``: the draw to feed forward and the anchor
        segment.  Weights are accumulated internally.
        """
        if self.anchor is None:
            g = np.asarray(grid, dtype=float)
            seg = locate_segments(u, g)
            self.record.grids.append(g)
            self.record.segments.append(seg)
            self.weights.append(None)
            return u, seg
        res = cov_transform(u, grid, self.anchor.grids[t], self.anchor.segments[t])
        w = res.weight
        if self.sequential and self.W is not None:
            w = self.W * w
        self.W = w
        self.weights.append(w)
        return res.u_new, res.segment

    def skip(self):
        """A period without a discontinuity (weight carried unchanged)."""
        if self.anchor is None:
            self.record.grids.append(None)
            self.record.segments.append(None)
        self.weights.append(self.W if self.sequential else None)

    def outcome(self, y):
        if self.anchor is None:
            self.record.y.append(ad.value(y))

    def anchor_y(self, t):
        return self.anchor.y[t]


class Model(ABC):
    """Interface every structural model implements.

    Subclasses set ``name``, ``param_names``, ``theta0``, ``bounds``, ``J``
    and ``accumulation`` (``"per-cell"`` or ``"sequential"``).
    """

    name: str = ""
    param_names: tuple = ()
    theta0: tuple = ()
    bounds: np.ndarray
    J: int = 1
    accumulation: str = "per-cell"
    T_default: int = 1
    # uniform streams used by simulate(): name -> number of periods (None = T)
    streams: dict = {}

    @property
    def d_theta(self):
        return len(self.param_names)

    def check_theta(self, theta):
        th = np.asarray(ad.value_vector(theta), dtype=float)
        if th.shape != (self.d_theta,):
            raise ValueError(f"{self.name} expects {self.d_theta} parameters, got {th.shape}")
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if np.any(th < lo) or np.any(th > hi):
            raise ValueError(f"theta {th.tolist()} outside bounds {self.bounds.tolist()}")
        return th

    def project(self, theta):
        return np.clip(np.asarray(theta, dtype=float), self.bounds[:, 0], self.bounds[:, 1])

    def sim_periods(self, data):
        """Number of simulated periods for a dataset."""
        return max(data.times)

    def draws(self, seed: SeedSpec, n, T, R, offset=SIM_STREAM_OFFSET):
        out = {}
        for k, (name, periods) in enumerate(self.streams.items()):
            out[name] = make_uniform_panel(seed, n, periods or T, R, stream=offset + k).draws
        return out

    def sim_draws(self, seed: SeedSpec, data, R):
        return self.draws(seed, data.n, self.sim_periods(data), R)

    @abstractmethod
    def simulate(self, theta, draws, data, anchor=None, smoother=None) -> SimPath:
        """Run the simulator on fixed draws.

        ``theta`` may hold floats or duals.  With ``anchor`` the change of
        variables is applied against the recorded grids; with ``smoother``
        indicators are replaced by a kernel CDF of latent index / bandwidth.
        """

    @abstractmethod
    def simulate_observed(self, theta0, seed: SeedSpec, n, T=None) -> PanelData:
        """Draw an observed dataset from the true process."""

    @abstractmethod
    def aux_design(self):
        """Auxiliary design matched to this model."""

    def unpack(self, theta):
        if len(theta) != self.d_theta:
            raise ValueError(f"{self.name} expects {self.d_theta} parameters")
        return list(theta)


@dataclass(frozen=True)
class Smoother:
    """Kernel replacement for ``1[s > 0]``: ``K(s / bandwidth)``."""

    bandwidth: float
    kernel: str = "normal"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.kernel not in ("normal", "logistic"):
            raise ValueError(f"unknown kernel {self.kernel!r}")

    def __call__(self, s):
        z = s / self.bandwidth
        if self.kernel == "normal":
            return ad.norm_cdf(z)
        return 1.0 / (1.0 + ad.exp(-z))
