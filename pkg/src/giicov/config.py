"""Run configuration: INI files with a fixed schema, merged with CLI flags.

A config file has a single ``[run]`` section::

    [run]
    model = model1
    methods = giicov, gii1
    n = 200
    replications = 500

Every key is checked against :data:`SCHEMA`; unknown keys and values of the
wrong type raise :class:`~giicov.errors.ConfigError` naming the key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .estimate import METHODS
from .estimate.criteria import CRITERIA, WEIGHTS
from .models import MODEL_NAMES

SECTION = "run"


def _floats(s):
    parts = [p for p in str(s).replace(",", " ").split()]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _names(s):
    parts = [p.strip() for p in str(s).split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(parts)


def _choice(options):
    def parse(s):
        s = str(s).strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _positive(kind):
    def parse(s):
        v = kind(s)
        if v <= 0:
            raise ValueError("must be positive")
        return v
    return parse


def _methods(s):
    out = _names(s)
    for m in out:
        _choice(METHODS)(m)
    return out


SCHEMA = {
    "model": _choice(MODEL_NAMES),
    "method": _choice(METHODS),
    "methods": _methods,
    "criterion": _choice(CRITERIA),
    "weight": _choice(WEIGHTS),
    "n": _positive(int),
    "T": _positive(int),
    "R": _positive(int),
    "replications": _positive(int),
    "theta0": _floats,
    "theta_start": _floats,
    "seed": int,
    "threads": _positive(int),
    "output": str,
    "log": str,
    "table_format": _choice(("csv", "text")),
    "tol_g": _positive(float),
    "max_iter": _positive(int),
    "step_tol": float,
    "bandwidth": _positive(float),
    "fd_step": _positive(float),
    "hessian": _choice(("gauss-newton", "full")),
    "variance": _choice(("ad", "fd")),
}


@dataclass
class RunConfig:
    """Validated settings; ``None`` means "use the default"."""

    model: str | None = None
    method: str | None = None
    methods: tuple | None = None
    criterion: str = "lm"
    weight: str = "efficient"
    n: int | None = None
    T: int | None = None
    R: int = 10
    replications: int = 500
    theta0: tuple | None = None
    theta_start: tuple | None = None
    seed: int = 20240101
    threads: int = 1
    output: str | None = None
    log: str | None = None
    table_format: str = "text"
    tol_g: float | None = None
    max_iter: int = 200
    step_tol: float = 0.05
    bandwidth: float | None = None
    fd_step: float | None = None
    hessian: str = "gauss-newton"
    variance: str = "ad"
    source: str | None = field(default=None, compare=False)

    def update(self, values, where="command line"):
        """Validate ``values`` (a mapping of raw strings or typed values) and apply them."""
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r} in {where}")
            if isinstance(raw, (tuple, list)):
                raw = ", ".join(str(v) for v in raw)
            try:
                val = SCHEMA[key](str(raw))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value {raw!r} for {key!r} in {where}: {exc}") from None
            setattr(self, key, val)
        return self

    def method_options(self, method):
        """Options of :func:`giicov.estimate.estimate` relevant to ``method``."""
        opts = {"variance": self.variance, "tol_g": self.tol_g, "max_iter": self.max_iter}
        if method in ("giicov", "giicov-fd"):
            opts["step_tol"] = self.step_tol
        if method == "giicov":
            opts["hessian"] = self.hessian
        if method == "giicov-fd" and self.fd_step is not None:
            opts["fd_step"] = self.fd_step
        if method == "gii1" and self.bandwidth is not None:
            opts["bandwidth"] = self.bandwidth
        return {k: v for k, v in opts.items() if v is not None}

    def require(self, *keys):
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "source"}


def load_config(path, cfg=None):
    """Read an INI file into a :class:`RunConfig` (or update ``cfg``)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    extra = [s for s in parser.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"unknown section [{extra[0]}] in {path}; only [{SECTION}] is allowed")
    if not parser.has_section(SECTION):
        raise ConfigError(f"config {path} has no [{SECTION}] section")
    cfg = cfg or RunConfig()
    cfg.update(dict(parser.items(SECTION)), where=str(path))
    cfg.source = str(path)
    return cfg
