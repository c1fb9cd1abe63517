"""Monte Carlo designs: replicate, estimate, summarize and tabulate.

Replication ``r`` of a design draws its data and simulation paths from
``SeedSpec(seed, r)`` only, so results do not depend on how replications
are scheduled across workers.  Summaries are reduced in replication order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import GiiError
from .estimate import METHODS, Z95, Problem, estimate
from .models import get_model
from .randsrc import SeedSpec

log = logging.getLogger(__name__)

COLUMNS = ("model", "n", "method", "parameter", "mbias", "ab", "std", "cv95", "seconds",
           "nonconverged", "replications")


@dataclass(frozen=True)
class MethodSpec:
    """An estimation method and its options (``hessian``, ``fd_step``, ``bandwidth``, ...)."""

    name: str
    options: tuple = ()

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; choose from {', '.join(METHODS)}")
        object.__setattr__(self, "options", tuple(sorted(dict(self.options).items())))

    @property
    def label(self):
        return self.name

    @classmethod
    def coerce(cls, m):
        if isinstance(m, cls):
            return m
        if isinstance(m, str):
            return cls(m)
        m = dict(m)
        return cls(m.pop("name"), tuple(m.items()))


@dataclass(frozen=True)
class McDesign:
    """One Monte Carlo experiment.

    Attributes
    ----------
    model : str
        Registry name, see :func:`giicov.models.get_model`.
    n : int
        Cross-section size (panels) or series length (time series).
    replications : int
    methods : tuple of MethodSpec
    seed : int
        Master seed; replication ``r`` uses ``SeedSpec(seed, r)``.
    theta0 : tuple, optional
        True parameter; defaults to the model's.
    T : int, optional
        Simulated periods for panel models.
    R : int
        Simulated paths per observation.
    criterion, weight : str
    threads : int
        Worker processes; 1 runs in the calling process.
    """

    model: str
    n: int
    replications: int = 500
    methods: tuple = (MethodSpec("giicov"),)
    seed: int = 20240101
    theta0: tuple | None = None
    T: int | None = None
    R: int = 10
    criterion: str = "lm"
    weight: str = "efficient"
    threads: int = 1
    model_options: tuple = ()

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.n < 1 or self.R < 1 or self.threads < 1:
            raise ValueError("n, R and threads must be positive")
        object.__setattr__(self, "methods", tuple(MethodSpec.coerce(m) for m in self.methods))
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError("methods must be distinct")
        model = self.build_model()
        theta0 = tuple(float(t) for t in (self.theta0 if self.theta0 is not None else model.theta0))
        model.check_theta(theta0)
        object.__setattr__(self, "theta0", theta0)

    def build_model(self):
        return get_model(self.model, **dict(self.model_options))

    def key(self):
        """Fields that must agree for two summaries to be comparable."""
        return (self.model, self.n, self.T, self.R, self.theta0, self.replications, self.seed)


@dataclass
class McSummary:
    """Per (method, parameter) statistics of a design."""

    design: McDesign
    param_names: tuple
    rows: list = field(default_factory=list)

    def row(self, method, parameter):
        for r in self.rows:
            if r["method"] == method and r["parameter"] == parameter:
                return r
        raise KeyError((method, parameter))

    def statistics(self):
        """Rows without wall-clock timing: the part fixed by the seed."""
        return [{k: v for k, v in r.items() if k != "seconds"} for r in self.rows]

    def table(self):
        return [{"model": self.design.model, "n": self.design.n, **r} for r in self.rows]


def run_replication(design, r):
    """Estimate every method of ``design`` on replication ``r``; returns records."""
    model = design.build_model()
    theta0 = np.array(design.theta0)
    seed = SeedSpec(design.seed, r)
    records = []
    try:
        data = model.simulate_observed(theta0, seed, design.n, design.T)
        problem = Problem.build(model, data, seed, design.R, design.criterion, design.weight)
    except (GiiError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("replication %d: setup failed: %s", r, exc)
        return [{"replication": r, "method": m.label, "theta": None, "se": None,
                 "converged": False, "seconds": 0.0, "error": str(exc)} for m in design.methods]
    for m in design.methods:
        rec = {"replication": r, "method": m.label}
        try:
            res = estimate(problem, m.name, theta0, **dict(m.options))
            rec.update(theta=res.theta.tolist(), converged=bool(res.converged),
                       se=None if res.se is None else res.se.tolist(),
                       seconds=res.elapsed, stop_reason=res.stop_reason)
        except (GiiError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            rec.update(theta=None, se=None, converged=False, seconds=0.0, error=str(exc))
        records.append(rec)
    return records


def _run_one(args):
    return run_replication(*args)


def run_design(design, log_path=None, order=None):
    """Run all replications and summarize.

    Parameters
    ----------
    design : McDesign
    log_path : str, optional
        JSON-lines file receiving one record per (replication, method).
    order : sequence of int, optional
        Execution order of the replications (a permutation); the summary
        does not depend on it.

    Returns
    -------
    summary : McSummary
    records : list of dict, sorted by replication then method
    """
    idx = list(range(design.replications)) if order is None else list(order)
    if sorted(idx) != list(range(design.replications)):
        raise ValueError("order must be a permutation of the replication indices")
    jobs = [(design, r) for r in idx]
    if design.threads == 1:
        out = [run_replication(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=design.threads) as pool:
            out = list(pool.map(_run_one, jobs, chunksize=1))
    by_rep = dict(zip(idx, out))
    records = [rec for r in range(design.replications) for rec in by_rep[r]]
    if log_path:
        write_log(records, log_path)
    return summarize(design, records), records


def coverage(records, theta0, z=Z95):
    """Share of replications whose ``theta +- z se`` interval contains ``theta0``."""
    hits = [np.abs(np.array(rec["theta"]) - theta0) <= z * np.array(rec["se"])
            for rec in records if rec.get("se") is not None]
    if not hits:
        return np.full(len(theta0), np.nan)
    return np.mean(hits, axis=0)


def summarize(design, records, z=Z95):
    """MBIAS, AB, STD, CV95 per method and parameter over converged replications."""
    model = design.build_model()
    names = tuple(model.param_names)
    theta0 = np.array(design.theta0)
    summary = McSummary(design, names)
    for m in design.methods:
        recs = [rec for rec in records if rec["method"] == m.label]
        good = [rec for rec in recs if rec["converged"] and rec["theta"] is not None]
        nonconv = len(recs) - len(good)
        seconds = float(np.mean([rec["seconds"] for rec in recs])) if recs else math.nan
        if good:
            est = np.array([rec["theta"] for rec in good])
            dev = est - theta0
            mbias, ab = dev.mean(axis=0), np.abs(dev).mean(axis=0)
            std = est.std(axis=0, ddof=1) if len(good) > 1 else np.zeros(len(names))
            cv = coverage(good, theta0, z)
        else:
            mbias = ab = std = cv = np.full(len(names), math.nan)
        for k, name in enumerate(names):
            summary.rows.append({
                "method": m.label, "parameter": name, "mbias": float(mbias[k]),
                "ab": float(ab[k]), "std": float(std[k]), "cv95": float(cv[k]),
                "seconds": seconds, "nonconverged": nonconv, "replications": len(recs),
            })
    return summary


def _ratio(num, den):
    if not np.isfinite(den) or abs(den) < 1e-12:
        return "n/a"
    return num / den


def compare_ratio(summary_a, summary_b):
    """MBIAS and STD of ``b`` relative to ``a``, method by method and parameter by parameter.

    Methods are paired in order.  A denominator below ``1e-12`` in magnitude
    gives ``"n/a"``.
    """
    if summary_a.design.key() != summary_b.design.key():
        raise ValueError("summaries come from different designs")
    ma = [m.label for m in summary_a.design.methods]
    mb = [m.label for m in summary_b.design.methods]
    if len(ma) != len(mb):
        raise ValueError("summaries have different method lists")

    out = []
    for a_name, b_name in zip(ma, mb):
        for p in summary_a.param_names:
            ra, rb = summary_a.row(a_name, p), summary_b.row(b_name, p)
            out.append({"method_a": a_name, "method_b": b_name, "parameter": p,
                        "mbias_ratio": _ratio(rb["mbias"], ra["mbias"]),
                        "std_ratio": _ratio(rb["std"], ra["std"])})
    return out


def ratio_within(summary, method_a, method_b):
    """:func:`compare_ratio` for two methods of the same summary."""
    out = []
    for p in summary.param_names:
        ra, rb = summary.row(method_a, p), summary.row(method_b, p)
        out.append({"method_a": method_a, "method_b": method_b, "parameter": p,
                    "mbias_ratio": _ratio(rb["mbias"], ra["mbias"]),
                    "std_ratio": _ratio(rb["std"], ra["std"])})
    return out


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def write_tables(summaries, path, fmt="csv"):
    """Write summaries as CSV or an aligned text table.

    One row per (model, n, method, parameter) with columns in
    :data:`COLUMNS` order.  An empty list gives a header-only file.
    """
    rows = [row for s in summaries for row in s.table()]
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS)
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k]
                            for k in COLUMNS})
    elif fmt == "text":
        with open(path, "w") as fh:
            fh.write(format_table(rows))
    else:
        raise ValueError("fmt must be 'csv' or 'text'")
    return path


def read_table(path):
    """Parse a CSV written by :func:`write_tables`."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = dict(row)
            rec["n"] = int(rec["n"])
            for k in ("mbias", "ab", "std", "cv95", "seconds"):
                rec[k] = float(rec[k])
            for k in ("nonconverged", "replications"):
                rec[k] = int(rec[k])
            out.append(rec)
    return out


def format_table(rows):
    """Aligned text: one block per model and n, methods down the side."""
    header = ("method", "param", "MBIAS", "AB", "STD", "CV95", "sec", "nonconv")
    lines = []
    blocks = {}
    for row in rows:
        blocks.setdefault((row["model"], row["n"]), []).append(row)
    if not blocks:
        return "  ".join(header) + "\n"
    for (model, n), rs in blocks.items():
        lines.append(f"{model}  n={n}")
        cells = [header] + [(r["method"], r["parameter"], f"{r['mbias']:.4f}", f"{r['ab']:.4f}",
                             f"{r['std']:.4f}", f"{r['cv95']:.3f}", f"{r['seconds']:.3f}",
                             str(r["nonconverged"])) for r in rs]
        widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
        for c in cells:
            lines.append("  ".join(s.rjust(w) if i > 1 else s.ljust(w)
                                   for i, (s, w) in enumerate(zip(c, widths))))
        lines.append("")
    return "\n".join(lines) + "\n"


def write_log(records, path):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def design_dict(design):
    d = asdict(design)
    d["methods"] = [{"name": m.name, **dict(m.options)} for m in design.methods]
    return d


def default_threads():
    return os.cpu_count() or 1
