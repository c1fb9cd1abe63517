"""Command-line interface.

Subcommands: ``simulate``, ``estimate``, ``mc``, ``compare`` and ``selftest``.
Settings come from an optional INI file (``--config``) overridden by flags.

Exit codes: 0 success, 1 estimation did not converge or a self-test failed,
2 usage or configuration error, 3 data or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .dataio import read_panel_csv, write_panel_csv
from .errors import ConfigError, DataError, GiiError
from .estimate import Problem, estimate
from .mcharness import McDesign, MethodSpec, format_table, ratio_within, run_design, write_tables
from .models import get_model
from .randsrc import SeedSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3
FULL_REPLICATIONS = 1000
PANEL_MODELS = ("model1", "model2", "ordered")

log = logging.getLogger("giicov")


def bundled_config(name):
    """Path of a config shipped with the package, e.g. ``table1_model1.cfg``."""
    return str(resources.files("giicov") / "configs" / name)


def _model_for(cfg, T=None):
    opts = {}
    if T is not None and cfg.model in PANEL_MODELS:
        opts["T"] = T
    return get_model(cfg.model, **opts)


def _common(p):
    p.add_argument("--config", help="INI file with a [run] section")
    p.add_argument("--model")
    p.add_argument("--seed", type=int)
    p.add_argument("--theta0", help="true parameter, comma separated")
    p.add_argument("--n", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--R", type=int)


def _estimation_flags(p):
    p.add_argument("--method")
    p.add_argument("--criterion")
    p.add_argument("--weight")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--fd-step", dest="fd_step", type=float)
    p.add_argument("--hessian")
    p.add_argument("--variance")
    p.add_argument("--tol-g", dest="tol_g", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--step-tol", dest="step_tol", type=float,
                   help="Newton resolution stop; 0 requires the gradient rule")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="giicov", description="Indirect inference with change-of-variables derivatives.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an observed dataset to CSV")
    _common(p)
    p.add_argument("--out", dest="output", required=True)

    p = sub.add_parser("estimate", help="estimate a model from a CSV dataset")
    _common(p)
    _estimation_flags(p)
    p.add_argument("data")
    p.add_argument("--start", dest="theta_start", help="starting value, comma separated")
    p.add_argument("--out", dest="output", help="JSON result file")

    for name, text in (("mc", "run a Monte Carlo design"),
                       ("compare", "run a design and report ratios against the first method")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _estimation_flags(p)
        p.add_argument("--methods")
        p.add_argument("--replications", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--full", action="store_true",
                       help=f"use {FULL_REPLICATIONS} replications")
        p.add_argument("--out", dest="output", help="table file (csv or text by extension)")
        p.add_argument("--log", help="JSON-lines per-replication log")

    p = sub.add_parser("selftest", help="quick internal consistency checks")
    p.add_argument("--cases", type=int, default=2000)
    return ap


SKIP = {"command", "verbose", "config", "full", "cases", "data"}


def _config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        load_config(args.config, cfg)
    flags = {k: v for k, v in vars(args).items() if k not in SKIP and v is not None}
    cfg.update(flags)
    return cfg


def cmd_simulate(args, cfg):
    cfg.require("model", "n")
    model = _model_for(cfg, cfg.T)
    theta0 = np.array(cfg.theta0 if cfg.theta0 is not None else model.theta0)
    try:
        model.check_theta(theta0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    seed = SeedSpec(cfg.seed, 0)
    data = model.simulate_observed(theta0, seed, cfg.n, cfg.T)
    meta = {"model": cfg.model, "theta0": theta0.tolist(), "seed": cfg.seed, "n": data.n,
            "times": list(data.times), "version": __version__}
    write_panel_csv(data, cfg.output, meta)
    print(f"wrote {data.n * data.T} rows to {cfg.output}")
    return EXIT_OK


def _load_data(cfg, path):
    model = get_model(cfg.model)
    needs_x = cfg.model not in ("exp_ar", "queue")
    fixed = getattr(model, "window", None) if cfg.model == "model3" else None
    data = read_panel_csv(path, needs_x=needs_x, times=fixed)
    if cfg.model in PANEL_MODELS:
        if data.times[0] != 1 or data.times != tuple(range(1, data.T + 1)):
            raise DataError(f"{path}: periods must be 1..T, got {list(data.times)}")
        model = _model_for(cfg, data.T)
    return model, data


def _print_result(res, names):
    print(f"method     {res.method}")
    print(f"converged  {res.converged} ({res.stop_reason})")
    print(f"iterations {res.iterations}   criterion {res.criterion:.6g}   "
          f"|grad| {res.grad_norm:.3g}   {res.elapsed:.3f}s")
    print(f"{'param':>10} {'estimate':>10} {'se':>10} {'ci95 low':>10} {'ci95 high':>10}")
    for k, name in enumerate(names):
        if res.se is not None:
            lo, hi = res.ci95[k]
            print(f"{name:>10} {res.theta[k]:10.4f} {res.se[k]:10.4f} {lo:10.4f} {hi:10.4f}")
        else:
            print(f"{name:>10} {res.theta[k]:10.4f}")


def cmd_estimate(args, cfg):
    cfg.require("model")
    method = cfg.method or "giicov"
    model, data = _load_data(cfg, args.data)
    seed = SeedSpec(cfg.seed, 0)
    problem = Problem.build(model, data, seed, cfg.R, cfg.criterion, cfg.weight)
    res = estimate(problem, method, cfg.theta_start, **cfg.method_options(method))
    res.meta.update({"model": cfg.model, "seed": cfg.seed, "data": os.path.abspath(args.data)})
    if method == "gii1":
        res.meta.setdefault("bandwidth", cfg.bandwidth)
    _print_result(res, model.param_names)
    if cfg.output:
        with open(cfg.output, "w") as fh:
            json.dump(res.to_dict(list(model.param_names)), fh, indent=2, sort_keys=True)
    return EXIT_OK if res.converged else EXIT_FAIL


def _design(args, cfg):
    cfg.require("model", "n")
    methods = cfg.methods or ((cfg.method,) if cfg.method else ("giicov",))
    reps = FULL_REPLICATIONS if getattr(args, "full", False) else cfg.replications
    opts = (("T", cfg.T),) if cfg.T is not None and cfg.model in PANEL_MODELS else ()
    return McDesign(
        model=cfg.model, n=cfg.n, replications=reps, seed=cfg.seed,
        methods=tuple(MethodSpec(m, tuple(cfg.method_options(m).items())) for m in methods),
        theta0=cfg.theta0, T=cfg.T, R=cfg.R, criterion=cfg.criterion, weight=cfg.weight,
        threads=cfg.threads, model_options=opts)


def _emit(summary, cfg):
    text = format_table(summary.table())
    print(text, end="")
    if cfg.output:
        fmt = "csv" if cfg.output.endswith(".csv") else cfg.table_format
        write_tables([summary], cfg.output, fmt)


def cmd_mc(args, cfg):
    design = _design(args, cfg)
    summary, _ = run_design(design, log_path=cfg.log)
    _emit(summary, cfg)
    return EXIT_OK


def cmd_compare(args, cfg):
    design = _design(args, cfg)
    if len(design.methods) < 2:
        raise ConfigError("compare needs at least two methods")
    summary, _ = run_design(design, log_path=cfg.log)
    _emit(summary, cfg)
    base = design.methods[0].label
    print(f"\nratios relative to {base}")
    print(f"{'method':>12} {'param':>8} {'MBIAS':>8} {'STD':>8}")
    for m in design.methods[1:]:
        for row in ratio_within(summary, base, m.label):
            cells = [v if isinstance(v, str) else f"{v:.3f}"
                     for v in (row["mbias_ratio"], row["std_ratio"])]
            print(f"{m.label:>12} {row['parameter']:>8} {cells[0]:>8} {cells[1]:>8}")
    return EXIT_OK


def cmd_selftest(args, cfg):
    from .selftest import run_selftest
    ok = run_selftest(cases=args.cases)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "mc": cmd_mc,
            "compare": cmd_compare, "selftest": cmd_selftest}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args) if args.command != "selftest" else RunConfig()
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GiiError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
