"""Command-line front end.

Three subcommands:

``fit``
    Fit one estimator to a cohort stored as two CSV files and write a JSON
    result document (optionally with bootstrap standard errors).
``bootstrap``
    Same inputs; always bootstraps and can dump the replicate matrix.
``simulate``
    Run a simulation preset and write the bias/SE/coverage summary CSV.

Exit status is 0 on success, 1 when an estimator fails numerically and 2 on
usage or validation errors. Failures print a JSON error object on stderr.
"""

import argparse
import csv
import datetime
import json
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from ._newton import SolverConfig
from .cohort import Cohort, CohortError, HistoryFeatureSpec, load_cohort, \
    save_cohort
from .errors import BootstrapError, ConvergenceError, FittingError
from .smoothing import KernelConfig
from .visitfit import baseline_visit_rate

EXIT_OK, EXIT_FIT, EXIT_USAGE = 0, 1, 2
CONFIG_METHODS = ("proposed", "ppl", "locf", "disjoint")
CONFIG_KEYS = ("event_covariates", "history_rules", "kernel", "tau", "method",
               "disjoint_partition", "bootstrap_B", "seed", "solver",
               "locf_fill")


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def _default_config():
    return {
        "event_covariates": None,
        "history_rules": [],
        "kernel": {"h": None, "c": 2.0, "nu": 1.0 / 3.0,
                   "zero_denominator_policy": "error"},
        "tau": None,
        "method": "proposed",
        "disjoint_partition": None,
        "bootstrap_B": None,
        "seed": 0,
        "solver": {"tolerance": 1e-8, "max_iterations": 50,
                   "max_step_halvings": 20, "initial_beta": None},
        "locf_fill": None,
    }


def resolve_config(file_config, args):
    """Defaults, then the JSON file, then command-line flags."""
    cfg = _default_config()
    unknown = set(file_config) - set(CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
    for key, value in file_config.items():
        if key in ("kernel", "solver") and value is not None:
            if not isinstance(value, dict):
                raise UsageError(f"{key!r} must be an object")
            extra = set(value) - set(cfg[key])
            if extra:
                raise UsageError(f"unknown {key} fields: {sorted(extra)}")
            cfg[key].update(value)
        else:
            cfg[key] = value
    if getattr(args, "method", None):
        cfg["method"] = args.method
    if getattr(args, "bandwidth_c", None) is not None:
        cfg["kernel"]["c"] = args.bandwidth_c
    if getattr(args, "bandwidth_nu", None) is not None:
        cfg["kernel"]["nu"] = args.bandwidth_nu
    if getattr(args, "fixed_h", None) is not None:
        cfg["kernel"]["h"] = args.fixed_h
    if getattr(args, "tau", None) is not None:
        cfg["tau"] = args.tau
    if getattr(args, "bootstrap_B", None) is not None:
        cfg["bootstrap_B"] = args.bootstrap_B
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _settings(cfg):
    try:
        kernel = KernelConfig(**cfg["kernel"])
        solver = dict(cfg["solver"])
        if solver.get("initial_beta") is not None:
            solver["initial_beta"] = tuple(solver["initial_beta"])
        solver = SolverConfig(**solver)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    return kernel, solver


def validate_config(cfg, cohort: Cohort):
    """Check method-specific fields and resolve names against the data."""
    method = cfg["method"]
    if method not in CONFIG_METHODS:
        raise UsageError(f"method must be one of {CONFIG_METHODS}")
    names = set(cohort.covariate_registry)
    if method == "disjoint":
        part = cfg.get("disjoint_partition")
        if not isinstance(part, dict) or set(part) != {"z", "w"}:
            raise UsageError("method 'disjoint' needs disjoint_partition "
                             "with lists 'z' and 'w'")
        from .vnarfit import DisjointPartition
        partition = DisjointPartition(part["z"], part["w"])
        used = set(partition.z_names) | set(partition.w_names)
    else:
        if cfg["disjoint_partition"] is not None:
            raise UsageError("disjoint_partition given but method is "
                             f"{method!r}")
        if cfg["event_covariates"] is None:
            cfg["event_covariates"] = list(cohort.covariate_registry)
        used = set(cfg["event_covariates"])
        if not used:
            raise UsageError("event_covariates is empty")
    missing = used - names
    if missing:
        raise UsageError(f"covariates not in the data: {sorted(missing)}")
    spec = HistoryFeatureSpec.from_dicts(cfg["history_rules"] or [])
    if method == "proposed":
        spec.validate(cohort.baseline_names, cohort.visit_names)
    elif cfg["history_rules"]:
        raise UsageError("history_rules only apply to method 'proposed'")
    if cfg["locf_fill"] is not None and method != "locf":
        raise UsageError("locf_fill only applies to method 'locf'")
    b = cfg["bootstrap_B"]
    if b is not None and (not isinstance(b, int) or b < 2):
        raise UsageError("bootstrap_B must be an integer >= 2")
    if not isinstance(cfg["seed"], int):
        raise UsageError("seed must be an integer")
    kernel, solver = _settings(cfg)
    return spec, kernel, solver


def make_fitter(cfg, spec, kernel, solver):
    """Cohort -> fit object for the configured method."""
    from .eventfit import fit_locf, fit_ppl, fit_proposed
    from .vnarfit import DisjointPartition, fit_disjoint

    method = cfg["method"]
    z = cfg["event_covariates"]
    if method == "proposed":
        return lambda c: fit_proposed(c, spec, kernel, solver, z)
    if method == "ppl":
        return lambda c: fit_ppl(c, kernel, solver, z)
    if method == "locf":
        return lambda c: fit_locf(c, solver, z, fill=cfg["locf_fill"])
    part = DisjointPartition(cfg["disjoint_partition"]["z"],
                             cfg["disjoint_partition"]["w"])
    return lambda c: fit_disjoint(c, part, kernel, solver)


def coefficient_labels(cfg):
    if cfg["method"] == "disjoint":
        p = cfg["disjoint_partition"]
        return list(p["z"]) + list(p["w"])
    return list(cfg["event_covariates"])


# --------------------------------------------------------------------------
# documents


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _document(kind, cfg, inputs, body):
    doc = {
        "tool": "recurrent-ehr",
        "version": __version__,
        "command": kind,
        "timestamp": datetime.datetime.now(datetime.timezone.utc)
        .isoformat(timespec="seconds"),
        "inputs": inputs,
        "config": cfg,
    }
    doc.update(body)
    return _jsonable(doc)


def _fit_body(fit, cfg, cohort, spec, kernel, grid_points=101):
    body = {"result": fit.to_dict()}
    if cfg["method"] == "proposed" and fit.visit_fit is not None:
        # dense lambda_0 grid for plotting
        alpha = fit.visit_fit.alpha_hat
        grid = np.linspace(0.0, cohort.tau, grid_points)
        rate = [baseline_visit_rate(cohort, spec, alpha, fit.h, t)
                for t in grid]
        body["curves"] = {"baseline_visit_rate": {"t": grid, "rate": rate}}
    if getattr(fit, "baseline_cumulative", None) is not None:
        t, v = fit.baseline_cumulative
        body.setdefault("curves", {})["baseline_cumulative"] = \
            {"t": t, "value": v}
    return body


def _write_json(doc, out):
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_curves_csv(doc, path):
    curves = doc.get("curves", {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["curve", "t", "value"])
        for name, c in curves.items():
            values = c.get("value", c.get("rate"))
            for t, v in zip(c["t"], values):
                w.writerow([name, repr(float(t)), repr(float(v))])


def _error_object(exc, code):
    err = {"error": {"type": type(exc).__name__, "message": str(exc),
                     "exit_status": code}}
    if isinstance(exc, ConvergenceError):
        err["error"]["diagnostics"] = {
            "last_iterate": None if exc.x is None else list(map(float, exc.x)),
            "score_norm": exc.score_norm, "iterations": exc.iterations}
    return err


# --------------------------------------------------------------------------
# commands


def _load(args):
    file_cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(file_cfg, dict):
            raise UsageError(f"{args.config}: top level must be an object")
    cfg = resolve_config(file_cfg, args)
    cohort = load_cohort(args.data_subjects, args.data_visits, tau=cfg["tau"])
    cfg["tau"] = cohort.tau
    spec, kernel, solver = validate_config(cfg, cohort)
    inputs = {"subjects": args.data_subjects, "visits": args.data_visits}
    return cfg, cohort, spec, kernel, solver, inputs


def _bootstrap_body(cohort, fitter, cfg, threads):
    from .inference import bootstrap
    res = bootstrap(cohort, fitter, cfg["bootstrap_B"], cfg["seed"],
                    n_jobs=threads)
    return res, res.to_dict(coefficient_labels(cfg))


def cmd_fit(args):
    cfg, cohort, spec, kernel, solver, inputs = _load(args)
    fitter = make_fitter(cfg, spec, kernel, solver)
    fit = fitter(cohort)
    body = _fit_body(fit, cfg, cohort, spec, kernel)
    if cfg["bootstrap_B"]:
        _, body["bootstrap"] = _bootstrap_body(cohort, fitter, cfg,
                                               args.threads)
    doc = _document("fit", cfg, inputs, body)
    _write_json(doc, args.out)
    if args.curves:
        _write_curves_csv(doc, args.curves)
    return EXIT_OK


def cmd_bootstrap(args):
    cfg, cohort, spec, kernel, solver, inputs = _load(args)
    if not cfg["bootstrap_B"]:
        raise UsageError("bootstrap needs --bootstrap-B or bootstrap_B in "
                         "the configuration")
    fitter = make_fitter(cfg, spec, kernel, solver)
    fit = fitter(cohort)  # fails fast before any replicate is drawn
    res, summary = _bootstrap_body(cohort, fitter, cfg, args.threads)
    body = {"result": fit.to_dict(), "bootstrap": summary}
    _write_json(_document("bootstrap", cfg, inputs, body), args.out)
    if args.replicates:
        res.replicates_csv(args.replicates, coefficient_labels(cfg))
    return EXIT_OK


def cmd_simulate(args):
    from .simlab import (METHODS as SIM_METHODS, generate_cohort,
                         run_scenario, scenario_preset)
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    if args.bootstrap_B is not None and args.bootstrap_B < 2:
        raise UsageError("--bootstrap-B must be at least 2")
    overrides = {"n": args.n, "reps": args.reps, "seed": args.seed}
    if args.tau is not None:
        overrides["tau"] = args.tau
    config = scenario_preset(args.scenario, **overrides)
    kernel = config.kernel
    if args.fixed_h is not None:
        kernel = replace(kernel, h=args.fixed_h)
    if args.bandwidth_c is not None:
        kernel = replace(kernel, c=args.bandwidth_c)
    if args.bandwidth_nu is not None:
        kernel = replace(kernel, nu=args.bandwidth_nu)
    config = replace(config, kernel=kernel)
    if args.methods:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    else:
        methods = ["disjoint"] if config.disjoint else \
            ["proposed", "ppl", "locf"]
    bad = [m for m in methods if m not in SIM_METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {SIM_METHODS}")
    if "disjoint" in methods and not config.disjoint:
        raise UsageError("method 'disjoint' needs the Disjoint scenario")
    if args.dump_replicate is not None:
        if not 0 <= args.dump_replicate < args.reps:
            raise UsageError("--dump-replicate must lie in [0, reps)")
        if not args.dump_prefix:
            raise UsageError("--dump-replicate needs --dump-prefix")
        sim = generate_cohort(config, args.dump_replicate)
        save_cohort(sim.cohort, f"{args.dump_prefix}_subjects.csv",
                    f"{args.dump_prefix}_visits.csv")
    result = run_scenario(config, methods, bootstrap_B=args.bootstrap_B,
                          n_jobs=args.threads)
    if args.out in (None, "-"):
        result.to_csv(sys.stdout)
    else:
        result.to_csv(args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser():
    from .simlab import PRESETS

    parser = argparse.ArgumentParser(
        prog="recurrent-ehr",
        description="Proportional rate models for recurrent events with "
                    "covariates seen only at informative visits.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        if data:
            p.add_argument("--data-subjects", required=True,
                           help="subjects CSV (subject_id, censor_time, ...)")
            p.add_argument("--data-visits", required=True,
                           help="visits CSV (subject_id, time, kind, ...)")
            p.add_argument("--config", help="JSON analysis configuration")
            p.add_argument("--method", choices=CONFIG_METHODS)
        p.add_argument("--bandwidth-c", type=float)
        p.add_argument("--bandwidth-nu", type=float)
        p.add_argument("--fixed-h", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--bootstrap-B", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=_positive_int, default=1,
                       help="worker processes (results do not depend on it)")
        p.add_argument("--out", help="output path (default: stdout)")

    fit = sub.add_parser("fit", help="fit one estimator")
    common(fit)
    fit.add_argument("--curves", help="also write baseline curves as CSV")
    fit.set_defaults(func=cmd_fit)

    boot = sub.add_parser("bootstrap", help="bootstrap one estimator")
    common(boot)
    boot.add_argument("--replicates",
                      help="write the replicate coefficient matrix as CSV")
    boot.set_defaults(func=cmd_bootstrap)

    sim = sub.add_parser("simulate", help="run a simulation preset")
    common(sim, data=False)
    sim.add_argument("--scenario", required=True, choices=PRESETS)
    sim.add_argument("--n", type=int, default=200)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--methods",
                     help="comma-separated methods (default depends on "
                          "the scenario)")
    sim.add_argument("--dump-replicate", type=int,
                     help="also save this replicate's cohort as CSV")
    sim.add_argument("--dump-prefix",
                     help="path prefix for the dumped cohort files")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.seed is None:
        args.seed = 2024
    try:
        return args.func(args)
    except (FittingError, BootstrapError) as exc:
        return _fail(exc, EXIT_FIT)
    except (UsageError, CohortError, ValueError, OSError) as exc:
        return _fail(exc, EXIT_USAGE)


def _fail(exc, code):
    sys.stderr.write(json.dumps(_error_object(exc, code)) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
