"""Command-line interface: simulate, fit, tune, evaluate and sweep.

Exit codes: 0 success, 2 input or usage error, 3 fit did not converge.
Every subcommand accepts ``--config FILE.json`` whose keys mirror the long
flag names; flags given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .driver import (FitResult, fit, gamma_reference, refine_k, select_gamma,
                     select_k_preliminary)
from .events import WEIGHT_MODES, load_dataset, write_csv, write_json
from .experiments import (AGG_FIELDS, ROW_FIELDS, SWEEP_FIELDS, aggregate, grid_specs,
                          run_specs)
from .metrics import ari, contingency, mise_fit
from .model import FitConfig, ModelParams
from .simgen import GroundTruth, simulate

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 2, 3
THREADS_ENV = "ASIMM_THREADS"

logger = logging.getLogger("asimm")


class InputError(Exception):
    """Unreadable or inconsistent input files."""


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# output helpers

def _write_rows(path: Path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if row.get(k) is None else row[k] for k in fields})


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(command: str, args: argparse.Namespace, **extra) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("handler", "command")}
    return {
        "command": command,
        "arguments": cfg,
        "versions": {"asimm": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        **extra,
    }


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load(args):
    try:
        return load_dataset(args.dataset, getattr(args, "shifts", None), getattr(args, "T", None))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read dataset {args.dataset}: {exc}") from exc


def _fit_config(args, **over) -> FitConfig:
    cfg = FitConfig(K=args.K, gamma=args.gamma, ell0=args.ell0, epsilon=args.epsilon,
                    max_outer_iters=args.max_iters, weight_mode=args.weights,
                    seed=args.seed, restarts=args.restarts, threads=args.threads)
    return replace(cfg, **over)


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    if args.scenario == 1 and args.rho is not None:
        raise argparse.ArgumentTypeError("--rho applies to scenario 2 only")
    if args.scenario == 2 and args.rho is None:
        raise argparse.ArgumentTypeError("scenario 2 requires --rho")
    dataset, truth = simulate(args.scenario, args.n, args.R, args.tau, args.rho,
                              args.seed, args.replicate)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        write_csv(dataset, out / "events.csv", out / "shifts.csv")
        files = ["events.csv", "shifts.csv"]
    else:
        write_json(dataset, out / "dataset.json")
        files = ["dataset.json"]
    _write_json(out / "truth.json", truth.to_json())
    files.append("truth.json")
    _write_json(out / "manifest.json", _manifest(
        "simulate", args, files=files, Lambda=truth.Lambda.tolist(), T=truth.T,
        counts_total=int(dataset.counts().sum())))
    return EXIT_OK


def _trace_rows(result: FitResult):
    return [{"iteration": j + 1, "objective": val} for j, val in enumerate(result.trace)]


def cmd_fit(args) -> int:
    dataset = _load(args)
    v_known = None
    if args.known_v:
        truth = GroundTruth.from_json(_read_json(args.known_v))
        if truth.v.shape != (dataset.n, dataset.M):
            raise InputError("truth shifts do not match the dataset dimensions")
        v_known = truth.v
    config = _fit_config(args, known_v=v_known is not None)
    result = fit(dataset, config, v_known=v_known)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "fit.json", result.to_json())
    _write_rows(out / "trace.csv", ("iteration", "objective"), _trace_rows(result))
    _write_json(out / "manifest.json", _manifest(
        "fit", args, config=config.to_json(), files=["fit.json", "trace.csv"],
        converged=result.converged, iterations=result.iterations))
    if not result.converged:
        print(f"fit did not converge within {config.max_outer_iters} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_tune(args) -> int:
    dataset = _load(args)
    base = _fit_config(args, threads=1)
    K0, kcurve = select_k_preliminary(dataset, args.k_max, args.seed, args.elbow)
    ref = gamma_reference(dataset, args.delta_t, args.gamma_points)
    gcurve = select_gamma(dataset, K0, ref.grid, base, args.band, args.threads)
    k_grid = args.k_grid or list(range(1, min(args.k_max, dataset.n) + 1))
    kfit = refine_k(dataset, gcurve.selected, k_grid, base, args.elbow, args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "kmeans_curve.csv", ("K", "within_ss"),
                [{"K": k, "within_ss": ss} for k, ss in kcurve])
    _write_rows(out / "gamma_curve.csv", ("gamma", "L1", "L2", "objective"), gcurve.rows())
    _write_rows(out / "gamma_curve_raw.csv", ("gamma", "L1", "L2", "objective"), gcurve.raw)
    _write_rows(out / "k_curve.csv", ("K", "L1", "L2", "objective"), kfit.rows())
    report = {
        "K0": K0,
        "gamma0": ref.gamma0,
        "gamma_grid": ref.grid.tolist(),
        "gamma_range": [float(ref.grid[0]), float(ref.grid[-1])],
        "gamma_selected": gcurve.selected,
        "K_selected": kfit.selected,
        "k_grid": k_grid,
    }
    _write_json(out / "tune.json", report)
    _write_json(out / "manifest.json", _manifest(
        "tune", args, config=base.to_json(),
        files=["tune.json", "kmeans_curve.csv", "gamma_curve.csv", "gamma_curve_raw.csv",
               "k_curve.csv"]))
    print(json.dumps({k: report[k] for k in ("K0", "gamma0", "gamma_selected", "K_selected")}))
    return EXIT_OK


def evaluate_docs(fit_doc: dict, truth_doc: dict, replicate: int = 0):
    """Metrics row and confusion table of a fit against a ground truth."""
    try:
        params = ModelParams.from_json(fit_doc)
        truth = GroundTruth.from_json(truth_doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed input: {exc}") from exc
    if params.z.shape != truth.z.shape:
        raise InputError(f"fit has {params.z.size} subjects, truth has {truth.z.size}")
    if params.M != truth.M:
        raise InputError(f"fit has {params.M} components, truth has {truth.M}")
    if abs(params.T - truth.T) > 1e-12:
        raise InputError("fit and truth use different T")
    meta = truth.meta
    config = fit_doc.get("config", {})
    row = {
        "replicate": replicate,
        "n": truth.z.size,
        "R": truth.w.shape[0],
        "tau": meta.get("tau"),
        "rho": meta.get("rho"),
        "gamma": config.get("gamma"),
        "K": params.K,
        "mise": mise_fit(params, truth),
        "ari": ari(truth.z, params.z),
        "iters": fit_doc.get("iterations"),
        "converged": fit_doc.get("converged"),
    }
    table, est_labels, true_labels = contingency(params.z + 1, truth.z + 1)
    confusion = [{"estimated": int(e), **{f"true_{int(t)}": int(c) for t, c in zip(true_labels, r)}}
                 for e, r in zip(est_labels, table)]
    return row, confusion


def cmd_evaluate(args) -> int:
    row, confusion = evaluate_docs(_read_json(args.fit), _read_json(args.truth), args.replicate)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_rows(out, ROW_FIELDS, [row])
    conf_path = Path(args.confusion) if args.confusion else out.with_name(out.stem + "_confusion.csv")
    _write_rows(conf_path, list(confusion[0].keys()), confusion)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.scenario == 2 and not args.rho:
        raise argparse.ArgumentTypeError("scenario 2 requires --rho")
    gamma = args.gamma if args.gamma is not None else ([0.0] if args.scenario == 1 else [0.01])
    K = args.K if args.K is not None else ([1] if args.scenario == 1 else [4])
    modes = {"off": (False,), "on": (True,), "both": (False, True)}[args.known_v]
    specs = grid_specs(args.scenario, args.n, args.R, args.tau, args.rho or [None], gamma, K,
                       args.replicates, args.seed, modes)
    base = FitConfig(ell0=args.ell0, epsilon=args.epsilon, max_outer_iters=args.max_iters,
                     weight_mode=args.weights, restarts=args.restarts)
    rows = run_specs(specs, base, args.threads)
    agg = aggregate(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "rows.csv", SWEEP_FIELDS, rows)
    _write_rows(out / "aggregate.csv", AGG_FIELDS, agg)
    _write_json(out / "manifest.json", _manifest(
        "sweep", args, config=base.to_json(), runs=len(rows), files=["rows.csv", "aggregate.csv"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _fit_flags(p: argparse.ArgumentParser, single: bool = True) -> None:
    if single:
        p.add_argument("--K", type=int, default=1, help="number of clusters")
        p.add_argument("--gamma", type=float, default=0.0, help="weight of the count loss")
    p.add_argument("--ell0", type=int, default=10, help="truncation frequency")
    p.add_argument("--epsilon", type=float, default=0.005,
                   help="relative-decrease stopping threshold")
    p.add_argument("--max-iters", type=int, default=50, help="maximum outer iterations")
    p.add_argument("--weights", choices=WEIGHT_MODES, default="count")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads (default from ${THREADS_ENV})")


def _dataset_flags(p):
    p.add_argument("dataset", nargs="?", help="dataset JSON, or events CSV with --shifts")
    p.add_argument("--shifts", help="per-observation shift CSV (CSV input)")
    p.add_argument("--T", type=float, help="observation length (CSV input)")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="asimm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"asimm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with flag values")
        p.add_argument("--log-level", default="WARNING")
        p.set_defaults(handler=handler)
        subs[name] = p
        return p

    p = add("simulate", cmd_simulate, "generate a synthetic dataset with ground truth")
    p.add_argument("--scenario", type=int, choices=(1, 2))
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--R", type=int, default=8)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--rho", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="output directory")

    p = add("fit", cmd_fit, "fit the mixture model")
    _dataset_flags(p)
    _fit_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--known-v", help="truth JSON whose subject shifts are held fixed")
    p.add_argument("--out", help="output directory")

    p = add("tune", cmd_tune, "choose K and gamma with the elbow and flat-then-rise rules")
    _dataset_flags(p)
    _fit_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--k-grid", type=int, nargs="+")
    p.add_argument("--delta-t", type=float)
    p.add_argument("--gamma-points", type=int, default=13)
    p.add_argument("--elbow", type=float, default=0.10)
    p.add_argument("--band", type=float, default=0.05)
    p.add_argument("--out", help="output directory")

    p = add("evaluate", cmd_evaluate, "score a fit against ground truth")
    p.add_argument("--fit", help="fit JSON")
    p.add_argument("--truth", help="truth JSON")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--confusion", help="confusion CSV path")
    p.add_argument("--out", help="metrics CSV path")

    p = add("sweep", cmd_sweep, "replicated simulate/fit/evaluate over a grid")
    p.add_argument("--scenario", type=int, choices=(1, 2))
    p.add_argument("--n", type=int, nargs="+", default=[40])
    p.add_argument("--R", type=int, nargs="+", default=[1, 2, 4, 8])
    p.add_argument("--tau", type=float, nargs="+", default=[0.3])
    p.add_argument("--rho", type=float, nargs="+")
    p.add_argument("--gamma", type=float, nargs="+")
    p.add_argument("--K", type=int, nargs="+")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--known-v", choices=("off", "on", "both"), default="off")
    _fit_flags(p, single=False)
    p.add_argument("--out", help="output directory")
    return parser, subs


REQUIRED = {
    "simulate": ("scenario", "out"),
    "fit": ("dataset", "out"),
    "tune": ("dataset", "out"),
    "evaluate": ("fit", "truth", "out"),
    "sweep": ("scenario", "out"),
}


def parse_args(argv=None) -> argparse.Namespace:
    """Parse flags, merging a ``--config`` JSON underneath them."""
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config must be a JSON object")
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        cfg = {k.lstrip("-").replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        cfg.pop("config", None)
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) in (None, [])]
    if missing:
        subs[args.command].error("missing required: " + ", ".join(
            ("--" + k.replace("_", "-")) if k != "dataset" else "dataset" for k in missing))
    if getattr(args, "threads", 1) < 1:
        subs[args.command].error("--threads must be >= 1")
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except argparse.ArgumentTypeError as exc:
        print(f"asimm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ValueError) as exc:
        print(f"asimm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
