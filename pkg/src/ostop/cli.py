"""Command line front end: ``ostop {solve,verify,oracle,sample} --config problem.json``.

Exit codes: 0 success, 1 other failure, 2 degenerate problem, 3 no convergence,
4 bad configuration.  Failures are also written as a JSON error object.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .config import SCHEMA, ProblemConfig, decode_float, load_config, to_jsonable
from .diffusion import Interval
from .errors import ConfigError, ConvergenceError, DegeneracyError
from .oracle import StoppingPolicy, brute_force, monte_carlo_value, policy_value
from .solver import solve
from .value import IntervalSolution, Solution, VerifyOptions, coefficients, verify_solution

log = logging.getLogger("ostop")

EXIT_CODES = ((DegeneracyError, 2), (ConvergenceError, 3), (ConfigError, 4))


def _emit(doc: dict, path) -> None:
    text = json.dumps(to_jsonable(doc), indent=2, allow_nan=False)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _interval_doc(iv: IntervalSolution) -> dict:
    return {"lo": iv.c.lo, "hi": iv.c.hi, "k1": iv.k1, "k2": iv.k2}


def solution_report(cfg: ProblemConfig, sol: Solution, elapsed: float, verification=None) -> dict:
    doc = {
        "schema": SCHEMA,
        "kind": "solution",
        "status": "ok",
        "stop_everywhere": sol.stop_everywhere,
        "negative_set": sol.negative,
        "continuation": [_interval_doc(iv) for iv in sol.intervals],
        "merges": [{"kind": m.kind, "replaced": list(m.replaced), "n": m.n, "c": m.c}
                   for m in sol.merges],
        "solver": {
            "merges_performed": len(sol.merges),
            "enlarge_iterations": [getattr(r, "iterations", 0) for r in sol.diagnostics if r],
            "elapsed_seconds": elapsed,
            "options": cfg.solver,
        },
        "conditions": [r for r in sol.diagnostics if r],
    }
    if sol.stop_everywhere:
        doc["note"] = "negative set is empty: stopping immediately is optimal everywhere"
    if verification is not None:
        doc["verification"] = verification
    return doc


def _solution_from_report(cfg: ProblemConfig, path) -> Solution:
    try:
        with open(path) as fh:
            doc = json.load(fh)
        ivs = []
        for item in doc["continuation"]:
            c = Interval(decode_float(item["lo"]), decode_float(item["hi"]))
            ivs.append(IntervalSolution(c, *coefficients(cfg.model, cfg.reward.g, c)))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot read solution report {path}: {exc}") from exc
    return Solution(ivs, cfg.reward, cfg.model)


def _verify_options(args) -> VerifyOptions:
    return VerifyOptions(window=Interval(*args.window)) if args.window else VerifyOptions()


def cmd_solve(cfg: ProblemConfig, args) -> dict:
    t0 = time.perf_counter()
    sol = solve(cfg.model, cfg.reward, cfg.solver)
    elapsed = time.perf_counter() - t0
    report = verify_solution(sol, _verify_options(args), cfg.solver.work_window)
    if args.samples:
        write_samples(cfg, sol, args.samples, args.window)
    return solution_report(cfg, sol, elapsed, report)


def cmd_verify(cfg: ProblemConfig, args) -> dict:
    fresh = solve(cfg.model, cfg.reward, cfg.solver)
    sol = _solution_from_report(cfg, args.solution) if args.solution else fresh
    report = verify_solution(sol, _verify_options(args), cfg.solver.work_window)
    same = ([(c.lo, c.hi) for c in sol.continuation]
            == [(c.lo, c.hi) for c in fresh.continuation])
    return {
        "schema": SCHEMA,
        "kind": "verification",
        "status": "ok",
        "continuation": [_interval_doc(iv) for iv in sol.intervals],
        "endpoints_identical": same,
        "verification": report,
    }


def cmd_oracle(cfg: ProblemConfig, args) -> dict:
    sol = solve(cfg.model, cfg.reward, cfg.solver)
    oc = cfg.oracle
    points = oc.eval_points or tuple(np.linspace(oc.window.lo, oc.window.hi, 20))
    bf = brute_force(cfg.model, cfg.reward, oc.templates, oc.step, points, oc.window)
    v = sol(np.asarray(bf.eval_points))
    doc = {
        "schema": SCHEMA,
        "kind": "oracle",
        "status": "ok",
        "brute_force": {
            "templates": list(oc.templates),
            "step": oc.step,
            "window": oc.window,
            "points": [
                {"x": x, "solver_value": sv, "best_value": bv, "best_stop_set": list(p.stop_set)}
                for x, sv, bv, p in zip(bf.eval_points, v, bf.values, bf.policies)
            ],
            "max_excess": float(np.max(bf.values - v)),
        },
    }
    mc = oc.monte_carlo
    if mc is not None and mc.points:
        seed = mc.seed if args.seed is None else args.seed
        policy = StoppingPolicy.from_solution(sol)
        rows = []
        for x in mc.points:
            est = monte_carlo_value(cfg.model, cfg.reward, policy, x, mc.n_paths, mc.dt, seed,
                                    workers=mc.workers)
            exact = policy_value(cfg.model, cfg.reward, policy, x).value
            z = (est.value - exact) / est.stderr if est.stderr > 0 else 0.0
            rows.append({"x": x, "estimate": est.value, "stderr": est.stderr,
                         "policy_value": exact, "z_score": z})
        doc["monte_carlo"] = {"n_paths": mc.n_paths, "dt": mc.dt, "seed": seed, "points": rows}
    return doc


def write_samples(cfg: ProblemConfig, sol: Solution, path, window=None) -> None:
    rng = Interval(*window) if window else cfg.output.sample_range
    xs = np.linspace(rng.lo, rng.hi, cfg.output.sample_count)
    xs = xs[cfg.model.domain.contains(xs)]
    g = np.asarray(cfg.reward.g(xs), dtype=float)
    v = np.asarray(sol(xs), dtype=float)
    region = np.full(xs.shape, "stop", dtype=object)
    for i, c in enumerate(sol.continuation, start=1):
        region[c.contains(xs)] = f"cont-{i}"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "g", "V", "region"])
        for row in zip(xs, g, v, region):
            w.writerow([f"{row[0]:.17g}", f"{row[1]:.17g}", f"{row[2]:.17g}", row[3]])


def cmd_sample(cfg: ProblemConfig, args) -> dict:
    sol = solve(cfg.model, cfg.reward, cfg.solver)
    path = args.samples or args.out
    if not path:
        raise ConfigError("sample needs --samples or --out")
    write_samples(cfg, sol, path, args.window)
    return {"schema": SCHEMA, "kind": "samples", "status": "ok", "path": str(path)}


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "oracle": cmd_oracle, "sample": cmd_sample}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ostop", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="problem configuration (JSON)")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--samples", help="CSV path for x,g,V,region samples")
    p.add_argument("--seed", type=int, help="override the Monte Carlo seed")
    p.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"),
                   help="sample range and verification window")
    p.add_argument("--solution", help="solution report to verify (verify only)")
    p.add_argument("--quiet", action="store_true", help="only log errors")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = "ERROR" if args.quiet else os.environ.get("OSTOP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        if args.window and not args.window[0] < args.window[1]:
            raise ConfigError("--window needs lo < hi")
        if args.solution and args.command != "verify":
            raise ConfigError("--solution only applies to verify")
        cfg = load_config(args.config)
        doc = COMMANDS[args.command](cfg, args)
        _emit(doc, args.out if args.command != "sample" or args.samples else None)
        return 0
    except Exception as exc:  # every failure becomes an error object and exit code
        code = next((c for t, c in EXIT_CODES if isinstance(exc, t)), 1)
        log.error("%s: %s", type(exc).__name__, exc)
        err = {"schema": SCHEMA, "status": "error",
               "error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
        try:
            _emit(err, args.out)
        except OSError:
            _emit(err, None)
        return code


def main() -> None:
    sys.exit(run())
