"""Solve the bundled example problems and write plot-ready samples.

    python3 scripts/reproduce_examples.py --out results/ [--monte-carlo]

Prints the negative set, continuation region, coefficients and verification
figures for each configuration in configs/, and writes ``<name>.json`` and
``<name>.csv`` (columns x, g, V, region) to the output directory.
"""
import argparse
import json
import logging
import math
import time
from pathlib import Path

import numpy as np

from ostop.cli import solution_report, write_samples
from ostop.config import load_config, to_jsonable
from ostop.oracle import StoppingPolicy, brute_force, monte_carlo_value
from ostop.solver import solve
from ostop.value import verify_solution

ROOT = Path(__file__).resolve().parent.parent


def fmt(iv):
    return f"({iv.lo:.4f}, {iv.hi:.4f})" if not iv.is_point else f"{{{iv.lo:.4f}}}"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", nargs="*", type=Path,
                    default=sorted((ROOT / "configs").glob("*.json")))
    ap.add_argument("--out", type=Path, default=ROOT / "results")
    ap.add_argument("--monte-carlo", action="store_true", help="also run the configured MC checks")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    args.out.mkdir(parents=True, exist_ok=True)

    for path in args.configs:
        cfg = load_config(path)
        t0 = time.perf_counter()
        sol = solve(cfg.model, cfg.reward, cfg.solver)
        elapsed = time.perf_counter() - t0
        rep = verify_solution(sol, work_window=cfg.solver.work_window)
        print(f"\n== {path.stem}: {cfg.raw.get('name', '')}")
        print(f"   negative set : {', '.join(fmt(n) for n in sol.negative) or 'empty'}")
        for m in sol.merges:
            print(f"   {m.kind:<13}: {', '.join(fmt(n) for n in m.replaced)} -> N={fmt(m.n)}, C={fmt(m.c)}")
        for i, iv in enumerate(sol.intervals, 1):
            print(f"   C{i} = {fmt(iv.c):<22} k1 = {iv.k1:.6g}, k2 = {iv.k2:.6g}")
        print(f"   smooth fit {rep.smooth_fit_max:.1e}, majorant gap {rep.majorant_min_gap:.1e}, "
              f"inversion {rep.inversion_residual:.1e}, time {elapsed:.2f}s")

        oc = cfg.oracle
        xs = np.linspace(oc.window.lo, oc.window.hi, 22)[1:-1]
        bf = brute_force(cfg.model, cfg.reward, oc.templates, oc.step, xs, oc.window)
        print(f"   brute force ({list(oc.templates)} gaps, step {oc.step}): "
              f"max excess over V = {np.max(bf.values - sol(xs)):.2e}")
        if args.monte_carlo and oc.monte_carlo is not None:
            mc = oc.monte_carlo
            pol = StoppingPolicy.from_solution(sol)
            for x in mc.points:
                est = monte_carlo_value(cfg.model, cfg.reward, pol, x, mc.n_paths, mc.dt, mc.seed)
                z = (est.value - sol(x)) / est.stderr if est.stderr else 0.0
                print(f"   MC x={x:+.2f}: {est.value:.5f} +- {est.stderr:.5f} vs V={sol(x):.5f} (z={z:+.2f})")

        doc = solution_report(cfg, sol, elapsed, rep)
        (args.out / f"{path.stem}.json").write_text(json.dumps(to_jsonable(doc), indent=2) + "\n")
        write_samples(cfg, sol, args.out / f"{path.stem}.csv")
    print(f"\nreports and samples written to {args.out}")


if __name__ == "__main__":
    main()
