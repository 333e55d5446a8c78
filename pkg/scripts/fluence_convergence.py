"""Slab fluence: mean percent error against a high-walker baseline as walkers grow."""

import argparse
import json
from pathlib import Path

import numpy as np

from spikewalk.pipeline import estimate_run, mean_percent_error, simulate_problem
from spikewalk.problems import fluence_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--walkers", type=int, nargs="+", default=[64, 256, 1024, 6250])
    ap.add_argument("--baseline-walkers", type=int, default=100_000)
    ap.add_argument("--backend", default="LOIHI")
    ap.add_argument("--seeds", type=int, default=2)
    ap.add_argument("--out", default="results/fluence")
    args = ap.parse_args()

    prob = fluence_problem()
    base = estimate_run(prob, simulate_problem(prob, "REFERENCE", args.baseline_walkers, None, seed=2024))
    rows = []
    for M in args.walkers:
        errs = [mean_percent_error(estimate_run(prob, simulate_problem(prob, args.backend, M, None, s)).values[0],
                                   base.values[0]) for s in range(args.seeds)]
        rows.append({"walkers": M, "median_percent_error": float(np.median(errs)), "per_seed": errs})
        print(f"{M:7d} walkers/state: {np.median(errs):6.2f}% mean error")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "convergence.json").write_text(json.dumps({"backend": args.backend, "rows": rows}, indent=2))
    np.savetxt(out / "baseline.csv", np.c_[prob.positions[base.starts], base.values[0]], delimiter=",",
               header="x,mu,fluence", comments="")


if __name__ == "__main__":
    main()
