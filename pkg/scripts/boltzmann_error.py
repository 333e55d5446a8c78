"""Boltzmann two-state problem: estimate error against the closed form, per backend."""

import argparse
import csv
from pathlib import Path

import numpy as np

from spikewalk.pipeline import estimate_run, simulate_problem
from spikewalk.problems import boltzmann_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--walkers", type=int, default=10_000)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--backends", nargs="+", default=["REFERENCE", "TRUENORTH", "LOIHI"])
    ap.add_argument("--out", default="results/boltzmann")
    args = ap.parse_args()

    prob = boltzmann_problem()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["backend", "seed", "t", "phi_minus", "phi_plus", "exact_minus", "exact_plus"])
        for backend in args.backends:
            worst = []
            for seed in range(args.seeds):
                est = estimate_run(prob, simulate_problem(prob, backend, args.walkers, args.steps, seed))
                exact = prob.oracle(est.times)
                for k, t in enumerate(est.times):
                    w.writerow([backend, seed, f"{t:.4f}", *est.values[k], *exact[k]])
                worst.append(np.abs(est.values - exact).max())
            print(f"{backend:10s} max abs error per seed: {np.round(worst, 4).tolist()}")
    print(f"wrote {out / 'errors.csv'}")


if __name__ == "__main__":
    main()
