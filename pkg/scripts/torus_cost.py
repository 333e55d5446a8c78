"""Torus diffusion on the spiking mesh: ticks per step, effective parallelism and the cost report."""

import argparse
import json
from pathlib import Path

import numpy as np

from spikewalk.circuits import Platform, compile_mesh, simulate_density
from spikewalk.cost import advantage_report, default_cpu, default_neural, effective_parallelism
from spikewalk.problems import torus_diffusion_problem, torus_displacement


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=21)
    ap.add_argument("--walkers", type=int, default=1000)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--platform", default="LOIHI", choices=["LOIHI", "TRUENORTH"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/torus")
    args = ap.parse_args()

    prob = torus_diffusion_problem(args.n, args.walkers)
    center = int(prob.starts[0])
    mesh = compile_mesh(prob.chain, Platform(args.platform))
    dens = simulate_density(mesh, {center: args.walkers}, args.steps, args.seed)
    m = effective_parallelism(dens.ticks, args.walkers, dens.ticks[0] / args.walkers)
    q = len(m) // 4
    mean, se = torus_displacement(prob.positions, args.n, center, dens.counts[-1])
    report = advantage_report(default_cpu(), default_neural(K=prob.n_states), args.walkers, args.steps,
                              K=prob.n_states)
    info = mesh.summary()
    print(f"{info['platform']} mesh: {info['states']} states, {info['neurons']} neurons, {info['synapses']} synapses")
    print(f"effective parallelism: first quarter {m[:q].mean():.1f}, final quarter {m[-q:].mean():.1f}")
    print(f"mean displacement after {args.steps} steps: {mean:.3f} +/- {se:.3f}")
    print(report.table())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "ticks.csv", np.c_[np.arange(1, len(dens.ticks) + 1), dens.ticks, m], delimiter=",",
               header="step,ticks,effective_parallelism", comments="", fmt=["%d", "%d", "%.4f"])
    report.save(out / "cost.json")
    (out / "displacement.json").write_text(json.dumps({"mean": mean, "stderr": se}))


if __name__ == "__main__":
    main()
