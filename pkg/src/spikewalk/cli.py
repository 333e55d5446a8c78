"""Command-line driver: build | simulate | estimate | compare | cost.

Every flag mirrors a key of the optional JSON config; flags given on the
command line win.  Exit codes: 0 ok, 2 config error, 3 dt constraint
violated, 4 walker capacity exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform as _platform
import sys
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .circuits import PROFILES, CapacityError, Platform
from .cost import (CPU_TIME_PER_UPDATE, NMC_TIME_PER_UPDATE, Kind, PlatformParams, advantage_report,
                   effective_parallelism)
from .dtmc import DomainError, DtInfeasibleError
from .ensembles import DensitySeries
from .fk import ContractError, IncompleteEnsembleError, write_solution_csv
from .pipeline import Backend, RunResult, estimate_run, mean_percent_error, mesh_for, simulate_problem
from .problems import PROBLEMS, get_problem

EXIT_OK, EXIT_CONFIG, EXIT_CONSTRAINT, EXIT_CAPACITY = 0, 2, 3, 4

DEFAULTS = {"platform": "REFERENCE", "out": "results", "force": False, "split_replicas": False,
            "cpu_updates_per_joule": 2.75e6, "nmc_updates_per_joule": 6.0e7, "cores": 128}


class ConfigError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config; flags override its keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--platform", choices=[b.value for b in Backend])
    common.add_argument("--walkers", type=int, help="walkers per start state")
    common.add_argument("--steps", type=int, help="walk steps (omit to run stopped problems to absorption)")
    common.add_argument("--force", action="store_true", default=None, help="ignore dt constraint violations")
    common.add_argument("--problem", help=f"one of {', '.join(sorted(PROBLEMS))}")
    common.add_argument("--n", type=int, help="torus side")
    common.add_argument("--dt", type=float, help="time step override")
    common.add_argument("--starts", type=int, nargs="*", help="start states (default: all transient states)")
    common.add_argument("--split-replicas", action="store_true", default=None,
                        help="run walker counts above the platform cap as independent replicas")
    p = argparse.ArgumentParser(prog="spikewalk", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="write the chain and compiled-mesh summary")
    sub.add_parser("simulate", parents=[common], help="write density CSVs per start state")
    sub.add_parser("estimate", parents=[common], help="estimates and oracle comparison from a simulate run")
    c = sub.add_parser("compare", parents=[common], help="compare estimates against a reference run")
    c.add_argument("--reference", required=True, help="output directory of the reference run")
    k = sub.add_parser("cost", parents=[common], help="time/energy advantage report")
    k.add_argument("--cpu-updates-per-joule", type=float)
    k.add_argument("--nmc-updates-per-joule", type=float)
    k.add_argument("--cores", type=int)
    k.add_argument("--mesh-size", type=int)
    k.add_argument("--ticks", help="ticks CSV from a simulate run (measured mode)")
    return p


def _config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for k, v in vars(args).items():
        if k not in ("config", "command") and v is not None:
            cfg[k] = v
    return cfg


def _problem(cfg: dict):
    name = cfg.get("problem")
    if not name:
        raise ConfigError(f"--problem is required; choose from {', '.join(sorted(PROBLEMS))}")
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem {name!r}; choose from {', '.join(sorted(PROBLEMS))}")
    kw = {}
    if name == "torus" and cfg.get("n") is not None:
        kw["n"] = int(cfg["n"])
    if cfg.get("dt") is not None:
        if name not in ("boltzmann", "sphere", "barbell"):
            raise ConfigError(f"problem {name!r} has a fixed time step")
        kw["dt"] = float(cfg["dt"])
    if name in ("boltzmann", "sphere", "barbell"):
        kw["force"] = bool(cfg.get("force"))
    return get_problem(name, **kw)


def _config_hash(cfg: dict) -> str:
    doc = json.dumps({k: v for k, v in sorted(cfg.items()) if k != "out"}, sort_keys=True, default=str)
    return hashlib.sha256(doc.encode()).hexdigest()


def _write_manifest(out: Path, cfg: dict, command: str, files: list[str]) -> None:
    sums = {}
    for f in sorted(files):
        sums[f] = hashlib.sha256((out / f).read_bytes()).hexdigest()
    manifest = {"command": command, "config": cfg, "config_hash": _config_hash(cfg), "seed": cfg.get("seed"),
                "versions": {"spikewalk": __version__, "python": _platform.python_version(), "numpy": np.__version__,
                             "scipy": scipy.__version__, "numba": numba.__version__},
                "files": sums}
    with open(out / f"manifest_{command}.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=str)


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build(cfg: dict) -> list[str]:
    prob = _problem(cfg)
    out = _outdir(cfg)
    files = ["chain.json"]
    prob.chain.save(out / "chain.json")
    if prob.mesh is not None:
        prob.mesh.save(out / "mesh.json")
        files.append("mesh.json")
    if cfg["platform"] != Backend.REFERENCE.value:
        mesh = mesh_for(prob, Platform(cfg["platform"]))
        mesh.save_summary(out / "circuit.json")
        files.append("circuit.json")
        print(f"{prob.name}: {prob.n_states} states, {mesh.network.size} neurons, "
              f"{len(mesh.network.synapses)} synapses on {cfg['platform']}")
    else:
        print(f"{prob.name}: {prob.n_states} states")
    return files


def _starts(cfg: dict, prob) -> np.ndarray:
    if cfg.get("starts"):
        s = np.asarray(cfg["starts"], np.int64)
        if np.any((s < 0) | (s >= prob.n_states)):
            raise ConfigError("start state out of range")
        return s
    return prob.starts


def cmd_simulate(cfg: dict) -> list[str]:
    if cfg.get("seed") is None:
        raise ConfigError("--seed is required for simulation")
    prob = _problem(cfg)
    walkers = int(cfg.get("walkers") or prob.default_walkers)
    steps = cfg.get("steps", prob.default_steps) if "steps" in cfg else prob.default_steps
    if steps is None and not prob.stopped:
        raise ConfigError("--steps is required for this problem")
    backend = Backend(cfg["platform"])
    if backend is not Backend.REFERENCE and not cfg.get("split_replicas"):
        cap = PROFILES[Platform(backend.value)].walker_cap
        if walkers > cap:
            raise CapacityError(f"{walkers} walkers per start exceed the {backend.value} cap of {cap}; "
                                "use --split-replicas")
    res = simulate_problem(prob, backend, walkers, steps, int(cfg["seed"]), _starts(cfg, prob))
    out = _outdir(cfg)
    (out / "density").mkdir(exist_ok=True)
    files = []
    for s, d in sorted(res.densities.items()):
        name = f"density/start_{s}.csv"
        d.to_csv(out / name, sparse=True)
        files.append(name)
        if d.ticks is not None:
            tname = f"density/ticks_{s}.csv"
            with open(out / tname, "w") as fh:
                fh.write("step,ticks\n")
                fh.writelines(f"{k + 1},{t}\n" for k, t in enumerate(d.ticks))
            files.append(tname)
    print(f"{prob.name}: {len(res.densities)} start(s), {walkers} walkers each on {backend.value}")
    return files


def load_run(cfg: dict, prob, directory: Path) -> RunResult:
    dens = {}
    for f in sorted(Path(directory, "density").glob("start_*.csv")):
        s = int(f.stem.split("_")[1])
        dens[s] = DensitySeries.from_csv(f, prob.dt, prob.n_states)
    if not dens:
        raise ConfigError(f"no density files under {directory}/density; run simulate first")
    walkers = int(next(iter(dens.values())).total)
    return RunResult(prob.name, Backend(cfg["platform"]), int(cfg.get("seed") or 0), walkers, dens)


def _estimate_table(prob, est) -> list[tuple]:
    rows = []
    for k, t in enumerate(est.times):
        for c, s in enumerate(est.starts):
            se = None if est.stderr is None else float(est.stderr[k, c])
            rows.append((int(s), k, float(t), float(est.values[k, c]), se))
    return rows


def cmd_estimate(cfg: dict) -> list[str]:
    prob = _problem(cfg)
    out = _outdir(cfg)
    res = load_run(cfg, prob, out)
    est = estimate_run(prob, res)
    files = ["estimates.csv"]
    with open(out / "estimates.csv", "w") as fh:
        fh.write("start,step,t,value,stderr\n")
        for s, k, t, v, se in _estimate_table(prob, est):
            fh.write(f"{s},{k},{t!r},{v!r},{'' if se is None else repr(se)}\n")
    if prob.stopped:
        vals = np.full(prob.n_states, np.nan)
        vals[est.starts] = est.values[0]
        write_solution_csv(out / "solution.csv", vals, None, prob.positions)
        files.append("solution.csv")
    summary = {"problem": prob.name, "walkers": res.walkers, "starts": len(est.starts)}
    if prob.oracle is not None:
        exact = np.asarray(prob.oracle(est.times))[:, est.starts]
        err = est.values - exact
        with open(out / "comparison.csv", "w") as fh:
            fh.write("start,step,t,value,oracle,abs_error,stderr\n")
            for k, t in enumerate(est.times):
                for c, s in enumerate(est.starts):
                    se = "" if est.stderr is None else repr(float(est.stderr[k, c]))
                    fh.write(f"{s},{k},{float(t)!r},{float(est.values[k, c])!r},{float(exact[k, c])!r},"
                             f"{abs(float(err[k, c]))!r},{se}\n")
        summary["max_abs_error"] = float(np.abs(err).max())
        summary["mean_percent_error"] = mean_percent_error(est.values, exact)
        files.append("comparison.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    files.append("summary.json")
    print(json.dumps(summary))
    return files


def _read_estimates(path: Path) -> dict[tuple[int, int], float]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    return {(int(r["start"]), int(r["step"])): float(r["value"]) for r in data}


def cmd_compare(cfg: dict) -> list[str]:
    out = _outdir(cfg)
    ref = Path(cfg["reference"])
    for d in (out, ref):
        if not (d / "estimates.csv").exists():
            raise ConfigError(f"{d}/estimates.csv missing; run estimate first")
    a, b = _read_estimates(out / "estimates.csv"), _read_estimates(ref / "estimates.csv")
    keys = sorted(set(a) & set(b))
    if not keys:
        raise ConfigError("no common (start, step) pairs")
    va = np.array([a[k] for k in keys])
    vb = np.array([b[k] for k in keys])
    with open(out / "compare.csv", "w") as fh:
        fh.write("start,step,value,reference,abs_error\n")
        for (s, k), x, y in zip(keys, va, vb):
            fh.write(f"{s},{k},{x!r},{y!r},{abs(x - y)!r}\n")
    summary = {"pairs": len(keys), "max_abs_error": float(np.abs(va - vb).max()),
               "mean_percent_error": mean_percent_error(va, vb)}
    with open(out / "compare.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    print(json.dumps(summary))
    return ["compare.csv", "compare.json"]


def cmd_cost(cfg: dict) -> list[str]:
    out = _outdir(cfg)
    W = float(cfg.get("walkers") or 1000)
    S = float(cfg.get("steps") or 100_000)
    K = int(cfg.get("mesh_size") or 441)
    cpu = PlatformParams(Kind.VN, 1, CPU_TIME_PER_UPDATE, 1 / float(cfg["cpu_updates_per_joule"]), label="cpu")
    nmc = PlatformParams(Kind.NEURAL, int(cfg["cores"]), NMC_TIME_PER_UPDATE,
                         1 / float(cfg["nmc_updates_per_joule"]), K, label="neuromorphic")
    rep = advantage_report(cpu, nmc, W, S, K)
    doc = rep.to_json()
    if cfg.get("ticks"):
        t = np.loadtxt(cfg["ticks"], delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)[:, 1]
        if cfg.get("walkers") is None:
            raise ConfigError("measured mode needs --walkers (walkers in the measured run)")
        # every walker starts on one node, so the first step is fully serialized
        c = float(t[0]) / W
        doc["effective_parallelism"] = effective_parallelism(t, int(W), c).tolist()
        doc["serial_ticks_per_update"] = c
    with open(out / "cost.json", "w") as fh:
        json.dump(doc, fh, indent=1)
    print(rep.table())
    return ["cost.json"]


COMMANDS = {"build": cmd_build, "simulate": cmd_simulate, "estimate": cmd_estimate, "compare": cmd_compare,
            "cost": cmd_cost}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        cfg = _config(args)
        files = COMMANDS[args.command](cfg)
        _write_manifest(Path(cfg["out"]), cfg, args.command, files)
    except (ConfigError, DomainError, ContractError, IncompleteEnsembleError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DtInfeasibleError as e:
        print(f"constraint violation: {e}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
