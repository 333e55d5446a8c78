"""Simulate a problem per start state on a platform, then reduce to estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .circuits import PROFILES, CompiledMesh, Platform, compile_mesh, simulate_split
from .dtmc import DomainError, sample_density
from .ensembles import DensitySeries
from .fk import ContractError, density_estimates, estimate_stopped
from .problems import ProblemSpec


class Backend(str, Enum):
    LOIHI = "LOIHI"
    TRUENORTH = "TRUENORTH"
    REFERENCE = "REFERENCE"


@dataclass
class RunResult:
    problem: str
    backend: Backend
    seed: int
    walkers: int
    densities: dict[int, DensitySeries]
    mesh: CompiledMesh | None = None
    meta: dict = field(default_factory=dict)


_MESH_CACHE: dict[tuple[int, str], CompiledMesh] = {}


def mesh_for(problem: ProblemSpec, platform: Platform) -> CompiledMesh:
    key = (id(problem.chain), Platform(platform).value)
    if key not in _MESH_CACHE:
        _MESH_CACHE[key] = compile_mesh(problem.chain, platform)
    return _MESH_CACHE[key]


def simulate_problem(problem: ProblemSpec, backend: Backend | str, walkers: int, steps: int | None, seed: int,
                     starts=None) -> RunResult:
    """``walkers`` walkers from each start, one independent run per start.

    Spiking runs above the platform cap are split into replicas; every
    (start, replica) pair draws from its own stream.
    """
    backend = Backend(backend)
    if walkers < 1:
        raise DomainError("walkers must be >= 1")
    starts = problem.starts if starts is None else np.asarray(starts, np.int64)
    out: dict[int, DensitySeries] = {}
    mesh = None
    if backend is Backend.REFERENCE:
        for s in starts:
            out[int(s)] = sample_density(problem.chain, {int(s): walkers}, steps, seed)
    else:
        platform = Platform(backend.value)
        mesh = mesh_for(problem, platform)
        per_start = math.ceil(walkers / PROFILES[platform].walker_cap)
        for k, s in enumerate(starts):
            out[int(s)] = simulate_split(mesh, {int(s): walkers}, steps, seed, replica_base=k * per_start)
    return RunResult(problem.name, backend, int(seed), int(walkers), out, mesh)


@dataclass
class Estimates:
    """Per-start estimates; ``values[k, s]`` at step ``k`` (a single row for stopped problems)."""

    starts: np.ndarray
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None

    def oracle_errors(self, oracle) -> np.ndarray:
        exact = np.asarray(oracle(self.times))[:, self.starts]
        return self.values - exact


def estimate_run(problem: ProblemSpec, result: RunResult, steps: int | None = None) -> Estimates:
    starts = np.array(sorted(result.densities), np.int64)
    if problem.stopped:
        vals = np.array([estimate_stopped(result.densities[s], f=problem.f, outside=problem.outside).value
                         for s in starts])
        return Estimates(starts, np.array([np.nan]), vals[None, :], None)
    if problem.c_const is not None and not np.isscalar(problem.c_const):
        raise ContractError("density input needs a constant c")
    cols, ses = [], []
    for s in starts:
        v, e = density_estimates(result.densities[s], problem.g, problem.c_const)
        cols.append(v)
        ses.append(e)
    n = min(len(c) for c in cols) if steps is None else steps + 1
    vals = np.stack([c[:n] for c in cols], axis=1)
    se = None if any(e is None for e in ses) else np.stack([e[:n] for e in ses], axis=1)
    return Estimates(starts, np.arange(n) * problem.dt, vals, se)


def mean_percent_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Average of ``100 |est - ref| / |ref|`` over states with a nonzero reference."""
    ref = np.asarray(reference, float)
    est = np.asarray(estimate, float)
    keep = ref != 0
    return float(np.mean(100 * np.abs(est[keep] - ref[keep]) / np.abs(ref[keep])))
