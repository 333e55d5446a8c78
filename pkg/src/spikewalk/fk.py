"""Feynman-Kac Monte Carlo estimators over path ensembles and density series.

Time integrals are left-endpoint Riemann sums over the steps before the
evaluation (or stopping) step, so an estimate at step 0 is exactly ``g(x)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .dtmc import DomainError
from .ensembles import DensitySeries, PathEnsemble


class IncompleteEnsembleError(RuntimeError):
    """Some walker has not reached its stopping step."""


class ContractError(RuntimeError):
    """The estimator cannot represent the requested payoff."""


@dataclass
class Estimate:
    value: float
    stderr: float | None
    sample_count: int
    t: float | None = None

    def to_json(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "M": self.sample_count, "t": self.t}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


def standard_error(samples: Sequence[float]) -> float:
    """Unbiased sample standard deviation over sqrt(n)."""
    x = np.asarray(samples, float)
    if x.size < 2:
        raise DomainError("standard error needs at least two samples")
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def _summarize(payoff: np.ndarray, t: float | None) -> Estimate:
    n = payoff.size
    if n == 0:
        raise DomainError("empty ensemble")
    se = standard_error(payoff) if n > 1 else None
    if se is not None and np.all(payoff == payoff[0]):
        se = 0.0
    return Estimate(float(np.mean(payoff)), se, int(n), t)


def _eval_state_fn(fn, states: np.ndarray, t=None) -> np.ndarray:
    """Evaluate a per-state term: constant, array indexed by state id, ``fn(states)`` or ``fn(t, states)``."""
    if fn is None:
        return np.zeros(states.shape)
    if np.isscalar(fn):
        return np.full(states.shape, float(fn))
    if callable(fn):
        out = fn(states) if t is None else fn(t, states)
        return np.broadcast_to(np.asarray(out, float), states.shape)
    return np.asarray(fn, float)[states]


def path_weights(paths: PathEnsemble, c, upto: int) -> np.ndarray:
    """exp(sum_{k < j} c(t_k, X_k) dt) for j = 0..upto, shape (M, upto + 1)."""
    dt = paths.dt
    X = paths.states[:, :upto]
    if upto == 0:
        return np.ones((paths.size, 1))
    cv = np.stack([_eval_state_fn(c, X[:, k], k * dt) for k in range(upto)], axis=1) * dt
    expo = np.concatenate([np.zeros((paths.size, 1)), np.cumsum(cv, axis=1)], axis=1)
    return np.exp(expo)


def estimate_initial_value(paths: PathEnsemble, g, c=0.0, f=None, t_index: int | None = None) -> Estimate:
    """Mean of ``g(X_i) w_i + sum_{k<i} f(t_k, X_k) w_k dt`` with ``w_k = exp(sum_{s<k} c dt)``.

    ``g`` is per state; ``c`` and ``f`` may depend on ``(t, state)``.
    """
    if paths.size == 0:
        raise DomainError("empty ensemble")
    i = paths.steps if t_index is None else int(t_index)
    if not 0 <= i <= paths.steps:
        raise DomainError("t_index beyond the recorded paths")
    w = path_weights(paths, c, i)
    payoff = _eval_state_fn(g, paths.states[:, i]) * w[:, i]
    if f is not None and i > 0:
        fv = np.stack([_eval_state_fn(f, paths.states[:, k], k * paths.dt) for k in range(i)], axis=1)
        payoff = payoff + (fv * w[:, :i]).sum(axis=1) * paths.dt
    return _summarize(payoff, i * paths.dt)


def _stopped_value(visits: np.ndarray, ends: np.ndarray, g_vals: np.ndarray, f_vals: np.ndarray,
                   dt: float, M: int) -> float:
    """Common reduction of both stopped-estimator forms, on integer per-state tallies."""
    return float((np.dot(f_vals, visits) * dt + np.dot(g_vals, ends)) / M)


def estimate_stopped(data: PathEnsemble | DensitySeries, g_boundary=0.0, f=None, speed_scale: float = 1.0,
                     outside=None) -> Estimate:
    """Mean of ``g_boundary(X_T) + sum_{k<T} speed_scale f(X_k) dt`` at the stopping step ``T``.

    A density series must have run until all walkers reached states flagged
    in ``outside`` (boolean mask or ids); only its value is available, the
    standard error needs per-path payoffs.
    """
    if isinstance(data, PathEnsemble):
        if data.stop_step is None or np.any(data.stop_step < 0):
            raise IncompleteEnsembleError("every path needs a stopping step")
        n = int(data.states.max()) + 1
        T = data.stop_step
        steps = np.arange(data.states.shape[1])
        before = steps[None, :] < T[:, None]
        visits = np.bincount(data.states[before], minlength=n)
        ends = np.bincount(data.states[np.arange(data.size), T], minlength=n)
        ids = np.arange(n)
        f_vals = speed_scale * _eval_state_fn(f, ids)
        g_vals = _eval_state_fn(g_boundary, ids)
        value = _stopped_value(visits, ends, g_vals, f_vals, data.dt, data.size)
        payoff = g_vals[data.states[np.arange(data.size), T]] + np.where(before, f_vals[data.states], 0.0).sum(axis=1) * data.dt
        est = _summarize(payoff, None)
        est.value = value
        return est
    if outside is None:
        raise DomainError("a density series needs the outside-state mask")
    n = data.n_states
    outside = np.asarray(outside)
    if outside.dtype == bool:
        mask = outside.copy()
    else:
        mask = np.zeros(n, bool)
        mask[outside.astype(np.int64)] = True
    if data.counts[-1][~mask].sum() != 0:
        raise IncompleteEnsembleError("walkers remain inside the domain at the last snapshot")
    visits = np.where(mask, 0, data.counts.sum(axis=0))
    ends = np.where(mask, data.counts[-1], 0)
    ids = np.arange(n)
    value = _stopped_value(visits, ends, _eval_state_fn(g_boundary, ids), speed_scale * _eval_state_fn(f, ids),
                           data.dt, data.total)
    return Estimate(value, None, data.total, None)


def estimate_from_density(density: DensitySeries, g, c_const=0.0, t_index: int | None = None) -> Estimate:
    """``exp(c t) * sum_s g(s) rho(t, s) / M`` for constant ``c`` and no source term."""
    if callable(c_const) or not np.isscalar(c_const):
        raise ContractError("density estimates need a constant c; path-dependent weights are lost")
    i = density.steps if t_index is None else int(t_index)
    vals, ses = density_estimates(density, g, c_const)
    return Estimate(float(vals[i]), None if ses is None else float(ses[i]), density.total, i * density.dt)


def density_estimates(density: DensitySeries, g, c_const=0.0) -> tuple[np.ndarray, np.ndarray | None]:
    """Estimates and standard errors at every step of a density series."""
    if callable(c_const) or not np.isscalar(c_const):
        raise ContractError("density estimates need a constant c")
    M = density.total
    if M == 0:
        raise DomainError("empty ensemble")
    gv = _eval_state_fn(g, np.arange(density.n_states))
    rho = density.counts / M
    k = np.arange(density.counts.shape[0])
    w = np.exp(np.concatenate([[0.0], np.cumsum(np.full(k.size - 1, float(c_const) * density.dt))]))
    mean = rho @ gv
    second = rho @ (gv * gv)
    if M < 2:
        return w * mean, None
    var = np.maximum(second - mean * mean, 0.0) * M / (M - 1)
    return w * mean, w * np.sqrt(var / M)


def write_solution_csv(path, values: np.ndarray, stderr: np.ndarray | None, positions: np.ndarray | None = None) -> None:
    """One row per state: state_id, position columns, value, stderr."""
    values = np.asarray(values, float)
    pos = None if positions is None else np.asarray(positions, float).reshape(len(values), -1)
    with open(path, "w") as fh:
        cols = [] if pos is None else [f"x{k}" for k in range(pos.shape[1])]
        fh.write(",".join(["state_id", *cols, "value", "stderr"]) + "\n")
        for s, v in enumerate(values):
            row = [str(s)]
            if pos is not None:
                row += [repr(float(p)) for p in pos[s]]
            row += [repr(float(v)), "" if stderr is None else repr(float(stderr[s]))]
            fh.write(",".join(row) + "\n")


def fit_decay_rate(t: np.ndarray, y: np.ndarray) -> float:
    """Least-squares rate ``r`` in ``y ~ A exp(-r t)`` (requires positive ``y``)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if np.any(y <= 0):
        raise DomainError("decay fit needs positive values")
    slope = np.polyfit(t, np.log(y), 1)[0]
    return float(-slope)
