"""Finite-state Markov chains for 1-D jump-diffusions and a reference walker sampler.

A state ``x_i`` moves in one step ``dt`` to a Gaussian around ``x_i + b dt``
(variance ``a^2 dt``), shifted by a jump ``h`` when the Poisson clock rings
once.  Transition probabilities are Gaussian masses of the destination bins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numba as nb
import numpy as np
import scipy.sparse as sp
from scipy import integrate, special

from .ensembles import DensitySeries, PathEnsemble
from .spiking.rng import hash64


class DomainError(ValueError):
    """An argument lies outside the operation's domain."""


class ConstructionError(RuntimeError):
    """A built chain violates stochasticity (a bug, not a user error)."""


class DtInfeasibleError(RuntimeError):
    def __init__(self, constraint: str, detail: str):
        super().__init__(f"dt constraint not met: {constraint} ({detail})")
        self.constraint = constraint


class Conservation(str, Enum):
    TAIL_TO_EDGE = "TAIL_TO_EDGE"
    NORMALIZE_ROW = "NORMALIZE_ROW"
    ADD_TO_SELF = "ADD_TO_SELF"


def _zero(t, x):
    return 0.0


@dataclass
class SdeCoefficients:
    """Coefficients of ``dX = b dt + a dW + h dN`` plus the PIDE terms ``c, f, g``.

    Jump marks are either discrete ``(q, weight)`` pairs or a density
    ``mark_density(q, t, x)`` on ``mark_support``.  With neither, the single
    mark ``q = 0`` is used.
    """

    drift: Callable = _zero
    diffusion: Callable = _zero
    jump_rate: Callable = _zero
    jump: Callable = lambda t, x, q: q
    marks: Sequence[tuple[float, float]] | None = None
    mark_density: Callable | None = None
    mark_support: tuple[float, float] | None = None
    killing: Callable = _zero
    source: Callable = _zero
    initial: Callable | None = None
    time_dependent: bool = False

    def __post_init__(self) -> None:
        if self.marks is not None:
            w = math.fsum(wt for _, wt in self.marks)
            if any(wt < 0 for _, wt in self.marks) or abs(w - 1.0) > 1e-12:
                raise DomainError("discrete mark weights must be nonnegative and sum to 1")
        if self.mark_density is not None:
            if self.mark_support is None:
                raise DomainError("a mark density needs a finite mark_support")

    def check_mark_density(self, t: float, x: float, tol: float = 1e-6) -> float:
        """Integral of the mark density at ``(t, x)``; raises if it is not 1 within ``tol``."""
        lo, hi = self.mark_support
        total, _ = integrate.quad(lambda q: self.mark_density(q, t, x), lo, hi, limit=200)
        if abs(total - 1.0) > tol:
            raise DomainError(f"mark density integrates to {total}, not 1")
        return total

    def mark_nodes(self, t: float, x: float) -> tuple[np.ndarray, np.ndarray]:
        if self.marks is not None:
            q, w = zip(*self.marks)
            return np.asarray(q, float), np.asarray(w, float)
        if self.mark_density is not None:
            lo, hi = self.mark_support
            g, gw = np.polynomial.legendre.leggauss(64)
            q = 0.5 * (hi - lo) * g + 0.5 * (hi + lo)
            w = 0.5 * (hi - lo) * gw * np.array([self.mark_density(qq, t, x) for qq in q])
            return q, w / w.sum()
        return np.zeros(1), np.ones(1)


@dataclass
class StateSpace:
    """States with representative points (increasing, for 1-D grids) and allowed destinations."""

    points: np.ndarray
    dx: float
    neighbors: list[np.ndarray]
    absorbing_id: int | None = None

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, float)
        self.neighbors = [np.asarray(nb_, np.int64) for nb_ in self.neighbors]
        if len(self.neighbors) != len(self.points):
            raise DomainError("one neighbor list per state is required")

    @property
    def size(self) -> int:
        return len(self.points)

    @classmethod
    def grid(cls, lo: float, hi: float, n: int, radius: int | None = 1) -> "StateSpace":
        """Midpoints of ``n`` equal intervals of ``[lo, hi]``; neighbors within ``radius`` (None = all)."""
        if n < 1 or hi <= lo:
            raise DomainError("need n >= 1 and hi > lo")
        dx = (hi - lo) / n
        pts = lo + dx * (np.arange(n) + 0.5)
        if radius is None:
            nbrs = [np.arange(n)] * n
        else:
            nbrs = [np.arange(max(0, i - radius), min(n, i + radius + 1)) for i in range(n)]
        return cls(pts, dx, nbrs)

    @classmethod
    def fully_connected(cls, points: Sequence[float], dx: float) -> "StateSpace":
        pts = np.asarray(points, float)
        return cls(pts, dx, [np.arange(len(pts))] * len(pts))

    def subset(self, lo: int, hi: int) -> "StateSpace":
        keep = slice(lo, hi + 1)
        nbrs = [np.unique(np.clip(nb_, lo, hi)) - lo for nb_ in self.neighbors[keep]]
        absorbing = None
        if self.absorbing_id is not None and lo <= self.absorbing_id <= hi:
            absorbing = self.absorbing_id - lo
        return StateSpace(self.points[keep], self.dx, nbrs, absorbing)


def poisson_window_probs(lam_int: float) -> tuple[float, float, float]:
    """(P[no jump], P[one jump], P[more than one]) for a Poisson count with mean ``lam_int``."""
    if lam_int < 0 or not np.isfinite(lam_int):
        raise DomainError("integrated jump rate must be finite and >= 0")
    p0 = math.exp(-lam_int)
    p1 = lam_int * p0
    return p0, p1, float(special.gammainc(2, lam_int)) if lam_int > 0 else 0.0


_GL8 = np.polynomial.legendre.leggauss(8)


def integrated_rate(coeffs: SdeCoefficients, t: float, x: float, dt: float) -> float:
    if not coeffs.time_dependent:
        return coeffs.jump_rate(t, x) * dt
    g, w = _GL8
    s = t + 0.5 * dt * (g + 1.0)
    return 0.5 * dt * float(sum(wi * coeffs.jump_rate(si, x) for si, wi in zip(s, w)))


def _interval_mass(mu, sigma, lo, hi):
    """P[lo < N(mu, sigma^2) <= hi]; a point mass when sigma == 0."""
    mu = np.asarray(mu, float)
    if sigma == 0:
        return ((lo < mu) & (mu <= hi)).astype(float)
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    # take the difference on the side away from the bulk to keep tail accuracy
    upper = a > 0
    return np.where(upper, special.ndtr(-a) - special.ndtr(-b), special.ndtr(b) - special.ndtr(a))


def _bins(space: StateSpace, cols: np.ndarray, left_open: bool, right_open: bool):
    x = space.points[cols]
    lo = x - 0.5 * space.dx
    hi = x + 0.5 * space.dx
    if left_open:
        lo[np.argmin(x)] = -np.inf
    if right_open:
        hi[np.argmax(x)] = np.inf
    return lo, hi


def _row_masses(coeffs, space, i, t, dt, left_open, right_open, cols=None):
    """Transition masses from state ``i`` into the bins of ``cols`` (default: its neighbors)."""
    cols = space.neighbors[i] if cols is None else cols
    x = float(space.points[i])
    sigma = float(coeffs.diffusion(t, x)) * math.sqrt(dt)
    if sigma < 0:
        raise DomainError("diffusion coefficient must be >= 0")
    mu = x + float(coeffs.drift(t, x)) * dt
    _, pj, _ = poisson_window_probs(integrated_rate(coeffs, t, x, dt))
    lo, hi = _bins(space, cols, left_open, right_open)
    p = (1.0 - pj) * _interval_mass(mu, sigma, lo, hi)
    if pj > 0:
        q, w = coeffs.mark_nodes(t, x)
        for qk, wk in zip(q, w):
            p = p + pj * wk * _interval_mass(mu + float(coeffs.jump(t, x, qk)), sigma, lo, hi)
    return cols, p


def local_transition_prob(coeffs: SdeCoefficients, space: StateSpace, i: int, j: int, t: float, dt: float,
                          conservation: Conservation = Conservation.TAIL_TO_EDGE) -> float:
    """Probability of moving from state ``i`` to neighbor ``j`` in one step starting at ``t``."""
    nbrs = space.neighbors[i]
    if j not in nbrs:
        raise DomainError(f"state {j} is not a neighbor of {i}")
    fold = Conservation(conservation) is Conservation.TAIL_TO_EDGE
    cols, p = _row_masses(coeffs, space, i, t, dt, fold, fold)
    return float(p[np.nonzero(cols == j)[0][0]])


@dataclass
class DtCheck:
    dt: float
    max_multi_jump: float
    max_off_neighbor: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.max_multi_jump < self.threshold and self.max_off_neighbor < self.threshold

    @property
    def binding(self) -> str | None:
        if self.max_multi_jump >= self.threshold:
            return "multi-jump probability"
        if self.max_off_neighbor >= self.threshold:
            return "off-neighbor mass"
        return None


def check_dt(coeffs: SdeCoefficients, space: StateSpace, dt: float, threshold: float = 0.05,
             horizon: float | None = None) -> DtCheck:
    """Worst multi-jump and off-neighbor probabilities over the states and sampled times.

    Mass past the ends of the state space counts as in-neighbor for the
    extreme states; that mass belongs to truncation, not to the neighbor set.
    """
    times = np.linspace(0.0, horizon, 16) if horizon else np.zeros(1)
    n = space.size
    worst_jump = worst_off = 0.0
    for t in times:
        for i in range(n):
            if i == space.absorbing_id:
                continue
            x = float(space.points[i])
            worst_jump = max(worst_jump, poisson_window_probs(integrated_rate(coeffs, t, x, dt))[2])
            nbrs = space.neighbors[i]
            _, p = _row_masses(coeffs, space, i, t, dt, nbrs.min() == 0, nbrs.max() == n - 1)
            worst_off = max(worst_off, 1.0 - math.fsum(p))
    return DtCheck(dt, worst_jump, max(worst_off, 0.0), threshold)


def dt_ladder(floor: float = 1e-9) -> list[float]:
    out = []
    k = 0
    while True:
        for m in (1.0, 0.5, 0.2):
            v = m * 10.0**-k
            if v < floor * (1 - 1e-12):
                return out
            out.append(float(f"{v:.12g}"))
        k += 1


def select_dt(coeffs: SdeCoefficients, space: StateSpace, threshold: float = 0.05,
              horizon: float | None = None, floor: float = 1e-9) -> float:
    """Largest ladder value of dt whose multi-jump and off-neighbor masses stay below ``threshold``."""
    if not 0 < threshold < 1:
        raise DomainError("threshold must lie in (0, 1)")
    last = None
    for dt in dt_ladder(floor):
        last = check_dt(coeffs, space, dt, threshold, horizon)
        if last.ok:
            return dt
    raise DtInfeasibleError(last.binding, f"at dt={last.dt:g}: multi-jump {last.max_multi_jump:.3g}, "
                                          f"off-neighbor {last.max_off_neighbor:.3g}")


def make_row_exact(vals: np.ndarray) -> np.ndarray:
    """Nudge the largest entry so the row sums to exactly 1 under ``math.fsum``."""
    vals = np.array(vals, float)
    if vals.size == 0:
        raise ConstructionError("empty row")
    k = int(np.argmax(vals))
    for _ in range(8):
        r = 1.0 - math.fsum(vals)
        if r == 0.0:
            return vals
        vals[k] += r
    raise ConstructionError("row cannot be made exactly stochastic")


@dataclass
class TransitionModel:
    """Row-stochastic chain: one sparse matrix, or one per time step (held after the last)."""

    matrices: list
    dt: float
    space: StateSpace | None = None
    absorbing_id: int | None = None
    names: list[str] | None = None
    _tables: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if sp.issparse(self.matrices) or isinstance(self.matrices, np.ndarray):
            self.matrices = [self.matrices]
        self.matrices = [sp.csr_array(m) for m in self.matrices]
        for m in self.matrices:
            m.sort_indices()
        n = self.matrices[0].shape[0]
        if any(m.shape != (n, n) for m in self.matrices):
            raise DomainError("all transition matrices must be square and equal in size")
        if self.absorbing_id is None and self.space is not None:
            self.absorbing_id = self.space.absorbing_id

    @property
    def n_states(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def is_static(self) -> bool:
        return len(self.matrices) == 1

    def matrix(self, k: int = 0):
        return self.matrices[min(k, len(self.matrices) - 1)]

    def dense(self, k: int = 0) -> np.ndarray:
        return self.matrix(k).toarray()

    def validate(self, exact: bool = True, tol: float = 1e-12) -> None:
        for k, m in enumerate(self.matrices):
            if m.nnz and m.data.min() < 0:
                raise ConstructionError(f"negative entry in matrix {k}")
            for i in range(m.shape[0]):
                row = m.data[m.indptr[i]:m.indptr[i + 1]]
                s = math.fsum(row)
                if (exact and s != 1.0) or abs(s - 1.0) > tol:
                    raise ConstructionError(f"row {i} of matrix {k} sums to {s!r}")
        if self.absorbing_id is not None:
            a = self.absorbing_id
            for m in self.matrices:
                if m[[a], :].toarray().ravel()[a] != 1.0:
                    raise ConstructionError("absorbing row is not the unit row")

    def map_rows(self, fn) -> "TransitionModel":
        """New model whose rows are ``fn(cols, probs)`` (returns new probs on the same columns)."""
        out = []
        for m in self.matrices:
            m = m.copy()
            for i in range(m.shape[0]):
                a, b = m.indptr[i], m.indptr[i + 1]
                m.data[a:b] = fn(m.indices[a:b], m.data[a:b])
            m.eliminate_zeros()
            out.append(m)
        return TransitionModel(out, self.dt, self.space, self.absorbing_id, self.names)

    def sampling_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded per-row cumulative probabilities and destinations, shape (T, n, K)."""
        if self._tables is None:
            n = self.n_states
            K = max(int(np.diff(m.indptr).max()) for m in self.matrices)
            cum = np.full((len(self.matrices), n, K), 2.0)
            col = np.zeros((len(self.matrices), n, K), np.int64)
            for t, m in enumerate(self.matrices):
                for i in range(n):
                    a, b = m.indptr[i], m.indptr[i + 1]
                    c = np.cumsum(m.data[a:b])
                    pos = np.nonzero(m.data[a:b] > 0)[0]
                    c[pos[-1]:] = 1.0
                    cum[t, i, : b - a] = c
                    col[t, i, : b - a] = m.indices[a:b]
            self._tables = (cum, col)
        return self._tables

    def to_json(self) -> dict:
        mats = []
        for m in self.matrices:
            rows = []
            for i in range(m.shape[0]):
                a, b = m.indptr[i], m.indptr[i + 1]
                rows.append([[int(c), float(p), int(round(256 * p))] for c, p in zip(m.indices[a:b], m.data[a:b])])
            mats.append(rows)
        states = self.names or (self.space.points.tolist() if self.space is not None else list(range(self.n_states)))
        return {"states": states, "dt": self.dt, "absorbing_id": self.absorbing_id,
                "rows": mats[0] if self.is_static else None, "tensor": None if self.is_static else mats}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def from_json(cls, doc: dict) -> "TransitionModel":
        mats = [doc["rows"]] if doc.get("rows") is not None else doc["tensor"]
        n = len(mats[0])
        out = []
        for rows in mats:
            r = [i for i, row in enumerate(rows) for _ in row]
            c = [e[0] for row in rows for e in row]
            p = [e[1] for row in rows for e in row]
            out.append(sp.csr_array((p, (r, c)), shape=(n, n)))
        names = doc.get("states")
        return cls(out, doc["dt"], None, doc.get("absorbing_id"),
                   [str(s) for s in names] if names is not None else None)

    @classmethod
    def load(cls, path) -> "TransitionModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _apply_policy(cols, p, i, policy):
    if policy is Conservation.NORMALIZE_ROW:
        s = math.fsum(p)
        if s <= 0:
            raise ConstructionError(f"row {i} has no mass to normalize")
        p = p / s
    elif policy is Conservation.ADD_TO_SELF:
        self_pos = np.nonzero(cols == i)[0]
        if self_pos.size == 0:
            raise ConstructionError(f"state {i} has no self transition to absorb leftover mass")
        p = p.copy()
        p[self_pos[0]] += 1.0 - math.fsum(p)
    if np.any(p < 0):
        raise ConstructionError(f"row {i} has negative entries")
    return p


def assemble_chain(coeffs: SdeCoefficients, space: StateSpace, dt: float,
                   conservation: Conservation = Conservation.TAIL_TO_EDGE, steps: int | None = None) -> TransitionModel:
    """Build the chain; one matrix, or ``steps`` matrices when coefficients depend on time."""
    policy = Conservation(conservation)
    if coeffs.time_dependent:
        if not steps or steps < 1:
            raise DomainError("time-dependent coefficients need steps >= 1")
        times = [k * dt for k in range(steps)]
    else:
        times = [0.0]
    fold = policy is Conservation.TAIL_TO_EDGE
    n = space.size
    mats = []
    for t in times:
        rows, cols, vals = [], [], []
        for i in range(n):
            if i == space.absorbing_id:
                c, p = np.array([i]), np.array([1.0])
            else:
                c, p = _row_masses(coeffs, space, i, t, dt, fold, fold)
                p = make_row_exact(_apply_policy(c, p, i, policy))
            rows.extend([i] * len(c))
            cols.extend(c.tolist())
            vals.extend(p.tolist())
        mats.append(sp.csr_array((vals, (rows, cols)), shape=(n, n)))
    model = TransitionModel(mats, dt, space)
    model.validate()
    return model


def collapse_time_tensor(model: TransitionModel, steps: int) -> TransitionModel:
    """Fold a time-indexed chain into one static chain over (layer, state) pairs.

    State ``layer * n + s`` is state ``s`` at step ``layer``.  Layer ``l``
    moves to layer ``l + 1`` with the step-``l`` matrix; the last layer maps
    into itself with the last matrix.
    """
    if steps <= 0:
        raise DomainError("steps must be positive")
    if model.is_static:
        return model
    n = model.n_states
    rows, cols, vals = [], [], []
    for layer in range(steps):
        m = model.matrix(layer).tocoo()
        nxt = min(layer + 1, steps - 1)
        rows.append(layer * n + m.row)
        cols.append(nxt * n + m.col)
        vals.append(m.data)
    N = n * steps
    big = sp.csr_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    absorbing = None if model.absorbing_id is None else model.absorbing_id
    return TransitionModel([big], model.dt, None, None if absorbing is None else absorbing)


def truncate_to_finite(model: TransitionModel, lo: int, hi: int) -> TransitionModel:
    """Keep states ``lo..hi``; mass leaving below/above goes to ``lo``/``hi``."""
    if not 0 <= lo <= hi < model.n_states:
        raise DomainError("need 0 <= lo <= hi < n_states")
    if lo == 0 and hi == model.n_states - 1:
        return model
    n = hi - lo + 1
    mats = []
    for m in model.matrices:
        sub = m[lo:hi + 1].tocoo()
        c = np.clip(sub.col, lo, hi) - lo
        folded = sp.csr_array((sub.data, (sub.row, c)), shape=(n, n))
        folded.sum_duplicates()
        for i in range(n):
            a, b = folded.indptr[i], folded.indptr[i + 1]
            folded.data[a:b] = make_row_exact(folded.data[a:b])
        mats.append(folded)
    space = model.space.subset(lo, hi) if model.space is not None else None
    absorbing = model.absorbing_id - lo if model.absorbing_id is not None and lo <= model.absorbing_id <= hi else None
    out = TransitionModel(mats, model.dt, space, absorbing)
    out.validate()
    return out


# --- reference sampler ------------------------------------------------------

_INV53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True)
def _uniform(seed, stream, counter):
    return np.float64(hash64(seed, stream, counter) >> np.uint64(11)) * _INV53


@nb.njit(cache=True)
def _choose(cum, col, tk, s, u):
    lo = 0
    hi = cum.shape[2] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[tk, s, mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return col[tk, s, lo]


@nb.njit(cache=True)
def _paths_kernel(cum, col, start, M, steps, seed, stream0, out):
    T = cum.shape[0]
    for j in range(M):
        s = start
        out[j, 0] = s
        stream = stream0 + np.uint64(j)
        for k in range(steps):
            tk = min(k, T - 1)
            s = _choose(cum, col, tk, s, _uniform(seed, stream, np.uint64(k)))
            out[j, k + 1] = s


@nb.njit(cache=True)
def _absorb_steps_kernel(cum, col, start, M, max_steps, seed, stream0, absorbing):
    """Step at which each walker first sits in an absorbing state (-1 if beyond ``max_steps``)."""
    T = cum.shape[0]
    out = np.full(M, -1, np.int64)
    for j in range(M):
        s = start
        stream = stream0 + np.uint64(j)
        if absorbing[s]:
            out[j] = 0
            continue
        for k in range(max_steps):
            s = _choose(cum, col, min(k, T - 1), s, _uniform(seed, stream, np.uint64(k)))
            if absorbing[s]:
                out[j] = k + 1
                break
    return out


@nb.njit(cache=True)
def _density_kernel(cum, col, start, M, steps, seed, stream0, absorbing, live, entered):
    """Walker counts per step; absorbed walkers are booked once in ``entered`` and stop moving."""
    T = cum.shape[0]
    for j in range(M):
        s = start
        stream = stream0 + np.uint64(j)
        if absorbing[s]:
            entered[0, s] += 1
            continue
        live[0, s] += 1
        for k in range(steps):
            s = _choose(cum, col, min(k, T - 1), s, _uniform(seed, stream, np.uint64(k)))
            if absorbing[s]:
                entered[k + 1, s] += 1
                break
            live[k + 1, s] += 1


def _seed64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def _stream0(start: int, offset: int = 0) -> np.uint64:
    return np.uint64(((int(start) + 1) << 40) + int(offset))


def _stop_mask(model: TransitionModel, stop) -> np.ndarray:
    n = model.n_states
    if callable(stop):
        mask = np.array([bool(stop(s)) for s in range(n)])
    else:
        mask = np.zeros(n, bool)
        mask[np.asarray(list(stop), np.int64)] = True
    return mask


def sample_paths(model: TransitionModel, start: int, M: int, steps: int, seed: int,
                 stop=None, until_stopped: bool = False, max_steps: int = 1_000_000,
                 stream_offset: int = 0) -> PathEnsemble:
    """Sample ``M`` independent walks of ``steps`` steps from ``start``.

    Walker ``j`` draws step ``k`` from the hash of (seed, its stream, k), so a
    path never depends on how many other paths are sampled or in what order.
    ``stop`` is a predicate on state ids (True = outside the domain) or a
    collection of outside ids; the first step ``k >= 1`` outside is recorded.
    With ``until_stopped`` the horizon is extended until every path has exited.
    """
    if M < 1:
        raise DomainError("M must be >= 1")
    if not 0 <= start < model.n_states:
        raise DomainError("start state out of range")
    cum, col = model.sampling_tables()
    seed64, s0 = _seed64(seed), _stream0(start, stream_offset)
    mask = None if stop is None else _stop_mask(model, stop)
    horizon = int(steps)
    while True:
        out = np.empty((M, horizon + 1), np.int64)
        _paths_kernel(cum, col, int(start), int(M), horizon, seed64, s0, out)
        if mask is None:
            return PathEnsemble(int(start), model.dt, out)
        outside = mask[out[:, 1:]]
        hit = outside.any(axis=1)
        stop_step = np.where(hit, outside.argmax(axis=1) + 1, -1)
        if not until_stopped or hit.all() or horizon >= max_steps:
            return PathEnsemble(int(start), model.dt, out, stop_step)
        horizon = min(2 * max(horizon, 1), max_steps)


def sample_density(model: TransitionModel, counts: dict[int, int] | Sequence[int], steps: int | None,
                   seed: int, max_steps: int = 1_000_000) -> DensitySeries:
    """Density series of the reference sampler (the oracle for the spiking mesh).

    ``steps=None`` runs until every walker is absorbed.  Walkers from start
    ``s`` use the same streams as ``sample_paths(model, s, ...)``.
    """
    if not isinstance(counts, dict):
        counts = {i: int(c) for i, c in enumerate(counts) if c}
    cum, col = model.sampling_tables()
    n = model.n_states
    absorbing = np.zeros(n, np.bool_)
    if model.absorbing_id is not None:
        absorbing[model.absorbing_id] = True
    seed64 = _seed64(seed)
    if steps is None:
        horizon = 0
        for s, c in counts.items():
            t = _absorb_steps_kernel(cum, col, int(s), int(c), max_steps, seed64, _stream0(s), absorbing)
            if np.any(t < 0):
                raise RuntimeError("walkers still transient after max_steps")
            horizon = max(horizon, int(t.max(initial=0)))
    else:
        horizon = int(steps)
    live = np.zeros((horizon + 1, n), np.int64)
    entered = np.zeros((horizon + 1, n), np.int64)
    for s, c in counts.items():
        if c < 0:
            raise DomainError("walker counts must be >= 0")
        _density_kernel(cum, col, int(s), int(c), horizon, seed64, _stream0(s), absorbing, live, entered)
    return DensitySeries(model.dt, live + np.cumsum(entered, axis=0))


# --- continuous paths and grid snapping ---------------------------------------

def euler_maruyama_paths(coeffs: SdeCoefficients, x0: float, M: int, steps: int, dt: float,
                         seed: int) -> np.ndarray:
    """Unsnapped Euler-Maruyama paths (jumps ignored), shape (M, steps + 1)."""
    if M < 1 or steps < 0 or dt <= 0:
        raise DomainError("need M >= 1, steps >= 0 and dt > 0")
    rng = np.random.default_rng(seed)
    X = np.empty((M, steps + 1))
    X[:, 0] = x0
    for k in range(steps):
        t = k * dt
        x = X[:, k]
        b = np.broadcast_to(np.asarray(coeffs.drift(t, x), float), x.shape)
        a = np.broadcast_to(np.asarray(coeffs.diffusion(t, x), float), x.shape)
        X[:, k + 1] = x + b * dt + a * math.sqrt(dt) * rng.standard_normal(M)
    return X


def snap_to_grid(space: StateSpace, x) -> np.ndarray:
    """Midpoint of the uniform-grid interval containing each ``x``."""
    x = np.asarray(x, float)
    lo = space.points[0] - space.dx / 2
    hi = space.points[-1] + space.dx / 2
    if np.any((x < lo) | (x > hi)):
        raise DomainError("value outside the grid")
    idx = np.clip(np.floor((x - lo) / space.dx).astype(np.int64), 0, space.size - 1)
    return space.points[idx]
