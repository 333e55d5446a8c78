"""Walker ensembles shared by the samplers, the spiking mesh and the estimators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PathEnsemble:
    """Sampled paths ``states[j, k]`` = state of walker ``j`` after ``k`` steps."""

    start: int
    dt: float
    states: np.ndarray
    stop_step: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states)
        if self.states.ndim != 2:
            raise ValueError("states must be (paths, steps + 1)")
        if self.states.size and np.any(self.states[:, 0] != self.start):
            raise ValueError("all paths must begin at the start state")
        if self.stop_step is not None:
            self.stop_step = np.asarray(self.stop_step, np.int64)
            if np.any(self.stop_step >= self.states.shape[1]):
                raise ValueError("stopping step exceeds the recorded path length")

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def steps(self) -> int:
        return self.states.shape[1] - 1

    def density(self, n_states: int) -> "DensitySeries":
        counts = np.stack([np.bincount(col, minlength=n_states) for col in self.states.T])
        return DensitySeries(self.dt, counts)


@dataclass
class DensitySeries:
    """Walker counts ``counts[k, s]`` per walk step and state."""

    dt: float
    counts: np.ndarray
    ticks: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, np.int64)
        if self.counts.ndim != 2:
            raise ValueError("counts must be (steps + 1, states)")
        if np.any(self.counts < 0):
            raise ValueError("walker counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts[0].sum())

    @property
    def steps(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def n_states(self) -> int:
        return self.counts.shape[1]

    def cumulative(self, upto: int | None = None) -> np.ndarray:
        """Visits per state summed over steps ``0 .. upto - 1`` (all steps by default)."""
        stop = self.counts.shape[0] if upto is None else upto
        return self.counts[:stop].sum(axis=0)

    def __add__(self, other: "DensitySeries") -> "DensitySeries":
        if other.dt != self.dt:
            raise ValueError("cannot add density series with different dt")
        n = max(self.counts.shape[0], other.counts.shape[0])
        a = _pad_steps(self.counts, n)
        b = _pad_steps(other.counts, n)
        ticks = None
        if self.ticks is not None and other.ticks is not None:
            ticks = np.concatenate([self.ticks, other.ticks])
        return DensitySeries(self.dt, a + b, ticks)

    def to_csv(self, path, state_ids=None, sparse: bool = False) -> None:
        """One ``step,state_id,count`` row per observation; ``sparse`` drops zero counts."""
        ids = np.arange(self.n_states) if state_ids is None else np.asarray(state_ids)
        with open(path, "w") as fh:
            fh.write("step,state_id,count\n")
            for k, row in enumerate(self.counts):
                for sid, c in zip(ids, row):
                    if c or not sparse:
                        fh.write(f"{k},{sid},{c}\n")

    @classmethod
    def from_csv(cls, path, dt: float, n_states: int | None = None) -> "DensitySeries":
        """Inverse of :meth:`to_csv`; pass ``n_states`` for sparse files (ids are then column indices)."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        steps = int(data[:, 0].max()) + 1
        if n_states is None:
            ids = np.unique(data[:, 1])
            pos = np.searchsorted(ids, data[:, 1])
            n_states = len(ids)
        else:
            pos = data[:, 1]
        counts = np.zeros((steps, n_states), np.int64)
        counts[data[:, 0], pos] = data[:, 2]
        return cls(dt, counts)


def _pad_steps(counts: np.ndarray, n: int) -> np.ndarray:
    """Extend a series to ``n`` snapshots by holding its last snapshot (stopped walks stay put)."""
    if counts.shape[0] == n:
        return counts
    tail = np.repeat(counts[-1:], n - counts.shape[0], axis=0)
    return np.concatenate([counts, tail])
