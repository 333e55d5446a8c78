"""Counter-based random draws keyed by (master_seed, stream_id, counter).

Every draw is a pure function of its key, so the order in which neurons are
updated (or whether a draw is evaluated lazily) never changes a result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_C2 = np.uint64(0xD1B54A32D192ED03)


@nb.njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def hash64(seed, stream, counter):
    """64-bit hash of a (seed, stream, counter) key (splitmix64 finalizer)."""
    key = _mix64(np.uint64(seed) + _GOLDEN * (np.uint64(stream) + np.uint64(1)))
    return _mix64(key ^ _mix64(np.uint64(counter) * _C2 + _GOLDEN))


@nb.njit(cache=True)
def draw_u8(seed, stream, counter):
    """Uniform integer on {0, ..., 255}: the top byte of the key hash."""
    return np.int64(hash64(seed, stream, counter) >> np.uint64(56))


@nb.njit(cache=True)
def draw_int(seed, stream, counter, lo, hi):
    """Uniform integer on {lo, ..., hi}."""
    span = np.uint64(hi - lo + 1)
    if span == np.uint64(256):
        return lo + draw_u8(seed, stream, counter)
    return lo + np.int64(hash64(seed, stream, counter) % span)


def stream_id(neuron: int, replica: int = 0) -> int:
    """Stream for one neuron of one mesh replica; replicas never share streams."""
    return (int(replica) << 32) | int(neuron)


@dataclass
class RngStream:
    master_seed: int
    stream_id: int
    counter: int = 0

    def __post_init__(self) -> None:
        self.master_seed = int(self.master_seed) & 0xFFFFFFFFFFFFFFFF

    def draw_u8(self) -> int:
        value = int(draw_u8(np.uint64(self.master_seed), np.uint64(self.stream_id), np.uint64(self.counter)))
        self.counter += 1
        return value

    def peek_u8(self, counter: int) -> int:
        return int(draw_u8(np.uint64(self.master_seed), np.uint64(self.stream_id), np.uint64(counter)))
