"""Integer spiking neurons, synapses and networks, with a reference tick stepper.

Tick semantics: a spike emitted at tick ``t`` over a synapse of delay ``d``
is integrated at tick ``t + d``.  Within a tick every neuron first integrates
all arrivals, then applies its leak, stochastic leak and noise, then decides
to fire (``V >= threshold``).  A fired neuron is set to its reset potential;
a TG neuron is zeroed after the fire decision whether or not it fired.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable

import numpy as np

from .rng import draw_int, draw_u8, stream_id


class NeuronKind(str, Enum):
    IF = "IF"
    TG = "TG"
    STOCHASTIC_LEAK = "STOCHASTIC_LEAK"


class StructuralError(RuntimeError):
    """The network or its spike queue references neurons that do not exist."""


@dataclass(frozen=True)
class NeuronParams:
    kind: NeuronKind
    threshold: int = 1
    reset_potential: int = 0
    leak: int = 0
    stochastic_lambda: int | None = None
    noise_injection: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NeuronKind(self.kind))
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if (self.kind is NeuronKind.STOCHASTIC_LEAK) != (self.stochastic_lambda is not None):
            raise ValueError("stochastic_lambda is set iff kind is STOCHASTIC_LEAK")
        if self.stochastic_lambda is not None and not 0 <= self.stochastic_lambda <= 255:
            raise ValueError("stochastic_lambda must lie in [0, 255]")
        if self.noise_injection is not None:
            lo, hi = self.noise_injection
            if lo > hi:
                raise ValueError("noise_injection needs low <= high")

    @property
    def spontaneous(self) -> bool:
        """True if the neuron can change state on a tick with no synaptic input."""
        if self.kind is NeuronKind.STOCHASTIC_LEAK:
            return True
        if self.kind is NeuronKind.IF:
            return self.leak != 0 or self.noise_injection is not None
        top = self.leak + (self.noise_injection[1] if self.noise_injection else 0)
        return top >= self.threshold


def if_neuron(threshold: int = 1, reset: int = 0, leak: int = 0) -> NeuronParams:
    return NeuronParams(NeuronKind.IF, threshold, reset, leak)


def tg_neuron(threshold: int = 1, leak: int = 0, noise: tuple[int, int] | None = None) -> NeuronParams:
    return NeuronParams(NeuronKind.TG, threshold, 0, leak, noise_injection=noise)


def stochastic_neuron(lam: int) -> NeuronParams:
    """TrueNorth-style stochastic-leak neuron: threshold 1, reset 0, fires w.p. (lam+1)/256."""
    return NeuronParams(NeuronKind.STOCHASTIC_LEAK, 1, 0, 0, stochastic_lambda=int(lam))


@dataclass(frozen=True)
class Synapse:
    src: int
    dst: int
    weight: int
    delay: int = 1

    def __post_init__(self) -> None:
        if self.delay < 1:
            raise ValueError("synapse delay must be >= 1")


@dataclass
class Network:
    neurons: list[NeuronParams] = field(default_factory=list)
    synapses: list[Synapse] = field(default_factory=list)
    labels: dict[int, str] = field(default_factory=dict)

    def add(self, params: NeuronParams, label: str) -> int:
        self.neurons.append(params)
        nid = len(self.neurons) - 1
        self.labels[nid] = label
        self.__dict__.pop("arrays", None)
        return nid

    def connect(self, src: int, dst: int, weight: int, delay: int = 1) -> None:
        self.synapses.append(Synapse(int(src), int(dst), int(weight), int(delay)))
        self.__dict__.pop("arrays", None)

    @property
    def size(self) -> int:
        return len(self.neurons)

    def validate(self) -> None:
        n = self.size
        for s in self.synapses:
            if not (0 <= s.src < n and 0 <= s.dst < n):
                raise StructuralError(f"synapse {s} references a missing neuron")
        missing = set(range(n)) - set(self.labels)
        if missing:
            raise StructuralError(f"neurons without labels: {sorted(missing)[:5]}")

    def outgoing(self, nid: int) -> list[Synapse]:
        return [s for s in self.synapses if s.src == nid]

    @cached_property
    def arrays(self) -> "NetworkArrays":
        self.validate()
        return NetworkArrays.from_network(self)


@dataclass(frozen=True)
class NetworkArrays:
    """Flat, engine-ready view of a network (CSR outgoing synapses)."""

    kind: np.ndarray
    threshold: np.ndarray
    reset: np.ndarray
    leak: np.ndarray
    lam: np.ndarray
    noise_lo: np.ndarray
    noise_hi: np.ndarray
    has_noise: np.ndarray
    is_tg: np.ndarray
    active: np.ndarray
    spontaneous: np.ndarray
    out_ptr: np.ndarray
    out_dst: np.ndarray
    out_w: np.ndarray
    out_delay: np.ndarray
    max_delay: int

    @classmethod
    def from_network(cls, net: Network) -> "NetworkArrays":
        n = net.size
        kinds = [p.kind for p in net.neurons]
        noise = [p.noise_injection or (0, 0) for p in net.neurons]
        order = sorted(range(len(net.synapses)), key=lambda k: (net.synapses[k].src, k))
        syn = [net.synapses[k] for k in order]
        counts = np.bincount([s.src for s in syn], minlength=n) if syn else np.zeros(n, np.int64)
        out_ptr = np.zeros(n + 1, np.int64)
        np.cumsum(counts, out=out_ptr[1:])
        return cls(
            kind=np.array([list(NeuronKind).index(k) for k in kinds], np.int64),
            threshold=np.array([p.threshold for p in net.neurons], np.int64),
            reset=np.array([p.reset_potential for p in net.neurons], np.int64),
            leak=np.array([p.leak for p in net.neurons], np.int64),
            lam=np.array([-1 if p.stochastic_lambda is None else p.stochastic_lambda for p in net.neurons], np.int64),
            noise_lo=np.array([lo for lo, _ in noise], np.int64),
            noise_hi=np.array([hi for _, hi in noise], np.int64),
            has_noise=np.array([p.noise_injection is not None for p in net.neurons], np.bool_),
            is_tg=np.array([k is NeuronKind.TG for k in kinds], np.bool_),
            active=np.array([p.spontaneous for p in net.neurons], np.bool_),
            spontaneous=np.array([k is NeuronKind.STOCHASTIC_LEAK for k in kinds], np.bool_),
            out_ptr=out_ptr,
            out_dst=np.array([s.dst for s in syn], np.int64),
            out_w=np.array([s.weight for s in syn], np.int64),
            out_delay=np.array([s.delay for s in syn], np.int64),
            max_delay=max([s.delay for s in syn], default=1),
        )


@dataclass
class RunState:
    """Mutable per-run state: potentials and the delayed-spike queue."""

    potentials: np.ndarray
    pending: dict[int, dict[int, int]] = field(default_factory=dict)
    seed: int = 0
    replica: int = 0

    @classmethod
    def fresh(cls, net: Network, seed: int = 0, replica: int = 0) -> "RunState":
        return cls(np.zeros(net.size, np.int64), {}, int(seed) & 0xFFFFFFFFFFFFFFFF, replica)

    def schedule(self, tick: int, neuron: int, weight: int) -> None:
        slot = self.pending.setdefault(int(tick), {})
        slot[int(neuron)] = slot.get(int(neuron), 0) + int(weight)


def step_network(net: Network, t: int, state: RunState) -> set[int]:
    """Advance one tick; returns the ids of neurons that fire at ``t``.

    Straightforward per-neuron loop; the compiled engine must reproduce it
    bit for bit.
    """
    arrivals = state.pending.pop(int(t), {})
    n = net.size
    for nid in arrivals:
        if not 0 <= nid < n:
            raise StructuralError(f"spike queued for unknown neuron {nid}")
    seed = np.uint64(state.seed)
    V = state.potentials
    fired: set[int] = set()
    for nid, p in enumerate(net.neurons):
        v = int(V[nid]) + arrivals.get(nid, 0) + p.leak
        stream = np.uint64(stream_id(nid, state.replica))
        if p.stochastic_lambda is not None:
            rho = int(draw_u8(seed, stream, np.uint64(t)))
            v += 1 if p.stochastic_lambda >= rho else 0
        if p.noise_injection is not None:
            lo, hi = p.noise_injection
            v += int(draw_int(seed, stream, np.uint64(t), lo, hi))
        if v >= p.threshold:
            fired.add(nid)
            v = p.reset_potential
        if p.kind is NeuronKind.TG:
            v = 0
        V[nid] = v
    for nid in sorted(fired):
        for s in net.outgoing(nid):
            state.schedule(t + s.delay, s.dst, s.weight)
    return fired


def run_reference(net: Network, ticks: int, state: RunState, stimulus: dict[int, Iterable[int]] | None = None) -> list[tuple[int, int]]:
    """Run the reference stepper for ``ticks`` ticks; returns the raster as (tick, neuron).

    ``stimulus`` maps tick -> neurons receiving a +1 external input at that tick.
    """
    raster = []
    for t in range(ticks):
        for nid in (stimulus or {}).get(t, ()):
            state.schedule(t, nid, 1)
        raster.extend((t, nid) for nid in sorted(step_network(net, t, state)))
    return raster


def write_raster_csv(path, raster: Iterable[tuple[int, int]], labels: dict[int, str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "neuron_id", "label"])
        for tick, nid in raster:
            w.writerow([tick, nid, labels.get(nid, "")])
