"""Compile a transition matrix into a spiking mesh and run walker densities on it.

Every transient state gets a buffer and a counter (each a count / generator /
relay triple) plus a one-layer probabilistic fan-out.  A walk step has two
supervised phases: buffers empty into counters, then counters emit one spike
per walker through the fan-out into the destination buffers.  Walker counts
live in count-neuron potentials as negative distance from threshold.

Count circuit (count C: IF, generator G and relay R: TG, all thresholds 1)::

    sup -> G  +1          G -> G  +1          G -> C  +1
    C   -> G  -1          G -> R  +1 (d=2)    C -> R  -1 (d=1 and d=2)

With ``C = -k`` a pulse makes G fire ``k + 2`` times.  C crosses threshold on
the arrivals of generator spikes ``k + 1`` and ``k + 2``; its first spike stops
the G loop and the delayed C -> R inhibition cancels the last two G spikes, so
R emits exactly ``k`` spikes (none for an empty node) and C ends at 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dtmc import DomainError, TransitionModel
from .ensembles import DensitySeries
from .spiking import Network, Simulator, if_neuron, stochastic_neuron, tg_neuron
from .spiking.engine import walk_steps


class CapacityError(RuntimeError):
    """More walkers than the platform profile can hold in one count neuron."""


class CompileError(RuntimeError):
    """The chain cannot be realized under the platform profile."""


class NormalizationError(ValueError):
    """Exit probabilities do not sum to one."""


class Platform(str, Enum):
    LOIHI = "LOIHI"
    TRUENORTH = "TRUENORTH"


@dataclass(frozen=True)
class PlatformProfile:
    max_fanout: int
    walker_cap: int
    pad_to: int | None = None


PROFILES = {
    Platform.LOIHI: PlatformProfile(max_fanout=64, walker_cap=1000),
    Platform.TRUENORTH: PlatformProfile(max_fanout=4, walker_cap=393215, pad_to=4),
}

LOIHI_NOISE = (-127, 128)
LOIHI_RULE_THRESHOLD = 100
# threshold at which a weight-k spike plus the noise draw fires for exactly k of the 256 draws
LOIHI_CALIBRATED_THRESHOLD = 129


# --- quantization -------------------------------------------------------------

def quantized_level(p) -> int:
    """k = round(256 p), halves rounded up, computed exactly."""
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise DomainError("probability must lie in [0, 1]")
    return math.floor(256 * p + Fraction(1, 2))


def quantize_probability(p) -> int | None:
    """Stochastic-leak parameter realizing ``p`` at 8 bits; None means the synapse is removed."""
    k = quantized_level(p)
    return None if k == 0 else k - 1


def loihi_weight_for_probability(p: float) -> int:
    """Weight onto a threshold-100 neuron with uniform noise on [-127, 128]: round(128 p + 36)."""
    if not 0 <= p <= 1:
        raise DomainError("probability must lie in [0, 1]")
    return int(round(128 * p + 36))


def loihi_fire_probability(weight: int, threshold: int = LOIHI_RULE_THRESHOLD) -> Fraction:
    """Exact chance that ``weight + noise >= threshold`` over the 256 equally likely noise values."""
    lo, hi = LOIHI_NOISE
    hits = sum(1 for z in range(lo, hi + 1) if weight + z >= threshold)
    return Fraction(hits, hi - lo + 1)


# --- probability trees --------------------------------------------------------

@dataclass
class ProbabilityTree:
    """Balanced binary tree in heap order: internal nodes 1..N-1, leaf i is node N + i.

    The left child is the positive branch; ``cond[n]`` is the probability of
    taking it, i.e. left-subtree mass over subtree mass (0 for empty subtrees).
    """

    nu: tuple[Fraction, ...]
    cond: dict[int, Fraction]

    @property
    def n_leaves(self) -> int:
        return len(self.nu)

    @property
    def outputs(self) -> list[tuple[int, Fraction]]:
        return list(enumerate(self.nu))

    @property
    def internal_nodes(self) -> list[tuple[int, Fraction, int, int]]:
        return [(n, p, 2 * n, 2 * n + 1) for n, p in sorted(self.cond.items())]

    def leaf_range(self, node: int) -> range:
        N = self.n_leaves
        lo = hi = node
        while lo < N:
            lo, hi = 2 * lo, 2 * hi + 1
        return range(lo - N, hi - N + 1)

    def mass(self, node: int) -> Fraction:
        return sum((self.nu[i] for i in self.leaf_range(node)), Fraction(0))

    def path(self, leaf: int) -> list[tuple[int, bool]]:
        """(internal node, took positive branch) from the root down to ``leaf``."""
        out = []
        node = self.n_leaves + leaf
        while node > 1:
            parent = node // 2
            out.append((parent, node == 2 * parent))
            node = parent
        return out[::-1]

    def is_live(self, node: int) -> bool:
        """Internal nodes that need a neuron: a genuinely random choice."""
        return 0 < self.cond[node] < 1

    def leaf_probability(self, leaf: int, cond: dict[int, Fraction] | None = None) -> Fraction:
        cond = self.cond if cond is None else cond
        p = Fraction(1)
        for node, positive in self.path(leaf):
            p *= cond[node] if positive else 1 - cond[node]
        return p

    def quantized_cond(self) -> dict[int, Fraction]:
        return {n: Fraction(quantized_level(p), 256) for n, p in self.cond.items()}

    def quantized_distribution(self) -> tuple[Fraction, ...]:
        q = self.quantized_cond()
        return tuple(self.leaf_probability(i, q) for i in range(self.n_leaves))


def build_probability_tree(nu: Sequence, pad_to: int | None = None, eps: float = 2.0**-9) -> ProbabilityTree:
    """Tree of conditional branch probabilities for exit distribution ``nu``.

    ``nu`` is padded with zeros to a power of two (at least ``pad_to``) and
    rescaled to sum to exactly 1 in rational arithmetic.
    """
    vals = [Fraction(v) for v in nu]
    if any(v < 0 for v in vals):
        raise DomainError("exit probabilities must be nonnegative")
    total = sum(vals, Fraction(0))
    if abs(total - 1) > Fraction(eps):
        raise NormalizationError(f"exit probabilities sum to {float(total)}")
    N = max(1, pad_to or 1)
    while N < len(vals):
        N *= 2
    vals = [v / total for v in vals] + [Fraction(0)] * (N - len(vals))
    tree = ProbabilityTree(tuple(vals), {})
    for node in range(1, N):
        m = tree.mass(node)
        tree.cond[node] = tree.mass(2 * node) / m if m else Fraction(0)
    return tree


@dataclass
class LayerFragment:
    prob: dict[int, int]
    outputs: dict[int, int]
    aux: list[int] = field(default_factory=list)


def _probability_neuron(net: Network, platform: Platform, p: Fraction, generator: int, label: str) -> tuple[int, list[int]]:
    """Neuron that fires one tick after a generator spike with probability round(256 p)/256."""
    k = quantized_level(p)
    if Platform(platform) is Platform.LOIHI:
        nid = net.add(tg_neuron(LOIHI_CALIBRATED_THRESHOLD, noise=LOIHI_NOISE), label)
        if k:
            net.connect(generator, nid, k, 1)
        return nid, []
    # TrueNorth: free-running stochastic-leak neuron AND the generator spike
    nid = net.add(tg_neuron(1, leak=-1), label)
    net.connect(generator, nid, 1, 1)
    if k == 0:
        return nid, []
    src = net.add(stochastic_neuron(k - 1), label + ".leak")
    net.connect(src, nid, 1, 1)
    return nid, [src]


def compress_tree_to_layer(tree: ProbabilityTree, generator: int, net: Network | None = None,
                           platform: Platform = Platform.LOIHI, tag: str = "") -> tuple[Network, LayerFragment]:
    """One layer of probability neurons feeding one output neuron per reachable leaf.

    A leaf with ``c`` positive edges on its path has threshold ``max(c, 1)``,
    weight +1 from each positive-edge neuron and ``-max(c, 1)`` from each
    negative-edge neuron, so it fires iff all of its positive neurons fire and
    none of its negative ones do.  Leaves with no positive edge also get the
    generator spike, delayed to arrive with the layer's outputs.  Zero-mass
    leaves and deterministic internal nodes (p in {0, 1}) get no neurons.
    """
    net = Network() if net is None else net
    frag = LayerFragment({}, {})
    for node in sorted(tree.cond):
        if tree.is_live(node):
            nid, aux = _probability_neuron(net, platform, tree.cond[node], generator, f"{tag}prob{node}")
            frag.prob[node] = nid
            frag.aux.extend(aux)
    for leaf, v in tree.outputs:
        if v == 0:
            continue
        path = [(n, pos) for n, pos in tree.path(leaf) if n in frag.prob]
        c = sum(pos for _, pos in path)
        out = net.add(tg_neuron(max(c, 1)), f"{tag}out{leaf}")
        for n, pos in path:
            net.connect(frag.prob[n], out, 1 if pos else -max(c, 1), 1)
        if c == 0:
            net.connect(generator, out, 1, 2)
        frag.outputs[leaf] = out
    return net, frag


@dataclass
class TrueNorthNode:
    """Three-neuron probability stage for four exits: o0 = r0 r1, o1 = r0 !r1, o2 = !r0 r2, o3 = !r0 !r2."""

    nu: tuple[Fraction, ...]
    r: tuple[Fraction, Fraction, Fraction]
    tree: ProbabilityTree

    @property
    def leak_params(self) -> tuple[int | None, ...]:
        return tuple(quantize_probability(p) for p in self.r)

    def forward(self, r=None) -> tuple[Fraction, ...]:
        r0, r1, r2 = self.r if r is None else r
        return (r0 * r1, r0 * (1 - r1), (1 - r0) * r2, (1 - r0) * (1 - r2))

    def attach(self, net: Network, generator: int, tag: str = "") -> LayerFragment:
        return compress_tree_to_layer(self.tree, generator, net, Platform.TRUENORTH, tag)[1]


def build_truenorth_node(nu: Sequence) -> TrueNorthNode:
    if len(nu) > 4:
        raise CompileError("a TrueNorth node has at most 4 exits")
    tree = build_probability_tree(nu, pad_to=4, eps=0.0)
    return TrueNorthNode(tree.nu, (tree.cond[1], tree.cond[2], tree.cond[3]), tree)


# --- count circuits -----------------------------------------------------------

def add_count_circuit(net: Network, supervisor: int | None, tag: str) -> tuple[int, int, int]:
    c = net.add(if_neuron(1, 0), f"{tag}.count")
    g = net.add(tg_neuron(1), f"{tag}.generator")
    r = net.add(tg_neuron(1), f"{tag}.relay")
    net.connect(g, g, 1, 1)
    net.connect(g, c, 1, 1)
    net.connect(c, g, -1, 1)
    net.connect(g, r, 1, 2)
    net.connect(c, r, -1, 1)
    net.connect(c, r, -1, 2)
    if supervisor is not None:
        net.connect(supervisor, g, 1, 1)
    return c, g, r


def inject_initial_count(sim: Simulator, neuron: int, count: int, platform: Platform = Platform.LOIHI) -> Simulator:
    """Load ``count`` walkers into a count neuron (potential ``-count``)."""
    if count < 0:
        raise DomainError("walker count must be >= 0")
    cap = PROFILES[Platform(platform)].walker_cap
    if count > cap:
        raise CapacityError(f"{count} walkers exceed the {Platform(platform).value} cap of {cap}")
    sim.set_potential(neuron, -int(count))
    return sim


# --- meshes -------------------------------------------------------------------

@dataclass
class NodeCircuit:
    state: int
    buffer: tuple[int, int, int] | tuple[int]
    counter: tuple[int, int, int] | None = None
    layer: LayerFragment | None = None
    targets: dict[int, int] = field(default_factory=dict)
    is_sink: bool = False

    @property
    def neurons(self) -> list[int]:
        ids = list(self.buffer)
        if self.counter is not None:
            ids += list(self.counter) + list(self.layer.prob.values()) + self.layer.aux + list(self.layer.outputs.values())
        return ids


@dataclass
class CompiledMesh:
    network: Network
    platform: Platform
    nodes: list[NodeCircuit]
    supervisor: tuple[int, int]
    chain: TransitionModel
    realized: TransitionModel

    @property
    def readout(self) -> np.ndarray:
        return np.array([nd.buffer[0] for nd in self.nodes], np.int64)

    @property
    def transient(self) -> np.ndarray:
        return np.array([not nd.is_sink for nd in self.nodes], bool)

    @property
    def walker_cap(self) -> int:
        return PROFILES[self.platform].walker_cap

    def summary(self) -> dict:
        per_node = []
        syn_count = np.bincount([s.src for s in self.network.synapses], minlength=self.network.size)
        for nd in self.nodes:
            ids = nd.neurons
            per_node.append({"state": nd.state, "neurons": len(ids), "synapses": int(syn_count[ids].sum()),
                             "exits": len(nd.targets), "sink": nd.is_sink})
        return {"platform": self.platform.value, "states": len(self.nodes), "neurons": self.network.size,
                "synapses": len(self.network.synapses), "supervisor": list(self.supervisor), "nodes": per_node}

    def save_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=1)


def _row(model: TransitionModel, i: int) -> tuple[np.ndarray, np.ndarray]:
    m = model.matrix(0)
    a, b = m.indptr[i], m.indptr[i + 1]
    keep = m.data[a:b] > 0
    return m.indices[a:b][keep], m.data[a:b][keep]


def realized_chain(chain: TransitionModel, platform: Platform = Platform.LOIHI) -> TransitionModel:
    """The chain the compiled mesh actually runs: 8-bit conditionals multiplied out exactly."""
    if not chain.is_static:
        raise CompileError("collapse time-indexed chains before compiling")
    pad = PROFILES[Platform(platform)].pad_to
    n = chain.n_states
    rows, cols, vals = [], [], []
    for i in range(n):
        c, p = _row(chain, i)
        if len(c) == 1:
            q = (Fraction(1),)
        else:
            q = build_probability_tree(p, pad_to=pad, eps=1e-9).quantized_distribution()[: len(c)]
        for cc, qq in zip(c, q):
            if qq:
                rows.append(i)
                cols.append(int(cc))
                vals.append(float(qq))
    mat = sp.csr_array((vals, (rows, cols)), shape=(n, n))
    return TransitionModel([mat], chain.dt, chain.space, chain.absorbing_id, chain.names)


def compile_mesh(chain: TransitionModel, platform: Platform = Platform.LOIHI) -> CompiledMesh:
    """One node circuit per state; rows with ``p_ii = 1`` become bare count neurons (sinks)."""
    platform = Platform(platform)
    prof = PROFILES[platform]
    if not chain.is_static:
        raise CompileError("collapse time-indexed chains before compiling")
    n = chain.n_states
    rows = [_row(chain, i) for i in range(n)]
    for i, (c, _) in enumerate(rows):
        if len(c) > prof.max_fanout:
            raise CompileError(f"state {i} has {len(c)} exits; {platform.value} allows {prof.max_fanout}")
    net = Network()
    sup_a = net.add(tg_neuron(1), "supervisor.buffers")
    sup_b = net.add(tg_neuron(1), "supervisor.counters")
    nodes = []
    for i, (c, p) in enumerate(rows):
        sink = len(c) == 1 and c[0] == i
        if sink:
            nodes.append(NodeCircuit(i, (net.add(if_neuron(1, 0), f"s{i}.sink.count"),), is_sink=True))
        else:
            nodes.append(NodeCircuit(i, add_count_circuit(net, sup_a, f"s{i}.buffer")))
    for i, (c, p) in enumerate(rows):
        nd = nodes[i]
        if nd.is_sink:
            continue
        nd.counter = add_count_circuit(net, sup_b, f"s{i}.counter")
        net.connect(nd.buffer[2], nd.counter[0], -1, 1)
        tree = build_probability_tree(p, pad_to=prof.pad_to, eps=1e-9) if len(c) > 1 else build_probability_tree([1])
        _, nd.layer = compress_tree_to_layer(tree, nd.counter[2], net, platform, f"s{i}.")
        for leaf, out in nd.layer.outputs.items():
            dest = int(c[leaf])
            net.connect(out, nodes[dest].buffer[0], -1, 1)
            nd.targets[dest] = out
    net.validate()
    return CompiledMesh(net, platform, nodes, (sup_a, sup_b), chain, realized_chain(chain, platform))


def _as_counts(initial, n: int) -> np.ndarray:
    counts = np.zeros(n, np.int64)
    items = initial.items() if isinstance(initial, dict) else enumerate(initial)
    for s, k in items:
        if k < 0:
            raise DomainError("walker counts must be >= 0")
        counts[int(s)] += int(k)
    return counts


def simulate_density(mesh: CompiledMesh, initial, steps: int | None, seed: int, replica: int = 0,
                     max_steps: int = 100_000) -> DensitySeries:
    """Lock-step walk on the mesh; density snapshot after every walk step.

    ``steps=None`` runs until every transient buffer is empty (all walkers
    absorbed), up to ``max_steps``.  ``DensitySeries.ticks`` holds the
    ticks each walk step took.
    """
    n = len(mesh.nodes)
    counts = _as_counts(initial, n)
    sim = Simulator(mesh.network, seed=seed, replica=replica)
    for s in np.nonzero(counts)[0]:
        inject_initial_count(sim, mesh.nodes[s].buffer[0], int(counts[s]), mesh.platform)
    until_empty = steps is None
    dens, ticks = walk_steps(sim, *mesh.supervisor, mesh.readout, mesh.transient,
                             max_steps if until_empty else int(steps), stop_when_empty=until_empty)
    return DensitySeries(mesh.chain.dt, dens, ticks, {"platform": mesh.platform.value, "seed": int(seed),
                                                      "replica": int(replica)})


def simulate_split(mesh: CompiledMesh, initial, steps: int | None, seed: int, replica_base: int = 0) -> DensitySeries:
    """Run counts above the walker cap as independent mesh replicas and add their densities."""
    n = len(mesh.nodes)
    counts = _as_counts(initial, n)
    cap = mesh.walker_cap
    total = None
    r = 0
    while counts.any():
        part = np.minimum(counts, cap)
        counts = counts - part
        d = simulate_density(mesh, part, steps, seed, replica=replica_base + r)
        total = d if total is None else total + d
        r += 1
    if total is None:
        total = simulate_density(mesh, np.zeros(n, np.int64), steps if steps is not None else 0, seed, replica_base)
    total.meta = {"platform": mesh.platform.value, "seed": int(seed), "replicas": r}
    return total
