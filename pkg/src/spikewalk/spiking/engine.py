"""Event-driven compiled engine for :mod:`spikewalk.spiking.core` networks.

Only neurons that receive input on a tick, or that can change state on their
own (``NetworkArrays.active``), are evaluated.  Because every random draw is
keyed by (seed, neuron stream, tick), skipping idle neurons never perturbs a
draw and results match :func:`~spikewalk.spiking.core.step_network` exactly.

The tick loop lives in a single kernel: numba reference-counts every array
handed to a helper call, which costs more than the tick itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import Network, NetworkArrays, StructuralError
from .rng import draw_int, draw_u8


@dataclass
class EngineState:
    V: np.ndarray
    acc: np.ndarray
    stamp: np.ndarray
    touched: np.ndarray
    ntouched: np.ndarray
    pending_det: np.ndarray
    evaluated: np.ndarray
    active_ids: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, arrs: NetworkArrays) -> "EngineState":
        n = len(arrs.kind)
        slots = arrs.max_delay + 1
        return cls(
            V=np.zeros(n, np.int64),
            acc=np.zeros((slots, n), np.int64),
            stamp=np.full((slots, n), -1, np.int64),
            touched=np.zeros((slots, n), np.int64),
            ntouched=np.zeros(slots, np.int64),
            pending_det=np.zeros(slots, np.int64),
            evaluated=np.full(n, -1, np.int64),
            active_ids=np.nonzero(arrs.active)[0].astype(np.int64),
        )


@nb.njit(cache=True)
def _update(v, leak, lam, noise_lo, noise_hi, has_noise, is_tg, threshold, reset, seed, stream, t):
    """One neuron's integrate/fire decision on scalars; returns (fired, new potential)."""
    v += leak
    if lam >= 0:
        if lam >= draw_u8(seed, stream, np.uint64(t)):
            v += 1
    if has_noise:
        v += draw_int(seed, stream, np.uint64(t), noise_lo, noise_hi)
    fire = v >= threshold
    if fire:
        v = reset
    if is_tg:
        v = 0
    return fire, v


@nb.njit(cache=True)
def _engine(t, seed, sbase, threshold, reset, leak, lam, noise_lo, noise_hi, has_noise, is_tg, spontaneous,
            out_ptr, out_dst, out_w, out_delay, V, acc, stamp, touched, ntouched, pending_det, evaluated,
            active_ids, nticks, stim_tick, stim_neuron, raster, sup_a, sup_b, readout, transient, steps,
            stop_when_empty, max_phase_ticks, dens, step_ticks):
    """Run the network from tick ``t``.

    Plain mode (``steps < 0``): ``nticks`` ticks with external +1 stimuli,
    spikes recorded in ``raster``.  Walk mode: per walk step pulse ``sup_a``,
    tick until no deterministic spike is in flight, then the same for
    ``sup_b``; record ``-V[readout]`` into ``dens``.

    Returns (final tick, raster rows or completed steps); the count is -1
    when the raster overflows or a phase fails to settle.
    """
    slots = acc.shape[0]
    n = V.shape[0]
    fired = np.empty(n, np.int64)
    walk = steps >= 0
    t_end = t + nticks
    nr = 0
    si = 0
    step = 0
    phase = 0
    phase_start = t
    step_start = t
    n_nodes = readout.shape[0]
    if walk:
        for j in range(n_nodes):
            dens[0, j] = -V[readout[j]]
    while True:
        # external input for this tick: stimuli or a supervisor pulse
        pulse = -1
        if walk:
            if phase == 0:
                if step >= steps:
                    break
                if stop_when_empty:
                    live = 0
                    for j in range(n_nodes):
                        if transient[j]:
                            live += dens[step, j]
                    if live == 0:
                        break
                pulse = sup_a
                phase = 1
                phase_start = t
                step_start = t
            elif phase == 3:
                pulse = sup_b
                phase = 2
                phase_start = t
        else:
            if t >= t_end:
                break
        s = t % slots
        while True:
            dst = -1
            if pulse >= 0:
                dst = pulse
                pulse = -1
            elif not walk and si < stim_tick.shape[0] and stim_tick[si] == t:
                dst = stim_neuron[si]
                si += 1
            if dst < 0:
                break
            acc[s, dst] += 1
            if stamp[s, dst] != t:
                stamp[s, dst] = t
                touched[s, ntouched[s]] = dst
                ntouched[s] += 1
            pending_det[s] += 1

        # integrate and fire
        nf = 0
        for k in range(ntouched[s]):
            i = touched[s, k]
            a = acc[s, i]
            acc[s, i] = 0
            evaluated[i] = t
            f, v = _update(V[i] + a, leak[i], lam[i], noise_lo[i], noise_hi[i], has_noise[i], is_tg[i],
                           threshold[i], reset[i], seed, sbase | np.uint64(i), t)
            V[i] = v
            if f:
                fired[nf] = i
                nf += 1
        ntouched[s] = 0
        pending_det[s] = 0
        for k in range(active_ids.shape[0]):
            i = active_ids[k]
            if evaluated[i] == t:
                continue
            evaluated[i] = t
            f, v = _update(V[i], leak[i], lam[i], noise_lo[i], noise_hi[i], has_noise[i], is_tg[i],
                           threshold[i], reset[i], seed, sbase | np.uint64(i), t)
            V[i] = v
            if f:
                fired[nf] = i
                nf += 1

        # deliver
        ndet = 0
        for k in range(nf):
            i = fired[k]
            det = not spontaneous[i]
            if det:
                ndet += 1
            for e in range(out_ptr[i], out_ptr[i + 1]):
                ta = t + out_delay[e]
                sd = ta % slots
                d = out_dst[e]
                acc[sd, d] += out_w[e]
                if stamp[sd, d] != ta:
                    stamp[sd, d] = ta
                    touched[sd, ntouched[sd]] = d
                    ntouched[sd] += 1
                if det:
                    pending_det[sd] += 1
            if not walk:
                if nr >= raster.shape[0]:
                    return t + 1, -1
                raster[nr, 0] = t
                raster[nr, 1] = i
                nr += 1
        t += 1

        if walk:
            settled = ndet == 0
            if settled:
                for k in range(slots):
                    if pending_det[k] != 0:
                        settled = False
                        break
            if settled:
                if phase == 1:
                    phase = 3
                else:
                    step_ticks[step] = t - step_start
                    for j in range(n_nodes):
                        dens[step + 1, j] = -V[readout[j]]
                    step += 1
                    phase = 0
            elif t - phase_start > max_phase_ticks:
                return t, -1
    return t, (step if walk else nr)


def _arr_args(a: NetworkArrays):
    return (a.threshold, a.reset, a.leak, a.lam, a.noise_lo, a.noise_hi, a.has_noise, a.is_tg,
            a.spontaneous, a.out_ptr, a.out_dst, a.out_w, a.out_delay)


def _state_args(st: EngineState):
    return (st.V, st.acc, st.stamp, st.touched, st.ntouched, st.pending_det, st.evaluated, st.active_ids)


_NO_INT = np.zeros(0, np.int64)
_NO_BOOL = np.zeros(0, np.bool_)
_NO_2D = np.zeros((0, 0), np.int64)


class Simulator:
    """Tick-level runner over a frozen network.

    >>> sim = Simulator(net, seed=7)
    >>> raster = sim.run(10, stimulus={0: [src]})
    """

    def __init__(self, net: Network, seed: int = 0, replica: int = 0):
        self.net = net
        self.arrays = net.arrays
        self.seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.sbase = np.uint64(int(replica) << 32)
        self.state = EngineState.fresh(self.arrays)

    @property
    def potentials(self) -> np.ndarray:
        return self.state.V

    def set_potential(self, nid: int, value: int) -> None:
        if not 0 <= nid < self.net.size:
            raise StructuralError(f"unknown neuron {nid}")
        self.state.V[nid] = value
        st = self.state
        slot = st.t % st.acc.shape[0]
        if st.stamp[slot, nid] != st.t:
            st.stamp[slot, nid] = st.t
            st.touched[slot, st.ntouched[slot]] = nid
            st.ntouched[slot] += 1

    def _call(self, nticks, stim_t, stim_n, raster, walk_args):
        return _engine(self.state.t, self.seed, self.sbase, *_arr_args(self.arrays), *_state_args(self.state),
                       nticks, stim_t, stim_n, raster, *walk_args)

    def run(self, ticks: int, stimulus: dict[int, list[int]] | None = None,
            raster_cap: int = 1_000_000) -> list[tuple[int, int]]:
        """Run ``ticks`` ticks from the current time. Stimulus ticks are relative."""
        pairs = sorted((self.state.t + int(t), int(n)) for t, ns in (stimulus or {}).items() for n in ns)
        for _, nid in pairs:
            if not 0 <= nid < self.net.size:
                raise StructuralError(f"stimulus for unknown neuron {nid}")
        stim_t = np.array([p[0] for p in pairs], np.int64)
        stim_n = np.array([p[1] for p in pairs], np.int64)
        raster = np.empty((int(raster_cap), 2), np.int64)
        walk_args = (-1, -1, _NO_INT, _NO_BOOL, -1, False, 0, _NO_2D, _NO_INT)
        t, nr = self._call(int(ticks), stim_t, stim_n, raster, walk_args)
        if nr < 0:
            raise RuntimeError("raster capacity exceeded")
        self.state.t = int(t)
        raster = raster[:nr]
        raster = raster[np.lexsort((raster[:, 1], raster[:, 0]))]
        return [(int(a), int(b)) for a, b in raster]


def walk_steps(sim: Simulator, sup_a: int, sup_b: int, readout: np.ndarray, transient: np.ndarray,
               steps: int, stop_when_empty: bool = False, max_phase_ticks: int = 50_000_000):
    """Two-phase lock-step walk driver; returns (density[step, node], ticks[step])."""
    readout = np.ascontiguousarray(readout, np.int64)
    dens = np.zeros((int(steps) + 1, len(readout)), np.int64)
    ticks = np.zeros(int(steps), np.int64)
    walk_args = (int(sup_a), int(sup_b), readout, np.ascontiguousarray(transient, np.bool_), int(steps),
                 bool(stop_when_empty), int(max_phase_ticks), dens, ticks)
    t, done = sim._call(0, _NO_INT, _NO_INT, _NO_2D, walk_args)
    if done < 0:
        raise RuntimeError("a walk phase did not settle within max_phase_ticks")
    sim.state.t = int(t)
    return dens[: done + 1], ticks[:done]
