"""Time and energy scaling of random-walk workloads on conventional and neuromorphic hardware.

Conventional: ``T = C_t W S / P`` and ``E = C_e W S``.  Neuromorphic:
``T = c_t W S / M`` with ``M = min(cores, K)`` mesh nodes working in
parallel, and ``E = c_e W S``.  Default constants are a model built from
published throughput envelopes, not measurements.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .dtmc import DomainError


class Kind(str, Enum):
    VN = "VN"
    NEURAL = "NEURAL"


@dataclass(frozen=True)
class PlatformParams:
    kind: Kind
    cores: int
    time_per_update: float
    energy_per_update: float
    mesh_size: int | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.cores < 1:
            raise DomainError("cores must be >= 1")
        if self.time_per_update <= 0 or self.energy_per_update <= 0:
            raise DomainError("per-update constants must be positive")
        if self.kind is Kind.NEURAL and (self.mesh_size is None or self.mesh_size < 1):
            raise DomainError("a neuromorphic platform needs the mesh size")

    @property
    def parallelism(self) -> int:
        if self.kind is Kind.VN:
            return self.cores
        return min(self.cores, self.mesh_size)

    @property
    def updates_per_joule(self) -> float:
        return 1.0 / self.energy_per_update

    def with_mesh(self, K: int) -> "PlatformParams":
        return PlatformParams(self.kind, self.cores, self.time_per_update, self.energy_per_update, K, self.label)


# published envelopes: walker updates per joule
CPU_UPDATES_PER_JOULE = (2.5e6, 3.0e6)
NMC_UPDATES_PER_JOULE = (6.0e7, 2.5e8)
# time constants are modeling choices (seconds per walker update on one core)
CPU_TIME_PER_UPDATE = 1e-8
NMC_TIME_PER_UPDATE = 1e-6


def default_cpu(cores: int = 1) -> PlatformParams:
    mid = sum(CPU_UPDATES_PER_JOULE) / 2
    return PlatformParams(Kind.VN, cores, CPU_TIME_PER_UPDATE, 1 / mid, label="cpu (model)")


def default_neural(K: int = 441, cores: int = 128, band_end: str = "low") -> PlatformParams:
    upj = NMC_UPDATES_PER_JOULE[0 if band_end == "low" else 1]
    return PlatformParams(Kind.NEURAL, cores, NMC_TIME_PER_UPDATE, 1 / upj, K, f"neuromorphic {band_end} (model)")


def _check_ws(W, S) -> None:
    if W < 1 or S < 1:
        raise DomainError("walkers and steps must be >= 1")


def predict_time(platform: PlatformParams, W: float, S: float) -> float:
    _check_ws(W, S)
    return platform.time_per_update * W * S / platform.parallelism


def predict_energy(platform: PlatformParams, W: float, S: float) -> float:
    _check_ws(W, S)
    return platform.energy_per_update * W * S


def scaling_exponent(platform: PlatformParams, W: float, S: float) -> float:
    """Log-log slope of predicted time in the walker count at ``W``."""
    return math.log2(predict_time(platform, 2 * W, S) / predict_time(platform, W, S))


@dataclass
class AdvantageReport:
    walkers: float
    steps: float
    time_vn: float
    time_neural: float
    energy_vn: float
    energy_neural: float
    time_ratio: float
    energy_ratio: float
    updates_per_joule_vn: float
    updates_per_joule_neural: float
    exponent_vn: float
    exponent_neural: float
    comparable_scaling: bool
    neuromorphic_advantage: bool
    bands: dict = field(default_factory=dict)
    note: str = "model, not measurement"

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    def table(self) -> str:
        rows = [("", "conventional", "neuromorphic"),
                ("time [s]", f"{self.time_vn:.4g}", f"{self.time_neural:.4g}"),
                ("energy [J]", f"{self.energy_vn:.4g}", f"{self.energy_neural:.4g}"),
                ("updates/J", f"{self.updates_per_joule_vn:.4g}", f"{self.updates_per_joule_neural:.4g}"),
                ("time exponent in W", f"{self.exponent_vn:.3f}", f"{self.exponent_neural:.3f}")]
        lines = [f"{a:<20}{b:>16}{c:>16}" for a, b, c in rows]
        lines.append(f"energy ratio (conv/neuro) {self.energy_ratio:.4g}; time ratio (neuro/conv) {self.time_ratio:.4g}")
        lines.append(f"neuromorphic advantage: {self.neuromorphic_advantage} ({self.note})")
        return "\n".join(lines)


def advantage_report(vn: PlatformParams, neural: PlatformParams, W: float, S: float, K: int | None = None,
                     exponent_tol: float = 0.1) -> AdvantageReport:
    """Energy advantage with comparable (same-order) time scaling in the walker count."""
    if K is not None and neural.kind is Kind.NEURAL:
        neural = neural.with_mesh(K)
    tv, tn = predict_time(vn, W, S), predict_time(neural, W, S)
    ev, en = predict_energy(vn, W, S), predict_energy(neural, W, S)
    xv, xn = scaling_exponent(vn, W, S), scaling_exponent(neural, W, S)
    comparable = abs(xv - xn) <= exponent_tol
    energy_ratio = ev / en
    return AdvantageReport(W, S, tv, tn, ev, en, tn / tv, energy_ratio, W * S / ev, W * S / en, xv, xn,
                           comparable, bool(energy_ratio > 1 and comparable),
                           bands={"cpu_updates_per_joule": list(CPU_UPDATES_PER_JOULE),
                                  "nmc_updates_per_joule": list(NMC_UPDATES_PER_JOULE)})


def serial_ticks_per_update(ticks_one: float, ticks_many: float, walkers: int) -> float:
    """Marginal ticks per walker when ``walkers`` walkers share one node (fully serialized)."""
    if walkers < 2:
        raise DomainError("need at least two walkers to measure the serial cost")
    return (ticks_many - ticks_one) / (walkers - 1)


def effective_parallelism(ticks_per_step, walkers: int, ticks_per_update: float, cap: int | None = None) -> np.ndarray:
    """Walker updates completed per ``ticks_per_update`` ticks, per walk step.

    ``ticks_per_update`` is the serialized cost of one walker update; a
    step that moves ``W`` walkers in ``T`` ticks achieved ``W * ticks_per_update / T``.
    """
    t = np.asarray(ticks_per_step, float)
    if np.any(t <= 0):
        raise DomainError("tick counts must be positive")
    m = walkers * ticks_per_update / t
    return m if cap is None else np.minimum(m, cap)


def normalize_ticks(ticks_per_step, target_steps: int, tail_fraction: float = 0.1) -> float:
    """Total ticks extrapolated to ``target_steps`` using the mean of the last steps."""
    t = np.asarray(ticks_per_step, float)
    if not len(t):
        raise DomainError("empty tick series")
    if target_steps <= len(t):
        return float(t[:target_steps].sum())
    tail = t[-max(1, int(len(t) * tail_fraction)):]
    return float(t.sum() + (target_steps - len(t)) * tail.mean())
