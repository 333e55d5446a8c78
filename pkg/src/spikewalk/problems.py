"""Canned problems: chain, initial data, killing/source terms and oracles."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import special

from .dtmc import (DomainError, DtInfeasibleError, SdeCoefficients, StateSpace, TransitionModel, assemble_chain, check_dt,
                   make_row_exact, poisson_window_probs)
from .geometry import (OFF_NEIGHBOR_LIMIT, SurfaceMesh, barbell_transition_matrix, build_barbell_mesh, build_geodesic_sphere,
                       build_torus_mesh, sphere_transition_matrix)


@dataclass
class ProblemSpec:
    """A chain plus the terms the estimators need.

    Initial-value problems use ``g`` and ``c_const``; boundary-value
    problems (``stopped``) accumulate ``f`` until a walker enters an
    ``outside`` state.  ``oracle(t)`` returns the exact solution per state.
    """

    name: str
    chain: TransitionModel
    dt: float
    g: np.ndarray
    c_const: float = 0.0
    f: np.ndarray | None = None
    oracle: Callable[[float], np.ndarray] | None = None
    positions: np.ndarray | None = None
    coefficients: SdeCoefficients | None = None
    stopped: bool = False
    outside: np.ndarray | None = None
    default_walkers: int = 1000
    default_steps: int | None = 100
    starts: np.ndarray | None = None
    weights: np.ndarray | None = None
    mesh: SurfaceMesh | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.g = np.asarray(self.g, float)
        if self.g.shape != (self.chain.n_states,):
            raise DomainError("g must be defined on every state")
        if self.starts is None:
            transient = np.ones(self.chain.n_states, bool) if self.outside is None else ~self.outside
            self.starts = np.nonzero(transient)[0]

    @property
    def n_states(self) -> int:
        return self.chain.n_states


# --- Boltzmann angular flux --------------------------------------------------

BOLTZMANN_ABSORPTION = 0.5
BOLTZMANN_SCATTERING = 5.0
BOLTZMANN_DT = 0.01


def boltzmann_oracle(t, absorption: float = BOLTZMANN_ABSORPTION, scattering: float = BOLTZMANN_SCATTERING) -> np.ndarray:
    """Exact flux for g = 3 (direction -1), 5 (direction +1); columns ordered (-1, +1)."""
    t = np.asarray(t, float)
    even = 4 * np.exp(-absorption * t)
    odd = np.exp(-(absorption + scattering) * t)
    return np.stack([even - odd, even + odd], axis=-1)


def _enforce(ok: bool, constraint: str, detail: str, force: bool) -> None:
    if not ok and not force:
        raise DtInfeasibleError(constraint, detail)


def boltzmann_problem(dt: float = BOLTZMANN_DT, force: bool = False) -> ProblemSpec:
    """Two directions, scattering flips to a uniformly chosen direction, absorption as killing."""
    coeffs = SdeCoefficients(jump_rate=lambda t, x: BOLTZMANN_SCATTERING, jump=lambda t, x, q: q - x,
                             marks=[(-1.0, 0.5), (1.0, 0.5)], killing=lambda t, x: -BOLTZMANN_ABSORPTION)
    space = StateSpace.fully_connected([-1.0, 1.0], 2.0)
    chk = check_dt(coeffs, space, dt)
    _enforce(chk.ok, chk.binding or "", f"dt={dt}: multi-jump {chk.max_multi_jump:.3g}, "
             f"off-neighbor {chk.max_off_neighbor:.3g}", force)
    chain = assemble_chain(coeffs, space, dt)
    chain.names = ["omega=-1", "omega=+1"]
    return ProblemSpec("boltzmann", chain, dt, np.array([3.0, 5.0]), -BOLTZMANN_ABSORPTION,
                       oracle=boltzmann_oracle, positions=np.array([-1.0, 1.0]), coefficients=coeffs,
                       default_walkers=10_000, default_steps=200, meta={"dt_check": chk.__dict__})


# --- angular fluence ---------------------------------------------------------

FLUENCE_SPEED = 200.0
FLUENCE_SCATTERING = 0.15
FLUENCE_BINS = 30
FLUENCE_DT = 0.01
FLUENCE_SOURCE = 0.015


def fluence_problem() -> ProblemSpec:
    """Slab fluence with uniform rescattering and absorbing walls.

    State ``i * 30 + j`` is position bin ``i`` and direction bin ``j``
    (both midpoints of 30 bins of [-1, 1]); state 900 is absorbing.  One
    step moves the position by ``-v * omega_j * dt``, an odd number of
    position bins, then rescatters with the single-event probability.
    """
    n = FLUENCE_BINS
    d_omega = 2.0 / n
    dx = 0.5 * FLUENCE_SPEED * d_omega * FLUENCE_DT
    lam = FLUENCE_SPEED * FLUENCE_SCATTERING * FLUENCE_DT
    _, q1, q_multi = poisson_window_probs(lam)
    absorbing = n * n
    rows, cols, vals = [], [], []
    for i in range(n):
        for j in range(n):
            s = i * n + j
            # 0-based: x_i = (2i - 29)/30 and v omega_j dt = (2j - 29)/15
            dest = i + n - 1 - 2 * j
            if not 0 <= dest < n:
                rows.append(s)
                cols.append(absorbing)
                vals.append(1.0)
                continue
            p = np.full(n, q1 / n)
            p[j] += 1 - q1
            rows += [s] * n
            cols += [dest * n + k for k in range(n)]
            vals += p.tolist()
    rows.append(absorbing)
    cols.append(absorbing)
    vals.append(1.0)
    mat = sp.csr_array((vals, (rows, cols)), shape=(n * n + 1, n * n + 1))
    mat = TransitionModel([mat], FLUENCE_DT, absorbing_id=absorbing).map_rows(lambda cols, p: make_row_exact(p))
    mat.absorbing_id = absorbing
    mat.validate()
    k = np.arange(1, n + 1)
    x = (2 * k - (n + 1)) / n
    omega = -1 + d_omega / 2 + (k - 1) * d_omega
    inside = np.abs(2 * k - (n + 1)) < n // 2  # |x| < 1/2 exactly, on integers
    f = np.zeros(n * n + 1)
    f[:-1] = np.repeat(np.where(inside, FLUENCE_SPEED * FLUENCE_SOURCE, 0.0), n)
    positions = np.zeros((n * n + 1, 2))
    positions[:-1, 0] = np.repeat(x, n)
    positions[:-1, 1] = np.tile(omega, n)
    positions[-1] = np.nan
    outside = np.zeros(n * n + 1, bool)
    outside[absorbing] = True
    return ProblemSpec("fluence", mat, FLUENCE_DT, np.zeros(n * n + 1), 0.0, f=f, positions=positions,
                       stopped=True, outside=outside, default_walkers=6250, default_steps=None,
                       meta={"dx": dx, "d_omega": d_omega, "q1": q1, "q_multi": q_multi})


# --- sphere heat ---------------------------------------------------------------

SPHERE_ALPHA = 1 / 42
SPHERE_DT = 0.1


def eval_real_spherical_harmonic(l: int, m: int, theta, phi) -> np.ndarray:
    """Orthonormal real harmonic of degree ``l``, order ``m >= 0``, without the Condon-Shortley phase.

    ``theta`` is the polar angle in [0, pi], ``phi`` the azimuth.
    """
    if not (isinstance(l, (int, np.integer)) and isinstance(m, (int, np.integer))) or not 0 <= m <= l:
        raise DomainError("need integers 0 <= m <= l")
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    if np.any((theta < 0) | (theta > np.pi)):
        raise DomainError("theta must lie in [0, pi]")
    y = special.sph_harm_y(l, m, theta, phi)
    if m == 0:
        return np.real(y)
    return math.sqrt(2) * (-1) ** m * np.real(y)


def sphere_initial(theta, phi) -> np.ndarray:
    return eval_real_spherical_harmonic(6, 0, theta, phi) + math.sqrt(14 / 11) * eval_real_spherical_harmonic(6, 5, theta, phi)


def _flat_areas(mesh: SurfaceMesh) -> np.ndarray:
    out = []
    for e in mesh.elements:
        P = mesh.vertices[list(e)]
        if len(e) == 3:
            out.append(np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0])) / 2)
        else:
            out.append(np.linalg.norm(P[1] - P[0]) * np.linalg.norm(P[3] - P[0]))
    return np.array(out)


def _off_neighbor_guard(build, force: bool):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        chain = build()
    off = chain.off_neighbor_max
    _enforce(off < OFF_NEIGHBOR_LIMIT, "off_neighbor", f"off-neighbor mass {off:.3g}", force)
    return chain


def sphere_heat_problem(alpha: float = SPHERE_ALPHA, dt: float = SPHERE_DT, force: bool = False) -> ProblemSpec:
    """Heat flow on the unit sphere from an l = 6 harmonic; exact decay ``exp(-42 alpha t)``."""
    mesh = build_geodesic_sphere()
    chain = _off_neighbor_guard(lambda: sphere_transition_matrix(mesh, alpha, dt), force)
    x, y, z = mesh.states.T
    theta = np.arccos(np.clip(z, -1, 1))
    phi = np.arctan2(y, x)
    g = sphere_initial(theta, phi)
    rate = 42 * alpha

    def oracle(t):
        return np.exp(-rate * np.asarray(t, float))[..., None] * g

    return ProblemSpec("sphere", chain, dt, g, 0.0, oracle=oracle, positions=mesh.states, default_walkers=3000,
                       default_steps=30, weights=_flat_areas(mesh), mesh=mesh,
                       meta={"alpha": alpha, "rate": rate, "off_neighbor_max": chain.off_neighbor_max})


# --- barbell -----------------------------------------------------------------

BARBELL_ALPHA = 0.5
BARBELL_COOLING = 0.05
BARBELL_DT = 0.005


def barbell_initial(y) -> np.ndarray:
    """Five-level step profile along the barbell axis."""
    y = np.asarray(y, float)
    return np.select([y >= 2.5, y >= 1, y >= 0, y >= -1], [20.0, 7.0, 5.0, 3.0], 1.0)


def barbell_problem(rings: int | None = None, dt: float = BARBELL_DT, force: bool = False) -> ProblemSpec:
    """Heat flow with uniform cooling on two spheres joined by a hexagonal prism (axis y)."""
    mesh = build_barbell_mesh() if rings is None else build_barbell_mesh(rings)
    chain = _off_neighbor_guard(lambda: barbell_transition_matrix(mesh, BARBELL_ALPHA, dt), force)
    g = barbell_initial(mesh.states[:, 1])
    n_tri = mesh.meta["triangles_per_sphere"]
    groups = {"hot_sphere": np.arange(n_tri), "cold_sphere": np.arange(n_tri, 2 * n_tri),
              "prism": np.arange(2 * n_tri, mesh.size)}
    return ProblemSpec("barbell", chain, dt, g, -BARBELL_COOLING, positions=mesh.states,
                       default_walkers=1000, default_steps=400, weights=_flat_areas(mesh), mesh=mesh,
                       meta={"groups": groups, "off_neighbor_max": chain.off_neighbor_max})


# --- torus benchmark -------------------------------------------------------------

def torus_diffusion_problem(n: int = 21, walkers: int = 1000) -> ProblemSpec:
    """Four equal exits per node; all walkers start at the center node."""
    mesh = build_torus_mesh(n)
    N = n * n
    rows = np.repeat(np.arange(N), 4)
    cols = np.concatenate([a for a in mesh.adjacency])
    chain = TransitionModel([sp.csr_array((np.full(4 * N, 0.25), (rows, cols)), shape=(N, N))], 1.0)
    chain.validate()
    center = (n // 2) * n + n // 2
    return ProblemSpec("torus", chain, 1.0, np.zeros(N), positions=mesh.states, default_walkers=walkers,
                       default_steps=1000, starts=np.array([center]), mesh=mesh, meta={"n": n, "center": center})


PROBLEMS: dict[str, Callable[..., ProblemSpec]] = {
    "boltzmann": boltzmann_problem,
    "fluence": fluence_problem,
    "sphere": sphere_heat_problem,
    "barbell": barbell_problem,
    "torus": torus_diffusion_problem,
}


def get_problem(name: str, **kw) -> ProblemSpec:
    try:
        builder = PROBLEMS[name]
    except KeyError:
        raise DomainError(f"unknown problem {name!r}; choose from {', '.join(sorted(PROBLEMS))}") from None
    return builder(**kw)


def torus_displacement(positions: np.ndarray, n: int, center: int, counts: np.ndarray) -> tuple[float, float]:
    """Mean wrapped displacement along the first axis from the center, and its standard error."""
    d = (positions[:, 0] - positions[center, 0] + n / 2) % n - n / 2
    M = counts.sum()
    mean = float(counts @ d / M)
    var = float(counts @ (d - mean) ** 2 / (M - 1))
    return mean, math.sqrt(var / M)
