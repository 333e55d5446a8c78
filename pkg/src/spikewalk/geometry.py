"""Meshes and tangent-plane diffusion transition probabilities on curved surfaces.

States are element centers.  On a sphere, one step of Brownian motion with
per-axis variance ``2 alpha dt`` is approximated in the tangent plane at the
current center: the gnomonic image of every vertex-sharing triangle is
integrated against the isotropic Gaussian.  Leftover mass stays put.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import special

from .dtmc import DomainError, TransitionModel, make_row_exact

OFF_NEIGHBOR_LIMIT = 0.05


class HemisphereError(ValueError):
    """Point is not in the open hemisphere around the projection center."""


@dataclass
class SurfaceMesh:
    vertices: np.ndarray
    elements: list[tuple[int, ...]]
    states: np.ndarray
    adjacency: list[np.ndarray]
    kinds: list[str]
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.states)

    def to_json(self) -> dict:
        return {"vertices": np.asarray(self.vertices).tolist(), "elements": [list(map(int, e)) for e in self.elements],
                "states": np.asarray(self.states).tolist(), "adjacency": [a.tolist() for a in self.adjacency],
                "kinds": self.kinds}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    def save_centroids_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("state_id,kind,x,y,z\n")
            for s, (p, k) in enumerate(zip(self.states, self.kinds)):
                fh.write(f"{s},{k},{p[0]!r},{p[1]!r},{p[2]!r}\n")


# --- torus ------------------------------------------------------------------------

def build_torus_mesh(n: int, self_loops: bool = False) -> SurfaceMesh:
    """Abstract n x n torus; state ``i * n + j`` sits at grid point (i, j)."""
    if n < 2:
        raise DomainError("torus side must be >= 2")
    ii, jj = np.divmod(np.arange(n * n), n)
    adj = []
    for i, j in zip(ii, jj):
        nbrs = [((i + di) % n) * n + (j + dj) % n for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))]
        if self_loops:
            nbrs.append(i * n + j)
        adj.append(np.unique(nbrs))
    states = np.stack([ii, jj, np.zeros_like(ii)], axis=1).astype(float)
    return SurfaceMesh(np.zeros((0, 3)), [], states, adj, ["node"] * (n * n), {"n": n})


# --- geodesic sphere ----------------------------------------------------------------

def _icosahedron() -> tuple[np.ndarray, list[list[int]]]:
    """Unit icosahedron with vertices 0 and 1 on the +z / -z axis."""
    phi = (1 + 5 ** 0.5) / 2
    V = np.array([[-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0], [0, -1, phi], [0, 1, phi],
                  [0, -1, -phi], [0, 1, -phi], [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]], float)
    F = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4], [11, 10, 2],
         [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9], [4, 9, 5], [2, 4, 11],
         [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    V /= np.linalg.norm(V, axis=1)[:, None]
    # rotate vertex 5 = (0, 1, phi)/|.| onto +z; its antipode (vertex 6) lands on -z
    R = _rotation_to(V[5], np.array([0.0, 0.0, 1.0]))
    return V @ R.T, F


def _rotation_to(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation matrix taking unit vector ``a`` to unit vector ``b`` (Rodrigues)."""
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(a @ b)
    if np.linalg.norm(v) < 1e-15:
        if c > 0:
            return np.eye(3)
        axis = np.cross(a, [1.0, 0, 0] if abs(a[0]) < 0.9 else [0, 1.0, 0])
        axis /= np.linalg.norm(axis)
        return 2 * np.outer(axis, axis) - np.eye(3)
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + K + K @ K / (1 + c)


def _subdivide(V: np.ndarray, F: list[list[int]]) -> tuple[np.ndarray, list[list[int]]]:
    verts = list(V)
    cache: dict[tuple[int, int], int] = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in F:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), out


def _vertex_sharing(elements, n_vertices) -> list[np.ndarray]:
    touching = defaultdict(set)
    for e, verts in enumerate(elements):
        for v in verts:
            touching[v].add(e)
    return [np.array(sorted(set().union(*(touching[v] for v in verts)))) for verts in elements]


def build_geodesic_sphere(subdivisions: int = 2) -> SurfaceMesh:
    """Icosahedron refined twice by edge midpoints, vertices pushed to the unit sphere.

    Vertices 12..41 come from the first refinement.  States are triangle
    centroids projected to the sphere; adjacency is vertex sharing (self included).
    """
    if subdivisions != 2:
        raise DomainError("only the twice-refined icosahedron (320 triangles) is supported")
    V, F = _icosahedron()
    for _ in range(subdivisions):
        V, F = _subdivide(V, F)
    elements = [tuple(f) for f in F]
    cent = V[np.array(F)].mean(axis=1)
    cent /= np.linalg.norm(cent, axis=1)[:, None]
    adj = _vertex_sharing(elements, len(V))
    return SurfaceMesh(V, elements, cent, adj, ["triangle"] * len(F), {"first_refinement": (12, 42)})


# --- gnomonic projection --------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionFrame:
    """Tangent-plane frame at unit vector ``center``; rows of ``rotation`` are (e1, e2, center)."""

    center: np.ndarray
    rotation: np.ndarray

    @classmethod
    def at(cls, center) -> "ProjectionFrame":
        r = np.asarray(center, float)
        r = r / np.linalg.norm(r)
        x, y, z = r
        rho = math.hypot(x, y)
        if rho == 0:
            R = np.eye(3) * math.copysign(1.0, z)
        else:
            R = np.array([[z * x / rho, z * y / rho, -rho], [-y / rho, x / rho, 0.0], [x, y, z]])
        return cls(r, R)


def gnomonic_project(frame: ProjectionFrame, p) -> np.ndarray:
    """Tangent-plane coordinates of unit vector(s) ``p``; great circles map to lines."""
    p = np.asarray(p, float)
    q = p @ frame.rotation.T
    if np.any(p @ frame.center <= 0):
        raise HemisphereError("point not in the hemisphere of the projection center")
    return q[..., :2] / q[..., 2:3]


def gnomonic_unproject(frame: ProjectionFrame, xy) -> np.ndarray:
    xy = np.asarray(xy, float)
    q = np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1) * np.sign(frame.rotation[2] @ frame.center)
    p = q @ frame.rotation
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


# --- Gaussian mass over polygons ------------------------------------------------------

_GL_ORDER = 12
_gl_x, _gl_w = np.polynomial.legendre.leggauss(_GL_ORDER)
_GL_U = 0.5 * (_gl_x + 1)
_GL_W = 0.5 * _gl_w


def triangulate(poly) -> list[tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple polygon (either orientation)."""
    P = np.asarray(poly, float)
    n = len(P)
    if n < 3:
        return []
    area2 = np.sum(P[:, 0] * np.roll(P[:, 1], -1) - np.roll(P[:, 0], -1) * P[:, 1])
    idx = list(range(n)) if area2 > 0 else list(range(n))[::-1]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    tris = []
    guard = 0
    while len(idx) > 3 and guard < 10 * n * n:
        guard += 1
        m = len(idx)
        for k in range(m):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % m]
            if cross(P[a], P[b], P[c]) <= 0:
                continue
            inside = any(
                cross(P[a], P[b], P[v]) >= 0 and cross(P[b], P[c], P[v]) >= 0 and cross(P[c], P[a], P[v]) >= 0
                for v in idx if v not in (a, b, c))
            if not inside:
                tris.append((a, b, c))
                idx.pop(k)
                break
        else:
            break
    if len(idx) == 3:
        tris.append(tuple(idx))
    return tris


def _refine(tris: np.ndarray, h: float) -> np.ndarray:
    """Split triangles (T, 3, 2) into four by edge midpoints until every edge is <= h."""
    done = []
    while len(tris):
        e = np.stack([tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 1], tris[:, 0] - tris[:, 2]], axis=1)
        big = np.linalg.norm(e, axis=2).max(axis=1) > h
        done.append(tris[~big])
        t = tris[big]
        if not len(t):
            break
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tris = np.concatenate([np.stack(x, axis=1) for x in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))])
    return np.concatenate(done) if done else np.zeros((0, 3, 2))


def _triangle_masses(tris: np.ndarray, var: float) -> np.ndarray:
    """Gaussian mass of each triangle via a collapsed-square (Duffy) tensor Gauss-Legendre rule."""
    sigma = math.sqrt(var)
    out = np.zeros(len(tris))
    for k, tri in enumerate(tris):
        fine = _refine(tri[None], 2 * sigma)
        a, b, c = fine[:, 0], fine[:, 1], fine[:, 2]
        area2 = np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
        u = _GL_U[:, None]
        v = _GL_U[None, :]
        # x = a + u (b - a) + u v (c - b), |J| = u * area2
        px = a[:, 0, None, None] + u * (b[:, 0] - a[:, 0])[:, None, None] + (u * v) * (c[:, 0] - b[:, 0])[:, None, None]
        py = a[:, 1, None, None] + u * (b[:, 1] - a[:, 1])[:, None, None] + (u * v) * (c[:, 1] - b[:, 1])[:, None, None]
        dens = np.exp(-(px * px + py * py) / (2 * var)) / (2 * math.pi * var)
        w = (_GL_W[:, None] * _GL_W[None, :]) * u
        out[k] = float(np.sum(dens * w[None] * area2[:, None, None]))
    return out


def gaussian_polygon_mass(poly, var: float) -> float:
    """Mass of the centered isotropic Gaussian (per-axis variance ``var``) over a simple polygon."""
    if var <= 0:
        raise DomainError("variance must be positive")
    P = np.asarray(poly, float)
    tris = triangulate(P)
    if not tris:
        return 0.0
    T = np.array([[P[i] for i in t] for t in tris])
    area2 = np.abs((T[:, 1, 0] - T[:, 0, 0]) * (T[:, 2, 1] - T[:, 0, 1]) - (T[:, 1, 1] - T[:, 0, 1]) * (T[:, 2, 0] - T[:, 0, 0]))
    T = T[area2 > 0]
    if not len(T):
        return 0.0
    return float(_triangle_masses(T, var).sum())


def gaussian_box_mass(x0: float, x1: float, y0: float, y1: float, var: float) -> float:
    """Mass of an axis-aligned box (bounds may be infinite); closed form."""
    s = math.sqrt(var)

    def seg(a, b):
        return float(special.ndtr(b / s) - special.ndtr(a / s)) if a < 0 else float(special.ndtr(-a / s) - special.ndtr(-b / s))

    return seg(x0, x1) * seg(y0, y1)


# --- sphere transitions -----------------------------------------------------------

def _tangent_masses(mesh: SurfaceMesh, i: int, nbrs, var: float, verts=None, center=None) -> np.ndarray:
    frame = ProjectionFrame.at(mesh.states[i] if center is None else center)
    V = mesh.vertices if verts is None else verts
    tris = np.array([gnomonic_project(frame, V[list(mesh.elements[j])]) for j in nbrs])
    return _triangle_masses(tris, var)


def _finish_rows(rows: list[tuple[np.ndarray, np.ndarray]], n: int, dt: float, what: str) -> TransitionModel:
    r, c, v = [], [], []
    worst = 0.0
    for i, (cols, p) in enumerate(rows):
        off = 1.0 - math.fsum(p)
        worst = max(worst, off)
        p = p.copy()
        p[np.nonzero(cols == i)[0][0]] += off
        p = make_row_exact(p)
        r.extend([i] * len(cols))
        c.extend(cols.tolist())
        v.extend(p.tolist())
    if worst >= OFF_NEIGHBOR_LIMIT:
        warnings.warn(f"{what}: off-neighbor mass {worst:.3g} >= {OFF_NEIGHBOR_LIMIT}", RuntimeWarning, stacklevel=3)
    model = TransitionModel([sp.csr_array((v, (r, c)), shape=(n, n))], dt)
    model.validate()
    model.off_neighbor_max = worst
    return model


def sphere_transition_matrix(mesh: SurfaceMesh, alpha: float, dt: float) -> TransitionModel:
    """Tangent-plane Gaussian masses of vertex-sharing triangles; leftover to self."""
    if alpha <= 0 or dt <= 0:
        raise DomainError("alpha and dt must be positive")
    var = 2 * alpha * dt
    rows = [(mesh.adjacency[i], _tangent_masses(mesh, i, mesh.adjacency[i], var)) for i in range(mesh.size)]
    return _finish_rows(rows, mesh.size, dt, "sphere")


# --- barbell -----------------------------------------------------------------------

BARBELL_RINGS = 20


@dataclass
class _Hexagon:
    ring: list[int]          # ring vertex ids, in cyclic order
    removed: list[int]       # removed triangle ids; removed[s] holds side (ring[s], ring[s + 1])
    plane_distance: float
    sides: np.ndarray


def _hexagon_at(V: np.ndarray, F: list[tuple[int, ...]], v: int) -> _Hexagon:
    tris = [k for k, f in enumerate(F) if v in f]
    if len(tris) != 6:
        raise DomainError("removal vertex must have degree 6")
    nxt = {}
    for k in tris:
        a, b, c = F[k]
        # orientation-preserving successor around v
        rot = {a: b, b: c, c: a}
        x = rot[v]
        nxt[x] = (rot[x], k)
    start = next(iter(nxt))
    ring, removed = [start], []
    while len(ring) < 6:
        y, k = nxt[ring[-1]]
        removed.append(k)
        ring.append(y)
    removed.append(nxt[ring[-1]][1])
    pts = V[ring]
    sides = np.linalg.norm(pts - np.roll(pts, -1, axis=0), axis=1)
    return _Hexagon(ring, removed, float(np.mean(pts @ V[v])), sides)


def barbell_ring_count(mesh_sphere: SurfaceMesh | None = None) -> float:
    """Prism length over the width that gives rectangles the smallest triangle's area."""
    s = build_geodesic_sphere() if mesh_sphere is None else mesh_sphere
    V, F = s.vertices, s.elements
    areas = np.array([np.linalg.norm(np.cross(V[b] - V[a], V[c] - V[a])) / 2 for a, b, c in F])
    hexa = _hexagon_at(V, F, 12)
    width = areas.min() / hexa.sides.mean()
    return 2 * (2 - hexa.plane_distance) / width


def build_barbell_mesh(rings: int = BARBELL_RINGS) -> SurfaceMesh:
    """Two unit spheres centered at y = +-2 joined by a six-sided prism along y.

    Each sphere loses the six triangles around the first-refinement vertex
    that faces the origin; the prism spans the two hexagons in ``rings``
    rings of six rectangles.  State order: upper sphere triangles, lower
    sphere triangles (mirror images, same order), then prism rectangles
    ``ring * 6 + side`` with ring 0 at the upper sphere.
    """
    base = build_geodesic_sphere()
    V0 = base.vertices
    v = 12  # a first-refinement vertex (degree 6)
    R = _rotation_to(V0[v], np.array([0.0, -1.0, 0.0]))
    Vu = V0 @ R.T
    F = base.elements
    hexa = _hexagon_at(Vu, F, v)
    keep = [k for k in range(len(F)) if k not in set(hexa.removed)]
    nv = len(Vu)
    up = Vu + np.array([0, 2.0, 0])
    lo = up * np.array([1.0, -1.0, 1.0])
    verts = np.concatenate([up, lo])
    elements = [tuple(F[k]) for k in keep] + [tuple(x + nv for x in F[k]) for k in keep]
    cent = Vu[np.array([F[k] for k in keep])].mean(axis=1)
    cent /= np.linalg.norm(cent, axis=1)[:, None]
    states = [cent + [0, 2.0, 0], (cent + [0, 2.0, 0]) * [1, -1, 1]]
    kinds = ["triangle"] * (2 * len(keep))
    # prism: ring boundaries at y = y_top ... -y_top, vertices reuse the hexagon xz coordinates
    y_top = 2 - hexa.plane_distance
    ys = np.linspace(y_top, -y_top, rings + 1)
    hx = Vu[hexa.ring][:, [0, 2]]
    pv = np.array([[hx[s, 0], y, hx[s, 1]] for y in ys for s in range(6)])
    pv_base = len(verts)
    verts = np.concatenate([verts, pv])
    rect_states = []
    for k in range(rings):
        for s in range(6):
            a = pv_base + k * 6 + s
            b = pv_base + k * 6 + (s + 1) % 6
            elements.append((a, b, b + 6, a + 6))
            mid = (hx[s] + hx[(s + 1) % 6]) / 2
            rect_states.append([mid[0], (ys[k] + ys[k + 1]) / 2, mid[1]])
            kinds.append("rectangle")
    states = np.concatenate(states + [np.array(rect_states)])
    meta = {"rings": rings, "triangles_per_sphere": len(keep), "keep": keep, "hexagon": hexa,
            "sphere_vertices": Vu, "sphere_elements": F, "prism_length": 2 * y_top,
            "ring_count_rule": barbell_ring_count(base)}
    n_tri = len(keep)
    adj = _barbell_adjacency(n_tri, rings, F, keep, hexa)
    return SurfaceMesh(verts, elements, states, adj, kinds, meta)


def _barbell_adjacency(n_tri, rings, F, keep, hexa) -> list[np.ndarray]:
    pos = {k: i for i, k in enumerate(keep)}
    touching = defaultdict(set)
    for k, f in enumerate(F):
        for v in f:
            touching[v].add(k)
    rect0 = 2 * n_tri
    ring_pos = {v: s for s, v in enumerate(hexa.ring)}
    adj = []
    for side in (0, 1):
        off = side * n_tri
        end_ring = 0 if side == 0 else rings - 1
        for k in keep:
            nb = set()
            for v in F[k]:
                for j in touching[v]:
                    if j in pos:
                        nb.add(pos[j] + off)
                if v in ring_pos:
                    s = ring_pos[v]
                    nb.update({rect0 + end_ring * 6 + s, rect0 + end_ring * 6 + (s - 1) % 6})
            adj.append(np.array(sorted(nb)))
    for k in range(rings):
        for s in range(6):
            nb = {rect0 + kk * 6 + (s + ds) % 6 for kk in (k - 1, k, k + 1) if 0 <= kk < rings for ds in (-1, 0, 1)}
            for end, off in ((0, 0), (rings - 1, n_tri)):
                if k == end:
                    for v in (hexa.ring[s], hexa.ring[(s + 1) % 6]):
                        nb.update(pos[j] + off for j in touching[v] if j in pos)
            adj.append(np.array(sorted(nb)))
    return adj


def barbell_transition_matrix(mesh: SurfaceMesh, alpha: float, dt: float) -> TransitionModel:
    """Tangent-plane rule on the spheres, unfolded prism on and next to the rectangles."""
    if alpha <= 0 or dt <= 0:
        raise DomainError("alpha and dt must be positive")
    var = 2 * alpha * dt
    meta = mesh.meta
    Vu, F, keep, hexa, rings = meta["sphere_vertices"], meta["sphere_elements"], meta["keep"], meta["hexagon"], meta["rings"]
    n_tri = len(keep)
    pos = {k: i for i, k in enumerate(keep)}
    rect0 = 2 * n_tri
    removed_side = {k: s for s, k in enumerate(hexa.removed)}
    touching = defaultdict(set)
    for k, f in enumerate(F):
        for v in f:
            touching[v].add(k)
    sphere_mesh = SurfaceMesh(Vu, F, None, [], [])

    # triangle rows on the upper sphere; the lower sphere is its mirror image
    tri_rows = []
    for k in keep:
        nb = sorted(set().union(*(touching[v] for v in F[k])))
        c = Vu[list(F[k])].mean(axis=0)
        p = _tangent_masses(sphere_mesh, 0, nb, var, Vu, c / np.linalg.norm(c))
        cols, vals = [], []
        for j, pj in zip(nb, p):
            if j in pos:
                cols.append(pos[j])
            else:
                cols.append(rect0 + removed_side[j])  # ring 0, same side
            vals.append(pj)
        tri_rows.append((np.array(cols), np.array(vals)))

    def ring_map(cols, side):
        out = cols.copy()
        tri = cols < n_tri
        out[tri] += side * n_tri
        if side:
            r, s = np.divmod(cols[~tri] - rect0, 6)
            out[~tri] = rect0 + (rings - 1 - r) * 6 + s
        return out

    rows = [(ring_map(c, 0), v) for c, v in tri_rows] + [(ring_map(c, 1), v) for c, v in tri_rows]
    rows = [_merge(c, v) for c, v in rows]

    # prism rows in unfolded coordinates: u around the prism, v along it (+v toward ring 0)
    w = hexa.sides
    ell = meta["prism_length"] / rings
    for k in range(rings):
        for s in range(6):
            i = rect0 + k * 6 + s
            cols, vals = [], []
            for kk in (k - 1, k, k + 1):
                if not 0 <= kk < rings:
                    continue
                v0 = (k - kk) * ell - ell / 2
                for ds in (-1, 0, 1):
                    ss = (s + ds) % 6
                    if ds == 0:
                        u0, u1 = -w[s] / 2, w[s] / 2
                    elif ds == 1:
                        u0, u1 = w[s] / 2, w[s] / 2 + w[ss]
                    else:
                        u0, u1 = -w[s] / 2 - w[ss], -w[s] / 2
                    cols.append(rect0 + kk * 6 + ss)
                    vals.append(gaussian_box_mass(u0, u1, v0, v0 + ell, var))
            for end, off in ((0, 0), (rings - 1, n_tri)):
                if k != end:
                    continue
                for col, p in _rect_to_sphere(Vu, F, hexa, s, w[s], ell, var, touching, pos):
                    cols.append(col + off)
                    vals.append(p)
            rows.append(_merge(np.array(cols), np.array(vals)))
    model = _finish_rows(rows, mesh.size, dt, "barbell")
    return model


def _merge(cols: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, inv = np.unique(cols, return_inverse=True)
    out = np.zeros(len(u))
    np.add.at(out, inv, vals)
    return u, out


def _rect_to_sphere(Vu, F, hexa, s, w, ell, var, touching, pos):
    """End-ring rectangle on side ``s`` stepping onto its sphere.

    The triangle across the hexagon side is unfolded onto the plane beyond
    the rectangle's end edge; the three remaining triangles around each end
    vertex share the diagonal quarter-plane mass equally.
    """
    a, b = hexa.ring[s], hexa.ring[(s + 1) % 6]
    across = [k for k in touching[a] & touching[b] if k in pos]
    (t,) = across
    apex = next(x for x in F[t] if x not in (a, b))
    A, B, C = Vu[a], Vu[b], Vu[apex]
    e = B - A
    L = np.linalg.norm(e)
    foot = float((C - A) @ e / L)
    height = float(np.linalg.norm(np.cross(e, C - A)) / L)
    # end edge from u = -w/2 (vertex a) to u = +w/2 (vertex b) at v = ell/2
    scale = w / L
    tri = np.array([[-w / 2, ell / 2], [w / 2, ell / 2], [-w / 2 + foot * scale, ell / 2 + height]])
    out = [(pos[t], float(_triangle_masses(tri[None], var)[0]))]
    half = w / 2
    corner = {a: gaussian_box_mass(-np.inf, -half, ell / 2, np.inf, var),
              b: gaussian_box_mass(half, np.inf, ell / 2, np.inf, var)}
    for v in (a, b):
        fan = [k for k in touching[v] if k in pos and k != t]
        if len(fan) != 3:
            raise DomainError(f"expected three triangles around hexagon vertex, found {len(fan)}")
        out += [(pos[k], corner[v] / 3) for k in fan]
    return out
