"""Numerical checks of the small-inclusion asymptotics on the unit sphere.

Geodesic disks on S^2 are spherical caps, so their exact area
``2 pi (1 - cos eps)`` and the exponential map are available in closed
form. :func:`td_quotient_study` nucleates such disks on a mesh, re-solves
the state equation and compares the cost quotient with the closed-form
topological derivative.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import HypothesisViolationError, UnsupportedConfigurationError
from .fem import DEFAULT_TOL, objective, solve_adjoint, solve_state
from .mesh import check_indicator, check_vertex_field
from .topo_deriv import td_field

TANGENT_TOL = 1e-10


def sphere_exp_map(q, v):
    """Endpoint of the unit-speed great circle from ``q`` with initial velocity ``v``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > TANGENT_TOL:
        raise ValueError("base point must lie on the unit sphere")
    if abs(q @ v) > TANGENT_TOL:
        raise ValueError(f"v is not tangent at q (v.q = {q @ v:.3e})")
    t = np.linalg.norm(v)
    if t == 0.0:
        return q.copy()
    return np.cos(t) * q + np.sin(t) / t * v


def geodesic_disk_area_exact(eps):
    """Area of the geodesic disk of radius ``eps`` on the unit sphere."""
    if not 0.0 < eps < np.pi:
        raise ValueError(f"radius must lie in (0, pi), got {eps}")
    # 1 - cos(eps) without cancellation
    return 4.0 * np.pi * np.sin(0.5 * eps) ** 2


def _unit(x):
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def geodesic_distance_to_centroids(mesh, q):
    """Great-circle distance from vertex ``q`` to every re-projected triangle centroid."""
    qp = _unit(mesh.vertices[q])
    return np.arccos(np.clip(_unit(mesh.centroids) @ qp, -1.0, 1.0))


def _vertex_triangles(mesh, q):
    return np.flatnonzero(np.any(mesh.triangles == q, axis=1))


def vertex_material(mesh, mat, q):
    """Material of vertex ``q`` (True for material 1) if all incident triangles agree."""
    labels = np.asarray(mat, dtype=bool)[_vertex_triangles(mesh, q)]
    if labels.size == 0 or labels.min() != labels.max():
        raise HypothesisViolationError(f"vertex {q} lies on the material interface")
    return bool(labels[0])


def flip_geodesic_disk(mesh, mat, q, eps):
    """Swap the material of every triangle whose centroid is within ``eps`` of vertex ``q``.

    Returns the new indicator and the total area of the flipped triangles.
    The disk must lie inside a single material.
    """
    mat = check_indicator(mesh, mat, "mat")
    if not 0 <= q < mesh.nv:
        raise IndexError(f"vertex index {q} out of range")
    if not 0.0 < eps < np.pi:
        raise ValueError(f"radius must lie in (0, pi), got {eps}")
    inside_q = vertex_material(mesh, mat, q)
    disk = geodesic_distance_to_centroids(mesh, q) < eps
    if np.any(mat[disk] != inside_q):
        raise HypothesisViolationError(f"disk of radius {eps} around vertex {q} crosses the material interface")
    new = mat.copy()
    new[disk] = ~new[disk]
    return new, float(np.sum(mesh.elem_area[disk]))


def _chord_to_geodesic(d):
    return 2.0 * np.arcsin(np.clip(0.5 * d, 0.0, 1.0))


def distance_to_interface(mesh, mat, q):
    """Distance from vertex ``q`` to the nearest centroid of the opposite material (inf if none)."""
    mat = check_indicator(mesh, mat, "mat")
    other = mat != vertex_material(mesh, mat, q)
    if not np.any(other):
        return np.inf
    return float(geodesic_distance_to_centroids(mesh, q)[other].min())


def farthest_vertex(mesh, mat, regular_only=True):
    """Vertex inside a single material that is farthest from the other material.

    Distances are great-circle distances to re-projected triangle
    centroids. With ``regular_only`` the search skips vertices whose
    valence differs from 6 (the 12 icosahedral vertices of an icosphere),
    where recovered gradients and discrete disks are least accurate; it
    falls back to all vertices if no regular one qualifies. For a
    single-material layout vertex 0 is returned.
    """
    mat = check_indicator(mesh, mat, "mat")
    if mat.all() or not mat.any():
        return 0
    tri = mesh.triangles.ravel()
    n_one = np.bincount(tri, weights=np.repeat(mat, 3).astype(float), minlength=mesh.nv)
    valence = np.bincount(tri, minlength=mesh.nv)
    v = _unit(mesh.vertices)
    c = _unit(mesh.centroids)
    dist = np.full(mesh.nv, -1.0)
    for label, own in ((True, n_one == valence), (False, n_one == 0)):
        if np.any(own):
            d, _ = cKDTree(c[mat != label]).query(v[own])
            dist[own] = _chord_to_geodesic(d)
    if regular_only:
        regular = np.where(valence == 6, dist, -1.0)
        if regular.max() >= 0.0:
            dist = regular
    return int(np.argmax(dist))


@dataclass(frozen=True)
class QuotientRow:
    eps: float
    area_exact: float
    area_mesh: float
    J_pert: float
    quotient: float
    td_formula: float
    rel_err: float
    resolution_floor: bool = False


@dataclass
class QuotientTable:
    q: int
    J0: float
    td_formula: float
    rows: list = field(default_factory=list)

    @property
    def rel_errors(self):
        return np.array([r.rel_err for r in self.rows])

    def errors_non_increasing(self):
        e = self.rel_errors
        return bool(np.all(np.diff(e) <= 0.0))

    def signs_agree(self):
        return all(np.sign(r.quotient) == np.sign(r.td_formula) for r in self.rows)


def td_quotient_study(mesh, mat, c, u_d, q, eps_list, tol=DEFAULT_TOL):
    """Compare ``(J(perturbed) - J) / |disk|`` with the closed-form derivative at vertex ``q``.

    ``eps_list`` must be strictly decreasing. Rows whose disk contains no
    triangle centroid are flagged with ``resolution_floor`` and carry NaN
    quotients.
    """
    if c.alpha2 != 0.0:
        raise UnsupportedConfigurationError("quotient study requires alpha2 = 0", "alpha2")
    mat = check_indicator(mesh, mat, "mat")
    u_d = check_vertex_field(mesh, u_d, "u_d")
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")

    u0 = solve_state(mesh, mat, c, tol)
    p0 = solve_adjoint(mesh, mat, c, u0, u_d, tol)
    J0 = objective(mesh, u0, u_d, c)
    inside = vertex_material(mesh, mat, q)
    psi = np.ones(mesh.nv)
    psi[q] = -1.0 if inside else 1.0
    td_q = float(td_field(mesh, psi, mat, u0, p0, c).dJ[q])

    table = QuotientTable(q=q, J0=J0, td_formula=td_q)
    for eps in eps_list:
        area = geodesic_disk_area_exact(eps)
        pert, area_mesh = flip_geodesic_disk(mesh, mat, q, eps)
        if area_mesh == 0.0:
            table.rows.append(QuotientRow(eps, area, 0.0, J0, np.nan, td_q, np.nan, True))
            continue
        J = objective(mesh, solve_state(mesh, pert, c, tol), u_d, c)
        quotient = (J - J0) / area
        rel = abs(quotient - td_q) / abs(td_q) if td_q != 0.0 else abs(quotient)
        table.rows.append(QuotientRow(eps, area, area_mesh, J, quotient, td_q, rel))
    return table
