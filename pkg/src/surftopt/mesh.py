"""Closed triangulated surfaces and P1 geometry.

Vertex fields are plain ``(nv,)`` float arrays and material indicators are
``(nt,)`` boolean arrays where ``True`` marks material 1 (the design set).
Both are bound to a mesh by their length.
"""

import logging
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import BindingError, MeshError, MeshResourceError, OffParseError, OpenSurfaceError

logger = logging.getLogger(__name__)

MAX_SUBDIVISIONS = 8

# exact P1 element mass matrix divided by the triangle area
_REF_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class SurfaceMesh:
    """Closed triangle mesh embedded in R^3 with cached P1 geometry.

    Parameters
    ----------
    vertices : array_like, shape (nv, 3)
    triangles : array_like of int, shape (nt, 3)

    Attributes
    ----------
    elem_area : ndarray, shape (nt,)
    elem_basis_grad : ndarray, shape (nt, 3, 3)
        ``elem_basis_grad[t, i]`` is the tangential gradient of the hat
        function of local vertex ``i`` on triangle ``t``.
    total_area : float

    The constructor rejects meshes with boundary edges, non-manifold edges
    or degenerate triangles. Instances are immutable.
    """

    def __init__(self, vertices, triangles):
        v = np.asarray(vertices, dtype=float)
        t = np.asarray(triangles)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (nv, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must have shape (nt, 3), got {t.shape}")
        if t.size == 0:
            raise MeshError("mesh has no triangles")
        if not np.issubdtype(t.dtype, np.integer):
            raise MeshError("triangle indices must be integers")
        t = t.astype(np.int64)
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle index out of range")

        self.vertices = _frozen(v)
        self.triangles = _frozen(t)
        self._check_closed()

        x0, x1, x2 = (v[t[:, i]] for i in range(3))
        cross = np.cross(x1 - x0, x2 - x0)
        dbl_area = np.linalg.norm(cross, axis=1)
        if np.any(dbl_area <= 0.0):
            bad = int(np.flatnonzero(dbl_area <= 0.0)[0])
            raise MeshError(f"triangle {bad} is degenerate (zero area)")
        normals = cross / dbl_area[:, None]

        # grad phi_i = n x (x_{i+2} - x_{i+1}) / (2 |T|)
        pts = (x0, x1, x2)
        grads = np.empty((len(t), 3, 3))
        for i in range(3):
            edge = pts[(i + 2) % 3] - pts[(i + 1) % 3]
            grads[:, i, :] = np.cross(normals, edge) / dbl_area[:, None]

        self.elem_area = _frozen(0.5 * dbl_area)
        self.elem_normal = _frozen(normals)
        self.elem_basis_grad = _frozen(grads)
        self.total_area = float(np.sum(self.elem_area))

    def __repr__(self):
        return f"SurfaceMesh(nv={self.nv}, nt={self.nt}, area={self.total_area:.6g})"

    @property
    def nv(self):
        return len(self.vertices)

    @property
    def nt(self):
        return len(self.triangles)

    def _check_closed(self):
        t = self.triangles
        edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts == 1):
            raise OpenSurfaceError(f"surface is open: {int(np.sum(counts == 1))} boundary edges")
        if np.any(counts != 2):
            raise MeshError(f"non-manifold surface: {int(np.sum(counts > 2))} edges shared by more than two triangles")

    @cached_property
    def centroids(self):
        return _frozen(self.vertices[self.triangles].mean(axis=1))

    @cached_property
    def edge_lengths(self):
        v, t = self.vertices, self.triangles
        e = np.stack([v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 1]], v[t[:, 0]] - v[t[:, 2]]], axis=1)
        return _frozen(np.linalg.norm(e, axis=2))

    @property
    def h(self):
        """Largest edge length."""
        return float(self.edge_lengths.max())

    @cached_property
    def elem_stiffness(self):
        """Per-triangle P1 stiffness blocks ``|T| grad phi_i . grad phi_j``, shape (nt, 3, 3)."""
        g = self.elem_basis_grad
        return _frozen(self.elem_area[:, None, None] * np.einsum("tik,tjk->tij", g, g))

    @cached_property
    def elem_mass(self):
        """Per-triangle consistent mass blocks, shape (nt, 3, 3)."""
        return _frozen(self.elem_area[:, None, None] * _REF_MASS[None, :, :])

    @cached_property
    def _pattern(self):
        # CSR sparsity shared by every assembled operator; `slot` maps each of
        # the 9 local entries of each triangle to its position in csr.data.
        t = self.triangles
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        keys = rows * self.nv + cols
        uniq, slot = np.unique(keys, return_inverse=True)
        indices = (uniq % self.nv).astype(np.int32)
        counts = np.bincount(uniq // self.nv, minlength=self.nv)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        return indptr, indices, slot, len(uniq)

    def assemble(self, elem_blocks):
        """Sum per-triangle (nt, 3, 3) blocks into an (nv, nv) CSR matrix."""
        indptr, indices, slot, nnz = self._pattern
        data = np.bincount(slot, weights=np.asarray(elem_blocks).ravel(), minlength=nnz)
        return sparse.csr_matrix((data, indices.copy(), indptr.copy()), shape=(self.nv, self.nv))

    @cached_property
    def mass_matrix(self):
        return self.assemble(self.elem_mass)

    @cached_property
    def stiffness_matrix(self):
        """Laplace-Beltrami stiffness with unit diffusion."""
        return self.assemble(self.elem_stiffness)

    @cached_property
    def vertex_area(self):
        """Row sums of the mass matrix, i.e. integrals of the hat functions."""
        return _frozen(np.bincount(self.triangles.ravel(), weights=np.repeat(self.elem_area / 3.0, 3), minlength=self.nv))

    def interpolate(self, func):
        """Evaluate ``func(points) -> (nv,)`` at the vertices."""
        return np.asarray(func(self.vertices), dtype=float).reshape(self.nv)


def check_vertex_field(mesh, f, name="field"):
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.nv,):
        raise BindingError(f"{name} has shape {f.shape}, expected ({mesh.nv},) for this mesh")
    return f


def check_indicator(mesh, mat, name="indicator"):
    mat = np.asarray(mat)
    if mat.shape != (mesh.nt,):
        raise BindingError(f"{name} has shape {mat.shape}, expected ({mesh.nt},) for this mesh")
    return mat.astype(bool)


def _icosahedron():
    """Icosahedron with vertices at both poles and two rings at z = +-1/sqrt(5).

    The lower ring is rotated by 36 degrees, so the mesh is symmetric under
    x -> -x and no refined triangle has vertex heights summing to zero.
    """
    z = 1.0 / np.sqrt(5.0)
    r = 2.0 * z
    k = np.arange(5)
    upper = np.stack([r * np.cos(0.4 * np.pi * k), r * np.sin(0.4 * np.pi * k), np.full(5, z)], axis=1)
    lower = np.stack([r * np.cos(0.4 * np.pi * (k + 0.5)), r * np.sin(0.4 * np.pi * (k + 0.5)), np.full(5, -z)], axis=1)
    verts = np.concatenate([[[0.0, 0.0, 1.0]], upper, lower, [[0.0, 0.0, -1.0]]])
    u, w = 1 + k, 6 + k
    u1, w1 = 1 + (k + 1) % 5, 6 + (k + 1) % 5
    faces = np.concatenate(
        [
            np.stack([np.zeros(5, dtype=np.int64), u, u1], axis=1),
            np.stack([u, w, u1], axis=1),
            np.stack([u1, w, w1], axis=1),
            np.stack([np.full(5, 11), w1, w], axis=1),
        ]
    ).astype(np.int64)
    return verts, faces


def _subdivide(verts, faces):
    """Split every triangle into four, projecting new midpoints to the unit sphere."""
    nv = len(verts)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    uniq, inv = np.unique(np.sort(edges, axis=1), axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = verts[uniq[:, 0]] + verts[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(faces)
    m01, m12, m20 = (inv[k * nf:(k + 1) * nf] + nv for k in range(3))
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.concatenate([verts, mid]), new_faces


def build_icosphere(subdivisions):
    """Unit-sphere mesh obtained by refining an icosahedron.

    Each refinement level splits every triangle into four and projects the
    new vertices radially onto the sphere, so ``nt = 20 * 4**subdivisions``.
    """
    subdivisions = int(subdivisions)
    if subdivisions < 0:
        raise MeshError("subdivisions must be non-negative")
    if subdivisions > MAX_SUBDIVISIONS:
        raise MeshResourceError(f"subdivisions={subdivisions} exceeds the limit of {MAX_SUBDIVISIONS}")
    verts, faces = _icosahedron()
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    return SurfaceMesh(verts, faces)


def load_off(path):
    """Read an ASCII OFF file containing a closed triangle mesh.

    Blank lines and ``#`` comments are skipped. Errors report the 1-based
    line number of the offending line.
    """
    try:
        with open(path) as fh:
            raw = fh.readlines()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc

    lines = []
    for lineno, line in enumerate(raw, start=1):
        content = line.split("#", 1)[0].strip()
        if content:
            lines.append((lineno, content))
    if not lines:
        raise OffParseError("empty file", 1)

    lineno, header = lines[0]
    rest = lines[1:]
    if header == "OFF":
        if not rest:
            raise OffParseError("missing counts line", lineno)
        lineno, counts_line = rest[0]
        rest = rest[1:]
    elif header.startswith("OFF"):
        counts_line = header[3:].strip()
    else:
        raise OffParseError(f"expected 'OFF' header, got {header!r}", lineno)

    try:
        counts = [int(x) for x in counts_line.split()]
        n_verts, n_faces = counts[0], counts[1]
    except (ValueError, IndexError):
        raise OffParseError(f"bad counts line {counts_line!r}", lineno) from None
    if n_verts < 0 or n_faces < 0:
        raise OffParseError("negative element counts", lineno)
    if len(rest) < n_verts + n_faces:
        last = rest[-1][0] if rest else lineno
        raise OffParseError(f"expected {n_verts} vertices and {n_faces} faces, file ends early", last)

    verts = np.empty((n_verts, 3))
    for k in range(n_verts):
        lineno, content = rest[k]
        parts = content.split()
        if len(parts) < 3:
            raise OffParseError(f"vertex needs 3 coordinates, got {len(parts)}", lineno)
        try:
            verts[k] = [float(x) for x in parts[:3]]
        except ValueError:
            raise OffParseError(f"bad vertex {content!r}", lineno) from None

    faces = np.empty((n_faces, 3), dtype=np.int64)
    for k in range(n_faces):
        lineno, content = rest[n_verts + k]
        try:
            parts = [int(x) for x in content.split()]
        except ValueError:
            raise OffParseError(f"bad face {content!r}", lineno) from None
        if not parts or parts[0] != 3:
            arity = parts[0] if parts else 0
            raise OffParseError(f"only triangles are supported, face has {arity} vertices", lineno)
        if len(parts) < 4:
            raise OffParseError("triangle face needs 3 vertex indices", lineno)
        idx = parts[1:4]
        if min(idx) < 0 or max(idx) >= n_verts:
            raise OffParseError(f"vertex index out of range in face {content!r}", lineno)
        faces[k] = idx

    return SurfaceMesh(verts, faces)


def write_off(path, mesh):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.nv} {mesh.nt} 0\n")
        for x in mesh.vertices:
            fh.write(f"{float(x[0])!r} {float(x[1])!r} {float(x[2])!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")


def classify_elements(mesh, psi):
    """Material indicator of the set ``{psi < 0}``.

    A triangle belongs to material 1 iff the mean of its three vertex values
    is strictly negative; ties go to material 2.
    """
    psi = check_vertex_field(mesh, psi, "psi")
    return psi[mesh.triangles].mean(axis=1) < 0.0


def l2_inner(mesh, f, g):
    """L2(M) inner product of two P1 fields using the consistent mass matrix."""
    f = check_vertex_field(mesh, f, "f")
    g = check_vertex_field(mesh, g, "g")
    return float(f @ (mesh.mass_matrix @ g))


def l2_norm(mesh, f):
    return float(np.sqrt(max(l2_inner(mesh, f, f), 0.0)))


def material_labels(mat):
    """Integer labels for export: 1 for material 1, 2 for material 2."""
    return np.where(np.asarray(mat, dtype=bool), 1, 2).astype(np.int64)


def cap_indicator(mesh, axis, polar_angle):
    """Triangles whose re-projected centroid lies within ``polar_angle`` (radians) of ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    c = mesh.centroids
    c = c / np.linalg.norm(c, axis=1, keepdims=True)
    return np.arccos(np.clip(c @ axis, -1.0, 1.0)) <= polar_angle
