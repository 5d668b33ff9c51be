"""P1 finite elements for the two-material state and adjoint equations.

State:    (beta grad u, grad v) + (gamma u, v) = (f, v)
Adjoint:  same bilinear form, right-hand side
          -2 alpha1 (u - u_d, v) - 2 alpha2 (grad(u - u_d), grad v)

with beta, gamma, f piecewise constant: the material-1 value on triangles
flagged by the indicator, the material-2 value elsewhere.
"""

import logging
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy import sparse

from .errors import CoefficientError, ConvergenceError, SolverError
from .mesh import check_indicator, check_vertex_field

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
FLOOR_FACTOR = 8.0
FLOOR_EVERY = 25


@dataclass(frozen=True)
class ProblemCoefficients:
    beta1: float
    beta2: float
    gamma1: float
    gamma2: float
    f1: float
    f2: float
    alpha1: float = 1.0
    alpha2: float = 0.0

    def __post_init__(self):
        for fld in fields(self):
            value = getattr(self, fld.name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise CoefficientError(f"{fld.name} must be a real number, got {value!r}", fld.name) from None
            if not np.isfinite(value):
                raise CoefficientError(f"{fld.name} must be finite", fld.name)
            object.__setattr__(self, fld.name, value)
        for name in ("beta1", "beta2", "gamma1", "gamma2"):
            if getattr(self, name) <= 0.0:
                raise CoefficientError(f"{name} must be positive, got {getattr(self, name)}", name)
        for name in ("alpha1", "alpha2"):
            if getattr(self, name) < 0.0:
                raise CoefficientError(f"{name} must be non-negative, got {getattr(self, name)}", name)
        if self.alpha1 == 0.0 and self.alpha2 == 0.0:
            raise CoefficientError("alpha1 and alpha2 cannot both be zero", "alpha1")

    @classmethod
    def land_water(cls):
        """High-contrast land/water parameters: conductive heated land, nearly insulating water."""
        return cls(beta1=1e4, beta2=1e-3, gamma1=1.0, gamma2=1.0, f1=1e3, f2=0.0, alpha1=1.0, alpha2=0.0)

    def swapped(self):
        """Coefficients with the roles of the two materials exchanged."""
        return replace(
            self, beta1=self.beta2, beta2=self.beta1, gamma1=self.gamma2, gamma2=self.gamma1, f1=self.f2, f2=self.f1
        )

    def per_element(self, mat):
        """Arrays (beta, gamma, f) over triangles for a boolean material-1 indicator."""
        mat = np.asarray(mat, dtype=bool)
        return (
            np.where(mat, self.beta1, self.beta2),
            np.where(mat, self.gamma1, self.gamma2),
            np.where(mat, self.f1, self.f2),
        )


@dataclass(frozen=True)
class SparseSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray


@dataclass(frozen=True)
class CGInfo:
    iterations: int
    residual: float
    floor_limited: bool = False


def assemble_matrix(mesh, mat, c):
    """Bilinear form of the state equation for the given material layout."""
    mat = check_indicator(mesh, mat, "mat")
    beta, gamma, _ = c.per_element(mat)
    blocks = beta[:, None, None] * mesh.elem_stiffness + gamma[:, None, None] * mesh.elem_mass
    return mesh.assemble(blocks)


def load_vector(mesh, elem_values):
    """Exact P1 load of an element-wise constant source: ``f(T) |T| / 3`` per vertex."""
    w = np.repeat(np.asarray(elem_values, dtype=float) * mesh.elem_area / 3.0, 3)
    return np.bincount(mesh.triangles.ravel(), weights=w, minlength=mesh.nv)


def assemble_state(mesh, mat, c):
    mat = check_indicator(mesh, mat, "mat")
    _, _, f = c.per_element(mat)
    return SparseSystem(assemble_matrix(mesh, mat, c), load_vector(mesh, f))


def assemble_adjoint_rhs(mesh, u, u_d, c):
    u = check_vertex_field(mesh, u, "u")
    u_d = check_vertex_field(mesh, u_d, "u_d")
    e = u - u_d
    rhs = np.zeros(mesh.nv)
    if c.alpha1:
        rhs -= 2.0 * c.alpha1 * (mesh.mass_matrix @ e)
    if c.alpha2:
        rhs -= 2.0 * c.alpha2 * (mesh.stiffness_matrix @ e)
    return rhs


def _roundoff_floor(abs_A, x):
    return FLOOR_FACTOR * np.finfo(float).eps * np.linalg.norm(abs_A @ np.abs(x))


def solve_cg(system, tol=DEFAULT_TOL, max_iter=None, x0=None, return_info=False):
    """Jacobi-preconditioned conjugate gradients.

    Iterates until the true residual satisfies ``|b - A x| <= tol |b|``. When
    that is below what double precision can resolve for the system at hand
    (high coefficient contrast), the iteration instead stops once
    ``|b - A x| <= 8 eps | |A| |x| |``, i.e. at a componentwise backward
    error of a few machine epsilons; ``CGInfo.floor_limited`` reports this.
    The recursively updated residual is re-checked against ``b - A x`` on
    exit and the iteration restarted if the two have drifted apart.

    Raises
    ------
    ConvergenceError
        If neither bound is met within ``max_iter`` iterations
        (default ``20 * n``).
    """
    A, b = system.matrix, np.asarray(system.rhs, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise SolverError(f"matrix shape {A.shape} does not match rhs length {n}")
    if not (0.0 < tol <= 1e-2):
        raise ValueError(f"tolerance must lie in (0, 1e-2], got {tol}")
    if max_iter is None:
        max_iter = 20 * n
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise SolverError("matrix has non-positive diagonal entries; not SPD")
    inv_diag = 1.0 / diag
    abs_A = abs(A)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        x = np.zeros(n)
        return (x, CGInfo(0, 0.0)) if return_info else x
    target = tol * b_norm

    it = 0
    r = b - A @ x
    floor = _roundoff_floor(abs_A, x)
    while True:
        if np.linalg.norm(r) <= max(target, floor):
            break
        z = inv_diag * r
        p = z.copy()
        rz = r @ z
        while it < max_iter:
            Ap = A @ p
            pAp = p @ Ap
            if pAp <= 0.0:
                raise SolverError("matrix is not positive definite (p^T A p <= 0)")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            if it % FLOOR_EVERY == 0:
                floor = _roundoff_floor(abs_A, x)
            if np.linalg.norm(r) <= max(target, floor):
                break
            z = inv_diag * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - A @ x
        floor = _roundoff_floor(abs_A, x)
        if np.linalg.norm(r) <= max(target, floor):
            break
        if it >= max_iter:
            raise ConvergenceError("conjugate gradients did not converge", np.linalg.norm(r) / b_norm, it)
        logger.debug("CG residual drift at iteration %d, restarting", it)

    r_norm = np.linalg.norm(r)
    limited = r_norm > target
    if limited:
        logger.debug("CG stopped at round-off floor: relative residual %.3e > tol %.1e", r_norm / b_norm, tol)
    info = CGInfo(it, float(r_norm / b_norm), limited)
    return (x, info) if return_info else x


def solve_state(mesh, mat, c, tol=DEFAULT_TOL, max_iter=None, x0=None, return_info=False):
    return solve_cg(assemble_state(mesh, mat, c), tol, max_iter, x0, return_info)


def solve_adjoint(mesh, mat, c, u, u_d, tol=DEFAULT_TOL, max_iter=None, matrix=None, return_info=False):
    """Adjoint state; pass the state ``matrix`` to skip re-assembly."""
    if matrix is None:
        matrix = assemble_matrix(mesh, mat, c)
    rhs = assemble_adjoint_rhs(mesh, u, u_d, c)
    return solve_cg(SparseSystem(matrix, rhs), tol, max_iter, None, return_info)


def objective(mesh, u, u_d, c):
    """Tracking cost ``alpha1 |u - u_d|^2_L2 + alpha2 |grad(u - u_d)|^2_L2``."""
    u = check_vertex_field(mesh, u, "u")
    u_d = check_vertex_field(mesh, u_d, "u_d")
    e = u - u_d
    value = 0.0
    if c.alpha1:
        value += c.alpha1 * float(e @ (mesh.mass_matrix @ e))
    if c.alpha2:
        value += c.alpha2 * float(e @ (mesh.stiffness_matrix @ e))
    return max(value, 0.0)


def element_gradient(mesh, f, t):
    """Constant tangential gradient of the P1 field ``f`` on triangle ``t``."""
    f = check_vertex_field(mesh, f, "f")
    if not 0 <= t < mesh.nt:
        raise IndexError(f"triangle index {t} out of range [0, {mesh.nt})")
    return f[mesh.triangles[t]] @ mesh.elem_basis_grad[t]


def element_gradients(mesh, f):
    """All element gradients at once, shape (nt, 3)."""
    f = check_vertex_field(mesh, f, "f")
    return np.einsum("ti,tik->tk", f[mesh.triangles], mesh.elem_basis_grad)


def solve_manufactured(mesh, tol=DEFAULT_TOL):
    """Solve ``-Lap u + u = 3 x1`` on a unit-sphere mesh.

    The exact solution is ``x1`` (a first spherical harmonic). The load is
    interpolated at the vertices. Returns the discrete solution and its
    L2 distance to the vertex interpolant of ``x1``.
    """
    exact = mesh.vertices[:, 0].copy()
    A = mesh.stiffness_matrix + mesh.mass_matrix
    b = mesh.mass_matrix @ (3.0 * exact)
    u = solve_cg(SparseSystem(A.tocsr(), b), tol)
    e = u - exact
    return u, float(np.sqrt(e @ (mesh.mass_matrix @ e)))
