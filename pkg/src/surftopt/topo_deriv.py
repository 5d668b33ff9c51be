"""Closed-form topological derivative for disk-shaped inclusions.

For d = 3, a geodesic-disk inclusion and a pure L2 tracking cost, the
sensitivity of nucleating material 1 at a point q outside the design is

    2 b2 (b1 - b2)/(b1 + b2) grad u . grad p + (g1 - g2) u p - (f1 - f2) p

and, for q inside the design, the same expression with materials 1 and 2
exchanged. The gradient factor comes from the explicit solution of the
planar transmission problem around the unit ball, see
:class:`PolarizationField`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CoefficientError, ConfigError, DegenerateDescentError, UnsupportedConfigurationError
from .fem import element_gradients
from .mesh import check_indicator, check_vertex_field, l2_inner, l2_norm

NORM_TOL = 1e-8


def polarization_coefficient(beta1, beta2, d=3):
    """Slope of the interior polarization solution, ``-(b1 - b2) / (b1 + (d - 2) b2)``."""
    if not (beta1 > 0 and beta2 > 0):
        raise CoefficientError(f"diffusion coefficients must be positive, got {beta1}, {beta2}")
    if int(d) != d or d < 2:
        raise ConfigError(f"dimension must be an integer >= 2, got {d}")
    return -(beta1 - beta2) / (beta1 + (d - 2) * beta2)


@dataclass(frozen=True)
class PolarizationField:
    """Solution ``Q_{e_i}`` of the transmission problem in R^{d-1} for the unit ball.

    Inside the ball it is ``a x_i``; outside ``a x_i / |x|^(d-1)``. ``i`` is
    1-based, as in ``e_1, ..., e_{d-1}``. ``coefficient`` replaces the
    transmission-consistent ``a``, e.g. to probe :func:`check_transmission`
    with a wrong value.
    """

    beta1: float
    beta2: float
    d: int = 3
    i: int = 1
    coefficient: float = None

    def __post_init__(self):
        if not 1 <= self.i <= self.d - 1:
            raise ConfigError(f"direction index must lie in 1..{self.d - 1}, got {self.i}")
        polarization_coefficient(self.beta1, self.beta2, self.d)

    @property
    def a(self):
        if self.coefficient is not None:
            return self.coefficient
        return polarization_coefficient(self.beta1, self.beta2, self.d)

    def _a(self, dtype):
        if self.coefficient is not None:
            return dtype(self.coefficient)
        return polarization_coefficient(dtype(self.beta1), dtype(self.beta2), self.d)

    def gradient_inner(self, x, dtype=float):
        x = np.atleast_2d(np.asarray(x, dtype=dtype))
        g = np.zeros_like(x)
        g[:, self.i - 1] = self._a(dtype)
        return g

    def gradient_outer(self, x, dtype=float):
        # grad(x_i |x|^-m) = e_i |x|^-m - m x_i x |x|^-(m+2),  m = d - 1
        x = np.atleast_2d(np.asarray(x, dtype=dtype))
        m = self.d - 1
        r = np.sqrt(np.sum(x * x, axis=1))
        g = -m * (x[:, self.i - 1] / r ** (m + 2))[:, None] * x
        g[:, self.i - 1] += r ** (-m)
        return self._a(dtype) * g


def polarization_eval(p, x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    xi = x[p.i - 1]
    if r <= 1.0:
        return p.a * xi
    return p.a * xi / r ** (p.d - 1)


def _unit_sphere_samples(dim, count):
    if dim == 1:
        return np.where(np.arange(count) % 2 == 0, 1.0, -1.0)[:, None]
    if dim == 2:
        phi = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    x = np.random.default_rng(0).standard_normal((count, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def check_transmission(p, sample_count=64):
    """Largest flux-jump residual of ``p`` on the unit sphere of R^{d-1}.

    At each sample point x (outer normal n = x) evaluates
    ``(b1 grad Q_in - b2 grad Q_out) . n + (b1 - b2) e_i . n``.
    """
    if sample_count < 3:
        raise ValueError("sample_count must be at least 3")
    # extended precision: flux terms reach max(b1, b2) so float64 round-off
    # alone would be ~1e-12 for contrasts near 1e4
    ld = np.longdouble
    x = _unit_sphere_samples(p.d - 1, sample_count).astype(ld)
    x /= np.sqrt(np.sum(x * x, axis=1))[:, None]
    b1, b2 = ld(p.beta1), ld(p.beta2)
    flux = np.sum((b1 * p.gradient_inner(x, ld) - b2 * p.gradient_outer(x, ld)) * x, axis=1)
    residual = flux + (b1 - b2) * x[:, p.i - 1]
    return float(np.max(np.abs(residual)))


def recover_vertex_gradient(mesh, f):
    """Area-weighted average of the incident element gradients, shape (nv, 3)."""
    ge = element_gradients(mesh, f) * mesh.elem_area[:, None]
    out = np.empty((mesh.nv, 3))
    idx = mesh.triangles.ravel()
    for k in range(3):
        out[:, k] = np.bincount(idx, weights=np.repeat(ge[:, k], 3), minlength=mesh.nv)
    weight = np.bincount(idx, weights=np.repeat(mesh.elem_area, 3), minlength=mesh.nv)
    return out / weight[:, None]


@dataclass(frozen=True)
class TDField:
    dJ: np.ndarray
    g: np.ndarray
    inside: np.ndarray


def td_field(mesh, psi, mat, u, p, c):
    """Topological derivative and generalized topological derivative at the vertices.

    A vertex q is treated as inside the design when ``psi(q) < 0``; there the
    material-swapped formula applies and ``g = -dJ``, elsewhere ``g = dJ``.
    ``mat`` must be the material layout ``u`` and ``p`` were computed on.
    """
    if c.alpha2 != 0.0:
        raise UnsupportedConfigurationError(
            "closed-form topological derivative requires alpha2 = 0 (gradient tracking unsupported)", "alpha2"
        )
    psi = check_vertex_field(mesh, psi, "psi")
    check_indicator(mesh, mat, "mat")
    u = check_vertex_field(mesh, u, "u")
    p = check_vertex_field(mesh, p, "p")

    grad_dot = np.einsum("vk,vk->v", recover_vertex_gradient(mesh, u), recover_vertex_gradient(mesh, p))
    up = u * p

    b1, b2 = c.beta1, c.beta2
    outside_val = 2.0 * b2 * (b1 - b2) / (b1 + b2) * grad_dot + (c.gamma1 - c.gamma2) * up - (c.f1 - c.f2) * p
    inside_val = 2.0 * b1 * (b2 - b1) / (b2 + b1) * grad_dot + (c.gamma2 - c.gamma1) * up - (c.f2 - c.f1) * p

    inside = psi < 0.0
    dJ = np.where(inside, inside_val, outside_val)
    g = np.where(inside, -dJ, dJ)
    return TDField(dJ=dJ, g=g, inside=inside)


def stationarity_angle(mesh, psi, g):
    """L2 angle between the unit-norm level set and the direction ``g``."""
    psi_norm = l2_norm(mesh, psi)
    if abs(psi_norm - 1.0) > NORM_TOL:
        raise ValueError(f"level set must have unit L2 norm, got {psi_norm:.12g}")
    g_norm = l2_norm(mesh, g)
    if not g_norm > 0.0:
        raise DegenerateDescentError("generalized topological derivative vanishes")
    cos = l2_inner(mesh, psi, g) / g_norm
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))
