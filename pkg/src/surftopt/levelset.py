"""Level-set topology optimization driven by the topological derivative.

The design is ``{psi < 0}`` for a level set ``psi`` on the unit sphere of
L2(M). Each iteration rotates ``psi`` towards the generalized topological
derivative ``g`` along the great circle joining them (SLERP) by a fraction
``kappa`` of the angle between them; ``kappa`` is halved until the cost
decreases, and grown again after every accepted step.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlreadyStationary,
    AntipodalDegeneracyError,
    ConfigError,
    DegenerateDescentError,
    UnsupportedConfigurationError,
)
from .fem import DEFAULT_TOL, assemble_matrix, assemble_state, objective, solve_adjoint, solve_cg
from .mesh import check_indicator, check_vertex_field, classify_elements, l2_norm
from .topo_deriv import NORM_TOL, stationarity_angle, td_field

logger = logging.getLogger(__name__)

STATIONARY_ANGLE = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    kappa_max: float = 0.05
    kappa_growth: float = 1.1
    kappa_min: float = 1e-4
    max_halvings: int = 20
    max_iterations: int = 100
    max_null_steps: int = 200
    angle_tol: float = 1e-3
    cg_tol: float = DEFAULT_TOL
    cg_max_iter: int = None

    def __post_init__(self):
        if not 0.0 < self.kappa_min < self.kappa_max <= 1.0:
            raise ConfigError("need 0 < kappa_min < kappa_max <= 1", "kappa_max")
        if not self.kappa_growth > 1.0:
            raise ConfigError("kappa_growth must exceed 1", "kappa_growth")
        if self.angle_tol < 0.0:
            raise ConfigError("angle_tol must be non-negative", "angle_tol")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative", "max_iterations")
        if self.max_null_steps < 0:
            raise ConfigError("max_null_steps must be non-negative", "max_null_steps")
        if self.max_halvings < 0:
            raise ConfigError("max_halvings must be non-negative", "max_halvings")


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    J: float
    theta: float
    kappa: float
    cg_iters: int


@dataclass
class OptimizerState:
    iteration: int
    psi: np.ndarray
    J: float
    kappa: float
    J_initial: float = None
    theta: float = None
    status: str = "running"
    null_steps: int = 0
    mat: np.ndarray = None
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class Evaluation:
    J: float
    mat: np.ndarray
    u: np.ndarray


class DesignProblem:
    """Reduced cost ``psi -> J(u(Omega(psi)))`` with CG iteration bookkeeping."""

    def __init__(self, mesh, u_d, coefficients, cg_tol=DEFAULT_TOL, cg_max_iter=None):
        self.mesh = mesh
        self.u_d = check_vertex_field(mesh, u_d, "u_d")
        self.c = coefficients
        self.cg_tol = cg_tol
        self.cg_max_iter = cg_max_iter
        self.cg_iterations = 0

    def _solve(self, system):
        x, info = solve_cg(system, self.cg_tol, self.cg_max_iter, return_info=True)
        self.cg_iterations += info.iterations
        return x

    def evaluate_design(self, mat):
        u = self._solve(assemble_state(self.mesh, mat, self.c))
        return Evaluation(objective(self.mesh, u, self.u_d, self.c), mat, u)

    def __call__(self, psi):
        return self.evaluate_design(classify_elements(self.mesh, psi))

    def adjoint(self, ev):
        p, info = solve_adjoint(
            self.mesh, ev.mat, self.c, ev.u, self.u_d, self.cg_tol, self.cg_max_iter,
            matrix=assemble_matrix(self.mesh, ev.mat, self.c), return_info=True,
        )
        self.cg_iterations += info.iterations
        return p


def init_levelset(mesh, mode="all_water", mat=None):
    """Unit-norm initial level set.

    ``all_water`` gives the empty design, ``all_land`` the full one and
    ``from_indicator`` takes the sign of the majority vote of the triangles
    around each vertex (ties count as outside).
    """
    if mode == "all_water":
        psi = np.ones(mesh.nv)
    elif mode == "all_land":
        psi = -np.ones(mesh.nv)
    elif mode == "from_indicator":
        if mat is None:
            raise ConfigError("from_indicator needs a material indicator")
        mat = check_indicator(mesh, mat)
        votes = np.bincount(mesh.triangles.ravel(), weights=np.repeat(np.where(mat, -1.0, 1.0), 3), minlength=mesh.nv)
        psi = np.where(votes < 0.0, -1.0, 1.0)
    else:
        raise ConfigError(f"unknown initialization mode {mode!r}")
    return psi / l2_norm(mesh, psi)


def slerp_step(mesh, psi, g, kappa, theta, renormalize=True):
    """Move ``psi`` a fraction ``kappa`` of the angle ``theta`` towards ``g / |g|``.

    The combination has unit norm when ``theta`` is the exact angle between
    ``psi`` and ``g``; round-off drift is logged and removed unless
    ``renormalize`` is false.
    """
    if not 0.0 < kappa <= 1.0:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    if theta < STATIONARY_ANGLE:
        raise AlreadyStationary(f"angle {theta:.3e} below {STATIONARY_ANGLE}")
    if theta >= np.pi:
        raise AntipodalDegeneracyError("level set and descent direction are antipodal")
    g_norm = l2_norm(mesh, g)
    if not g_norm > 0.0:
        raise DegenerateDescentError("descent direction has zero norm")
    new = (np.sin((1.0 - kappa) * theta) * psi + np.sin(kappa * theta) * (g / g_norm)) / np.sin(theta)
    norm = l2_norm(mesh, new)
    drift = abs(norm - 1.0)
    if drift > NORM_TOL:
        logger.warning("SLERP norm drift %.3e before renormalization", drift)
    elif drift > 0.0:
        logger.debug("SLERP norm drift %.3e", drift)
    return new / norm if renormalize else new


@dataclass(frozen=True)
class LineSearchResult:
    accepted: bool
    psi: np.ndarray
    J: float
    kappa: float
    next_kappa: float
    theta: float
    trials: int
    evaluation: object = None
    plateau: bool = False


def line_search(mesh, state, g, evaluate, cfg, theta=None):
    """Backtracking on ``kappa`` until the cost drops below ``state.J``.

    ``evaluate(psi)`` returns the cost, either as a number or as an object
    with a ``J`` attribute. A failed search (``kappa`` below ``kappa_min`` or
    more than ``max_halvings`` halvings) is reported through
    ``accepted=False``; nothing is raised.

    If ``state.mat`` is set, a trial that reproduces the current material
    layout is recognised without solving: the cost is exactly unchanged and
    any smaller ``kappa`` would not alter the layout either. The search then
    stops with ``plateau=True`` and the rotated level set in ``psi`` so the
    caller can take it as a null step.
    """
    if theta is None:
        theta = stationarity_angle(mesh, state.psi, g)
    kappa = min(state.kappa, cfg.kappa_max)
    trials = 0
    halvings = 0
    while kappa >= cfg.kappa_min and halvings <= cfg.max_halvings:
        candidate = slerp_step(mesh, state.psi, g, kappa, theta)
        if state.mat is not None and np.array_equal(classify_elements(mesh, candidate), state.mat):
            return LineSearchResult(False, candidate, state.J, kappa, kappa, theta, trials, plateau=True)
        out = evaluate(candidate)
        J = float(getattr(out, "J", out))
        trials += 1
        if J < state.J:
            next_kappa = min(kappa * cfg.kappa_growth, cfg.kappa_max)
            return LineSearchResult(True, candidate, J, kappa, next_kappa, theta, trials, out)
        logger.debug("kappa=%.4g rejected: J=%.6g >= %.6g", kappa, J, state.J)
        kappa *= 0.5
        halvings += 1
    return LineSearchResult(False, state.psi, state.J, kappa, kappa, theta, trials)


def optimize(mesh, u_d, c, cfg=None, psi0=None, callback=None):
    """Run the level-set loop from ``psi0`` (default: empty design).

    Returns the final :class:`OptimizerState` and material indicator. The
    loop stops after ``cfg.max_iterations`` accepted steps, when the angle
    between ``psi`` and ``g`` drops to ``cfg.angle_tol`` (or ``g`` vanishes),
    or when the line search fails; ``state.status`` records which.
    """
    cfg = cfg or OptimizerConfig()
    if c.alpha2 != 0.0:
        raise UnsupportedConfigurationError("optimization requires alpha2 = 0", "alpha2")
    problem = DesignProblem(mesh, u_d, c, cfg.cg_tol, cfg.cg_max_iter)
    psi = init_levelset(mesh) if psi0 is None else check_vertex_field(mesh, psi0, "psi0") / l2_norm(mesh, psi0)

    ev = problem(psi)
    state = OptimizerState(iteration=0, psi=psi, J=ev.J, kappa=cfg.kappa_max, J_initial=ev.J, mat=ev.mat)
    logger.info("initial J = %.6e", ev.J)

    p = None
    cg_before = problem.cg_iterations
    while True:
        if state.iteration >= cfg.max_iterations:
            state.status = "max_iterations"
            break
        if p is None:
            p = problem.adjoint(ev)
        td = td_field(mesh, state.psi, ev.mat, ev.u, p, c)
        try:
            theta = stationarity_angle(mesh, state.psi, td.g)
        except DegenerateDescentError:
            state.status = "stationary"
            break
        state.theta = theta
        if theta <= max(cfg.angle_tol, STATIONARY_ANGLE):
            state.status = "stationary"
            break
        ls = line_search(mesh, state, td.g, problem, cfg, theta=theta)
        if ls.plateau:
            # design and therefore u, p unchanged; only psi rotates
            if state.null_steps >= cfg.max_null_steps:
                state.status = "null_step_limit"
                break
            state.null_steps += 1
            state.psi = ls.psi
            logger.debug("null step %d at kappa=%.4g", state.null_steps, ls.kappa)
            continue
        if not ls.accepted:
            state.status = "line_search_failed"
            logger.info("line search failed at iteration %d", state.iteration)
            break
        ev = ls.evaluation
        p = None
        state.iteration += 1
        state.psi = ls.psi
        state.mat = ev.mat
        state.J = ls.J
        state.kappa = ls.next_kappa
        row = HistoryRow(state.iteration, ls.J, theta, ls.kappa, problem.cg_iterations - cg_before)
        cg_before = problem.cg_iterations
        state.history.append(row)
        logger.info("iter %3d  J=%.6e  theta=%.4f  kappa=%.4g", row.iteration, row.J, row.theta, row.kappa)
        if callback is not None:
            callback(state, ev)

    return state, ev.mat


def misclassified_area(mesh, mat, target):
    mat = check_indicator(mesh, mat)
    target = check_indicator(mesh, target, "target")
    return float(np.sum(mesh.elem_area[mat != target]))
