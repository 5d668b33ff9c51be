"""Topology optimization of two-material layouts on closed surfaces."""

from .errors import SurftoptError
from .fem import ProblemCoefficients, objective, solve_adjoint, solve_state
from .levelset import OptimizerConfig, optimize
from .mesh import SurfaceMesh, build_icosphere, classify_elements, l2_inner, load_off
from .topo_deriv import td_field

__all__ = [
    "OptimizerConfig",
    "ProblemCoefficients",
    "SurfaceMesh",
    "SurftoptError",
    "build_icosphere",
    "classify_elements",
    "l2_inner",
    "load_off",
    "objective",
    "optimize",
    "solve_adjoint",
    "solve_state",
    "td_field",
]

__version__ = "0.1.0"
