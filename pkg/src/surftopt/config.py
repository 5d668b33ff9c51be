"""Flat ``key = value`` run configuration.

Values come from three layers, later ones winning: built-in defaults, the
config file, then command-line overrides. ``SURFTOPT_OUTPUT_DIR`` in the
environment replaces the file's ``output_dir`` but not a command-line one.
"""

import dataclasses
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, UnsupportedConfigurationError
from .fem import DEFAULT_TOL, ProblemCoefficients
from .levelset import OptimizerConfig

COMMANDS = ("solve", "optimize", "verify-td", "verify-area", "mesh-info")
OUTPUT_DIR_ENV = "SURFTOPT_OUTPUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    command: str = "mesh-info"
    # mesh source: exactly one
    mesh: Optional[str] = None
    icosphere: Optional[int] = None
    # coefficients; defaults are the land/water earth experiment
    beta1: float = 1e4
    beta2: float = 1e-3
    gamma1: float = 1.0
    gamma2: float = 1.0
    f1: float = 1e3
    f2: float = 0.0
    alpha1: float = 1.0
    alpha2: float = 0.0
    # optimizer
    kappa_max: float = 0.05
    kappa_growth: float = 1.1
    kappa_min: float = 1e-4
    max_halvings: int = 20
    max_iterations: int = 100
    max_null_steps: int = 200
    angle_tol: float = 1e-3
    cg_tol: float = DEFAULT_TOL
    # target design: indicator file, or a cap (axis, polar angle in degrees)
    target: Optional[str] = None
    target_axis: str = "0,0,1"
    target_angle: float = 60.0
    desired_state: Optional[str] = None
    # current design for verify-td: indicator file or cap
    design: Optional[str] = None
    design_axis: str = "0,0,1"
    design_angle: float = 30.0
    eps_list: str = "0.3,0.2,0.15,0.1"
    td_vertex: int = -1
    output_dir: str = "out"
    export_vtk: bool = True
    export_csv: bool = True

    @property
    def coefficients(self):
        return ProblemCoefficients(
            beta1=self.beta1, beta2=self.beta2, gamma1=self.gamma1, gamma2=self.gamma2,
            f1=self.f1, f2=self.f2, alpha1=self.alpha1, alpha2=self.alpha2,
        )

    @property
    def optimizer(self):
        return OptimizerConfig(
            kappa_max=self.kappa_max, kappa_growth=self.kappa_growth, kappa_min=self.kappa_min,
            max_halvings=self.max_halvings, max_iterations=self.max_iterations,
            max_null_steps=self.max_null_steps, angle_tol=self.angle_tol, cg_tol=self.cg_tol,
        )

    @property
    def eps_values(self):
        return parse_float_list(self.eps_list, "eps_list")

    @property
    def target_axis_vector(self):
        return parse_axis(self.target_axis, "target_axis")

    @property
    def design_axis_vector(self):
        return parse_axis(self.design_axis, "design_axis")


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_float_list(text, key):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}", key) from None
    if not values:
        raise ConfigError(f"{key}: empty list", key)
    return values


def parse_axis(text, key):
    v = parse_float_list(text, key)
    if len(v) != 3 or not np.linalg.norm(v) > 0.0:
        raise ConfigError(f"{key}: expected a non-zero 3-vector, got {text!r}", key)
    return np.asarray(v) / np.linalg.norm(v)


def _coerce(key, raw):
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}", key)
    ftype = FIELDS[key].type
    raw = raw.strip()
    optional = ftype in (Optional[str], Optional[int])
    if optional and raw.lower() in ("", "none"):
        return None
    base = {Optional[str]: str, Optional[int]: int}.get(ftype, ftype)
    try:
        if base is bool:
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError
        if base is int:
            return int(raw)
        if base is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {base.__name__}", key) from None


def read_config_file(path):
    """Parse a ``key = value`` file into a dict of raw strings."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    entries = {}
    for lineno, line in enumerate(lines, start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {content!r}")
        key, value = (s.strip() for s in content.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}", key)
        entries[key] = value
    return entries


def parse_config(path=None, overrides=None, env=None):
    """Build and validate a :class:`RunConfig`.

    ``overrides`` maps keys to raw string values and wins over the file.
    """
    env = os.environ if env is None else env
    raw = read_config_file(path) if path is not None else {}
    if env.get(OUTPUT_DIR_ENV):
        raw["output_dir"] = env[OUTPUT_DIR_ENV]
    for key, value in (overrides or {}).items():
        raw[key.replace("-", "_")] = value
    values = {key: _coerce(key, value) for key, value in raw.items()}
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}; expected one of {', '.join(COMMANDS)}", "command")
    if (cfg.mesh is None) == (cfg.icosphere is None):
        raise ConfigError("exactly one of 'mesh' and 'icosphere' must be given", "mesh")
    if cfg.icosphere is not None and cfg.icosphere < 0:
        raise ConfigError("icosphere level must be non-negative", "icosphere")
    c = cfg.coefficients
    cfg.optimizer
    cfg.target_axis_vector
    cfg.design_axis_vector
    eps = cfg.eps_values
    if any(not 0.0 < e < np.pi for e in eps):
        raise ConfigError("eps_list entries must lie in (0, pi)", "eps_list")
    if cfg.command == "verify-td" and any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps_list must be strictly decreasing", "eps_list")
    for key in ("target_angle", "design_angle"):
        if not 0.0 <= getattr(cfg, key) <= 180.0:
            raise ConfigError(f"{key} must lie in [0, 180] degrees", key)
    if cfg.command in ("optimize", "verify-td") and c.alpha2 != 0.0:
        raise UnsupportedConfigurationError(
            f"{cfg.command} needs alpha2 = 0: the closed-form topological derivative does not cover gradient tracking",
            "alpha2",
        )
    if not cfg.output_dir:
        raise ConfigError("output_dir must not be empty", "output_dir")
    return cfg
