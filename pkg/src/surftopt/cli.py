"""Command-line entry point: ``surftopt <command> [--config FILE] [--key value ...]``."""

import argparse
import logging
import os
import sys

import numpy as np

from . import io
from .config import COMMANDS, parse_config
from .errors import ConfigError, OutputError, SurftoptError
from .fem import solve_adjoint, solve_state
from .levelset import misclassified_area, optimize
from .mesh import build_icosphere, cap_indicator, load_off
from .topo_deriv import td_field
from .verify import (
    distance_to_interface,
    farthest_vertex,
    flip_geodesic_disk,
    geodesic_disk_area_exact,
    td_quotient_study,
)

logger = logging.getLogger("surftopt")


def load_mesh(cfg):
    if cfg.mesh is not None:
        return load_off(cfg.mesh)
    return build_icosphere(cfg.icosphere)


def _indicator(cfg, mesh, path, axis, angle_deg):
    if path is not None:
        return io.read_indicator(path, mesh)
    return cap_indicator(mesh, axis, np.radians(angle_deg))


def target_indicator(cfg, mesh):
    return _indicator(cfg, mesh, cfg.target, cfg.target_axis_vector, cfg.target_angle)


def design_indicator(cfg, mesh):
    return _indicator(cfg, mesh, cfg.design, cfg.design_axis_vector, cfg.design_angle)


def desired_state(cfg, mesh, c):
    if cfg.desired_state is not None:
        return io.read_field(cfg.desired_state, mesh)
    return solve_state(mesh, target_indicator(cfg, mesh), c, cfg.cg_tol)


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


def cmd_mesh_info(cfg, mesh):
    print(f"vertices      {mesh.nv}")
    print(f"triangles     {mesh.nt}")
    print(f"total_area    {mesh.total_area:.12g}")
    print(f"max_edge      {mesh.h:.6g}")
    if cfg.export_vtk:
        io.write_vtk(_out(cfg, "mesh.vtk"), mesh)


def cmd_solve(cfg, mesh):
    c = cfg.coefficients
    mat = target_indicator(cfg, mesh)
    u = solve_state(mesh, mat, c, cfg.cg_tol)
    io.write_field(_out(cfg, "u.txt"), u)
    io.write_indicator(_out(cfg, "target.txt"), mat)
    if cfg.export_vtk:
        io.write_vtk(_out(cfg, "solve.vtk"), mesh, {"u": u}, {"material": mat})
    print(f"solved state on {int(mat.sum())}/{mesh.nt} material-1 triangles; u in [{u.min():.6g}, {u.max():.6g}]")


def cmd_optimize(cfg, mesh):
    c = cfg.coefficients
    u_d = desired_state(cfg, mesh, c)
    state, mat = optimize(mesh, u_d, c, cfg.optimizer)
    print(f"status        {state.status}")
    print(f"iterations    {state.iteration} (+{state.null_steps} null steps)")
    print(f"J             {state.J_initial:.6e} -> {state.J:.6e}")

    target = None
    if cfg.desired_state is None:
        target = target_indicator(cfg, mesh)
        print(f"misclassified {misclassified_area(mesh, mat, target) / mesh.total_area:.4%} of the surface")

    if cfg.export_csv:
        if state.history:
            io.write_history_csv(_out(cfg, "history.csv"), state)
        else:
            print("no accepted iterations; history.csv not written")
    io.write_indicator(_out(cfg, "design.txt"), mat)
    if cfg.export_vtk:
        u = solve_state(mesh, mat, c, cfg.cg_tol)
        p = solve_adjoint(mesh, mat, c, u, u_d, cfg.cg_tol)
        td = td_field(mesh, state.psi, mat, u, p, c)
        cells = {"material": mat}
        if target is not None:
            cells["target"] = target
        io.write_vtk(
            _out(cfg, "final.vtk"), mesh,
            {"u": u, "u_d": u_d, "p": p, "psi": state.psi, "dJ": td.dJ, "g": td.g}, cells,
        )


def cmd_verify_td(cfg, mesh):
    c = cfg.coefficients
    design = design_indicator(cfg, mesh)
    u_d = desired_state(cfg, mesh, c)
    q = cfg.td_vertex
    if q < 0:
        q = farthest_vertex(mesh, design)
    if q >= mesh.nv:
        raise ConfigError(f"td_vertex {q} out of range", "td_vertex")
    dist = distance_to_interface(mesh, design, q)
    eps = cfg.eps_values
    if dist <= 3.0 * max(eps):
        logger.warning("vertex %d is only %.3g from the interface (< 3 eps_max)", q, dist)
    table = td_quotient_study(mesh, design, c, u_d, q, eps, cfg.cg_tol)
    print(f"vertex {q}, distance to interface {dist:.4g}, J0 = {table.J0:.10g}, formula dJ = {table.td_formula:.10g}")
    print(f"{'eps':>8} {'quotient':>14} {'rel_err':>10} {'area_mesh/exact':>16}")
    for r in table.rows:
        ratio = r.area_mesh / r.area_exact
        print(f"{r.eps:8.4g} {r.quotient:14.8g} {r.rel_err:10.4g} {ratio:16.4f}")
    if cfg.export_csv:
        io.write_quotient_csv(_out(cfg, "quotient.csv"), table)


def cmd_verify_area(cfg, mesh):
    q = int(np.argmax(mesh.vertices @ np.array([0.0, 0.0, 1.0])))
    empty = np.zeros(mesh.nt, dtype=bool)
    rows = []
    print(f"{'eps':>8} {'exact':>14} {'mesh':>14} {'exact/(pi eps^2)':>18}")
    for eps in cfg.eps_values:
        exact = geodesic_disk_area_exact(eps)
        _, measured = flip_geodesic_disk(mesh, empty, q, eps)
        flat = exact / (np.pi * eps**2)
        rows.append((eps, exact, measured, flat))
        print(f"{eps:8.4g} {exact:14.8g} {measured:14.8g} {flat:18.12f}")
    if cfg.export_csv:
        with io.atomic_write(_out(cfg, "area.csv")) as fh:
            fh.write("eps,area_exact,area_mesh,ratio_to_flat\n")
            for row in rows:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")


COMMAND_TABLE = {
    "mesh-info": cmd_mesh_info,
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "verify-td": cmd_verify_td,
    "verify-area": cmd_verify_area,
}


def run(cfg):
    """Execute a validated configuration; returns the process exit status."""
    try:
        try:
            os.makedirs(cfg.output_dir, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create output directory {cfg.output_dir}: {exc}") from exc
        if not os.access(cfg.output_dir, os.W_OK):
            raise OutputError(f"output directory {cfg.output_dir} is not writable")
        mesh = load_mesh(cfg)
        COMMAND_TABLE[cfg.command](cfg, mesh)
    except SurftoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OutputError.exit_code
    return 0


def _parse_overrides(tokens):
    overrides = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            try:
                value = next(it)
            except StopIteration:
                raise ConfigError(f"missing value for --{key}", key.replace("-", "_")) from None
        overrides[key.replace("-", "_")] = value
    return overrides


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="surftopt",
        description="Two-material topology optimization on closed surfaces.",
        epilog="Any config key can be overridden as --key value.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        overrides = _parse_overrides(rest)
        overrides["command"] = args.command
        cfg = parse_config(args.config, overrides)
    except SurftoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
