"""File output: legacy VTK, CSV tables and plain-text field files.

All writers go through a temporary file in the target directory and
rename it into place, so an interrupted run never leaves a truncated file.
"""

import contextlib
import csv
import os
import tempfile

import numpy as np

from .errors import BindingError, ConfigError, OutputError
from .mesh import check_indicator, check_vertex_field, material_labels

HISTORY_HEADER = ["iter", "J", "theta", "kappa", "cg_iters"]
QUOTIENT_HEADER = ["eps", "area_exact", "area_mesh", "J_pert", "quotient", "td_formula", "rel_err"]


@contextlib.contextmanager
def atomic_write(path):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    except OSError as exc:
        raise OutputError(f"cannot write to {directory}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(f"failed writing {path}: {exc}") from exc
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _num(x):
    # 17 significant digits round-trip every double
    return format(float(x), ".17g")


def _csv_num(x):
    return repr(float(x))


def _check_name(name):
    if not name or any(ch.isspace() for ch in name):
        raise ValueError(f"invalid VTK array name {name!r}")


def write_vtk(path, mesh, point_data=None, cell_data=None, title="surftopt"):
    """Write a legacy ASCII VTK POLYDATA file.

    ``point_data`` maps names to vertex fields, ``cell_data`` maps names to
    per-triangle arrays. Boolean cell arrays are treated as material
    indicators and written as labels 1/2.
    """
    point_data = dict(point_data or {})
    cell_data = dict(cell_data or {})
    for name, f in point_data.items():
        _check_name(name)
        point_data[name] = check_vertex_field(mesh, f, name)
    for name, f in cell_data.items():
        _check_name(name)
        f = np.asarray(f)
        if f.shape != (mesh.nt,):
            raise BindingError(f"cell field {name} has shape {f.shape}, expected ({mesh.nt},)")
        cell_data[name] = material_labels(f) if f.dtype == bool else f

    with atomic_write(path) as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET POLYDATA\n")
        fh.write(f"POINTS {mesh.nv} double\n")
        for x in mesh.vertices:
            fh.write(f"{_num(x[0])} {_num(x[1])} {_num(x[2])}\n")
        fh.write(f"POLYGONS {mesh.nt} {4 * mesh.nt}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        if point_data:
            fh.write(f"POINT_DATA {mesh.nv}\n")
            for name, f in point_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.writelines(f"{_num(v)}\n" for v in f)
        if cell_data:
            fh.write(f"CELL_DATA {mesh.nt}\n")
            for name, f in cell_data.items():
                if np.issubdtype(f.dtype, np.integer):
                    fh.write(f"SCALARS {name} int 1\nLOOKUP_TABLE default\n")
                    fh.writelines(f"{int(v)}\n" for v in f)
                else:
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    fh.writelines(f"{_num(v)}\n" for v in f)


def write_history_csv(path, state):
    if not state.history:
        raise ValueError("optimizer history is empty")
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for row in state.history:
            w.writerow([row.iteration, _csv_num(row.J), _csv_num(row.theta), _csv_num(row.kappa), row.cg_iters])


def write_quotient_csv(path, table):
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QUOTIENT_HEADER)
        for r in table.rows:
            w.writerow([_csv_num(v) for v in (r.eps, r.area_exact, r.area_mesh, r.J_pert, r.quotient, r.td_formula, r.rel_err)])


def write_field(path, values):
    """Plain-text field: the count on the first line, then one value per line."""
    values = np.asarray(values, dtype=float).ravel()
    with atomic_write(path) as fh:
        fh.write(f"{len(values)}\n")
        fh.writelines(f"{_num(v)}\n" for v in values)


def read_field(path, mesh=None):
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read field file {path}: {exc}") from exc
    try:
        n = int(lines[0])
        values = np.array([float(x) for x in lines[1:]])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"malformed field file {path}: {exc}") from exc
    if len(values) != n:
        raise ConfigError(f"field file {path} declares {n} values but holds {len(values)}")
    if mesh is not None:
        check_vertex_field(mesh, values, os.fspath(path))
    return values


def write_indicator(path, mat):
    labels = material_labels(mat)
    with atomic_write(path) as fh:
        fh.write(f"{len(labels)}\n")
        fh.writelines(f"{v}\n" for v in labels)


def read_indicator(path, mesh=None):
    """Read a per-triangle label file (count, then labels 1 or 2) as a boolean indicator."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read indicator file {path}: {exc}") from exc
    try:
        n = int(lines[0])
        labels = np.array([int(x) for x in lines[1:]])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"malformed indicator file {path}: {exc}") from exc
    if len(labels) != n:
        raise ConfigError(f"indicator file {path} declares {n} labels but holds {len(labels)}")
    if not np.all((labels == 1) | (labels == 2)):
        raise ConfigError(f"indicator file {path} contains labels other than 1 and 2")
    mat = labels == 1
    if mesh is not None:
        check_indicator(mesh, mat, os.fspath(path))
    return mat
