import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surftopt.errors import BindingError, MeshError, MeshResourceError, OffParseError, OpenSurfaceError
from surftopt.mesh import (
    SurfaceMesh,
    build_icosphere,
    cap_indicator,
    classify_elements,
    l2_inner,
    l2_norm,
    load_off,
    write_off,
)

TETRA_V = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
TETRA_T = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def test_icosphere_counts(ico):
    m0 = ico(0)
    assert (m0.nv, m0.nt) == (12, 20)
    assert ico(3).nt == 1280
    assert ico(5).nt == 20480
    for k in range(5):
        m = ico(k)
        assert m.nt == 20 * 4**k
        assert m.nv == 10 * 4**k + 2
        np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 1.0, atol=1e-14)


def test_icosphere_area_converges_from_below(ico):
    areas = [ico(k).total_area for k in range(6)]
    assert abs(areas[3] / (4 * np.pi) - 1) < 0.01
    assert all(a < 4 * np.pi for a in areas)
    assert all(b > a for a, b in zip(areas, areas[1:]))


def test_icosphere_resource_guard():
    with pytest.raises(MeshResourceError):
        build_icosphere(9)
    with pytest.raises(ValueError):
        build_icosphere(-1)


def test_mesh_is_immutable(ico):
    m = ico(1)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 2.0
    with pytest.raises(ValueError):
        m.elem_area[0] = 2.0


def test_rejects_degenerate_inputs():
    with pytest.raises(MeshError):
        SurfaceMesh(TETRA_V, TETRA_T + 1)
    with pytest.raises(OpenSurfaceError):
        SurfaceMesh(TETRA_V, TETRA_T[:3])
    flat = TETRA_V.copy()
    flat[3] = [0.5, 0.5, 0.0]
    with pytest.raises(MeshError, match="area"):
        SurfaceMesh(np.vstack([flat, [[0.2, 0.2, 0.0]]]), TETRA_T)


def test_basis_gradient_partition_of_unity_and_tangency(ico):
    m = ico(3)
    G = m.elem_basis_grad
    scale = np.abs(G).max()
    assert np.abs(G.sum(axis=1)).max() < 1e-12 * scale
    assert np.abs(np.einsum("tij,tj->ti", G, m.elem_normal)).max() < 1e-12 * scale


def test_basis_gradient_reproduces_linear_functions(rng):
    # the discrete gradient of a linear function is its projection onto the triangle plane
    m = SurfaceMesh(TETRA_V, TETRA_T)
    a = rng.normal(size=3)
    f = m.vertices @ a
    grads = np.einsum("tij,ti->tj", m.elem_basis_grad, f[m.triangles])
    n = m.elem_normal
    expected = a - (n @ a)[:, None] * n
    np.testing.assert_allclose(grads, expected, atol=1e-13)


def test_element_mass_matches_quadrature(rng):
    # independent check of area/12 [2 1 1; 1 2 1; 1 1 2] with the 3 edge-midpoint rule (exact for quadratics)
    m = SurfaceMesh(TETRA_V + rng.normal(scale=0.05, size=(4, 3)), TETRA_T)
    mids = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    for t in range(m.nt):
        M = m.elem_area[t] / 3.0 * mids.T @ mids
        np.testing.assert_allclose(m.elem_mass[t], M, rtol=1e-13)


def test_classify_constant_fields(ico):
    m = ico(2)
    assert classify_elements(m, -np.ones(m.nv)).all()
    assert not classify_elements(m, np.ones(m.nv)).any()
    assert not classify_elements(m, np.zeros(m.nv)).any()


def test_classify_hemispheres(ico):
    m = ico(3)
    n1 = classify_elements(m, m.vertices[:, 2]).sum()
    assert abs(n1 - m.nt / 2) <= 0.02 * m.nt / 2


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1e6), st.integers(0, 2**31 - 1))
def test_classify_scale_invariant(scale, seed):
    m = build_icosphere(2)
    psi = np.random.default_rng(seed).normal(size=m.nv)
    np.testing.assert_array_equal(classify_elements(m, psi), classify_elements(m, scale * psi))


def test_classify_binding(ico):
    with pytest.raises(BindingError):
        classify_elements(ico(1), np.ones(ico(0).nv))


def test_l2_inner_examples(ico):
    m = ico(4)
    one = np.ones(m.nv)
    assert l2_inner(m, one, one) == pytest.approx(m.total_area, rel=1e-13)
    assert abs(m.total_area / (4 * np.pi) - 1) < 0.005
    assert abs(l2_inner(m, one, m.vertices[:, 2])) < 1e-10 * m.total_area
    assert l2_inner(m, 0 * one, 0 * one) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-10, 10), st.floats(-10, 10))
def test_l2_inner_bilinear_symmetric_positive(seed, a, b):
    m = build_icosphere(2)
    r = np.random.default_rng(seed)
    f, g, h = r.normal(size=(3, m.nv))
    assert l2_inner(m, f, g) == pytest.approx(l2_inner(m, g, f), rel=1e-12, abs=1e-12)
    lhs = l2_inner(m, a * f + b * g, h)
    rhs = a * l2_inner(m, f, h) + b * l2_inner(m, g, h)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)
    assert l2_inner(m, f, f) > 0.0
    assert l2_norm(m, f) == pytest.approx(np.sqrt(l2_inner(m, f, f)))


def test_cap_indicator_area(ico):
    m = ico(5)
    cap = cap_indicator(m, [0, 0, 1], np.pi / 3)
    exact = 2 * np.pi * (1 - np.cos(np.pi / 3))
    assert m.elem_area[cap].sum() == pytest.approx(exact, rel=0.02)
    assert not cap_indicator(m, [0, 0, 1], 0.0).any()


def _write(tmp_path, text):
    p = tmp_path / "m.off"
    p.write_text(text)
    return p


def test_off_roundtrip(ico, tmp_path):
    m = ico(0)
    p = tmp_path / "ico.off"
    write_off(p, m)
    m2 = load_off(p)
    assert (m2.nv, m2.nt) == (12, 20)
    np.testing.assert_array_equal(m2.vertices, m.vertices)
    np.testing.assert_array_equal(m2.triangles, m.triangles)


def test_off_quad_face(tmp_path):
    p = _write(tmp_path, "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    with pytest.raises(OffParseError, match="triangle") as exc:
        load_off(p)
    assert exc.value.lineno == 7


def test_off_single_triangle_is_open(tmp_path):
    p = _write(tmp_path, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    with pytest.raises(OpenSurfaceError):
        load_off(p)


def test_off_parse_errors(tmp_path):
    with pytest.raises(OffParseError) as exc:
        load_off(_write(tmp_path, "OFF\n4 4 0\n0 0 0\n1 0 x\n"))
    assert exc.value.lineno == 4
    with pytest.raises(OffParseError):
        load_off(_write(tmp_path, "PLY\n"))
    with pytest.raises(MeshError):
        load_off(tmp_path / "missing.off")


def test_off_comments_and_tetrahedron(tmp_path):
    lines = ["OFF", "# a tetrahedron", "4 4 6"]
    lines += [" ".join(map(str, v)) for v in TETRA_V]
    lines += ["3 " + " ".join(map(str, t)) for t in TETRA_T]
    m = load_off(_write(tmp_path, "\n".join(lines) + "\n"))
    assert (m.nv, m.nt) == (4, 4)
