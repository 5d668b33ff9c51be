import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surftopt.errors import HypothesisViolationError
from surftopt.fem import ProblemCoefficients, solve_state
from surftopt.mesh import cap_indicator
from surftopt.verify import (
    distance_to_interface,
    farthest_vertex,
    flip_geodesic_disk,
    geodesic_disk_area_exact,
    sphere_exp_map,
    td_quotient_study,
    vertex_material,
)


def test_exp_map_examples():
    e1, e3 = np.eye(3)[0], np.eye(3)[2]
    np.testing.assert_array_equal(sphere_exp_map(e3, np.zeros(3)), e3)
    np.testing.assert_allclose(sphere_exp_map(e3, np.pi / 2 * e1), e1, atol=1e-15)
    with pytest.raises(ValueError):
        sphere_exp_map(e3, e3)
    with pytest.raises(ValueError):
        sphere_exp_map(2 * e3, e1)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    st.floats(0.0, 10.0),
)
def test_exp_map_unit_norm_and_distance(qraw, vraw, t):
    q = np.array(qraw)
    if np.linalg.norm(q) < 1e-3:
        return
    q /= np.linalg.norm(q)
    v = np.array(vraw) - (np.array(vraw) @ q) * q
    if np.linalg.norm(v) < 1e-3:
        return
    v *= t / np.linalg.norm(v)
    x = sphere_exp_map(q, v)
    assert abs(np.linalg.norm(x) - 1.0) < 1e-12
    # geodesic distance equals |v| modulo full turns
    d = np.arccos(np.clip(x @ q, -1, 1))
    t_mod = t % (2 * np.pi)
    assert d == pytest.approx(min(t_mod, 2 * np.pi - t_mod), abs=1e-6)


def test_exp_map_first_order():
    q = np.array([0.0, 0.0, 1.0])
    for s in (1e-1, 1e-2, 1e-3):
        v = s * np.array([0.6, 0.8, 0.0])
        ratio = np.linalg.norm(sphere_exp_map(q, v) - q) / s
        assert abs(ratio - 1.0) <= s**2


def test_disk_area_examples():
    assert geodesic_disk_area_exact(np.pi / 2) == pytest.approx(2 * np.pi, rel=1e-15)
    assert geodesic_disk_area_exact(0.1) == pytest.approx(0.03138976, abs=1e-8)
    assert geodesic_disk_area_exact(0.1) == pytest.approx(2 * np.pi * (1 - np.cos(0.1)), rel=1e-12)
    for bad in (0.0, -1.0, np.pi):
        with pytest.raises(ValueError):
            geodesic_disk_area_exact(bad)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 0.5))
def test_disk_area_expansion(eps):
    dev = geodesic_disk_area_exact(eps) / (np.pi * eps**2) - 1.0
    assert abs(dev) <= eps**2 / 10
    # leading correction is -eps^2 / 12
    assert dev == pytest.approx(-(eps**2) / 12, abs=eps**4 / 300 + 1e-15)


def test_flip_resolution_floor(ico):
    m = ico(3)
    empty = np.zeros(m.nt, dtype=bool)
    new, area = flip_geodesic_disk(m, empty, 0, 1e-3)
    assert area == 0.0
    np.testing.assert_array_equal(new, empty)


def test_flip_area_close_to_exact(ico):
    m = ico(5)
    q = int(np.argmax(m.vertices[:, 2]))
    _, area = flip_geodesic_disk(m, np.zeros(m.nt, dtype=bool), q, 0.3)
    assert area == pytest.approx(geodesic_disk_area_exact(0.3), rel=0.05)


def test_flip_involution_and_locality(ico):
    m = ico(4)
    mat = cap_indicator(m, [1, 0, 0], 0.6)
    q = int(np.argmin(m.vertices[:, 0]))
    once, _ = flip_geodesic_disk(m, mat, q, 0.4)
    twice, _ = flip_geodesic_disk(m, once, q, 0.4)
    np.testing.assert_array_equal(twice, mat)
    c = m.centroids / np.linalg.norm(m.centroids, axis=1, keepdims=True)
    outside = np.arccos(np.clip(c @ m.vertices[q], -1, 1)) >= 0.4
    np.testing.assert_array_equal(once[outside], mat[outside])
    assert once[~outside].all()


def test_flip_crossing_interface(ico):
    m = ico(4)
    mat = cap_indicator(m, [0, 0, 1], 0.5)
    q = int(np.argmax(m.vertices[:, 2]))
    assert vertex_material(m, mat, q)
    with pytest.raises(HypothesisViolationError):
        flip_geodesic_disk(m, mat, q, 0.8)


def test_farthest_vertex(ico):
    m = ico(4)
    mat = cap_indicator(m, [0, 0, 1], 0.5)
    q = farthest_vertex(m, mat)
    assert not vertex_material(m, mat, q)
    assert m.vertices[q, 2] < -0.95
    assert distance_to_interface(m, mat, q) > 2.5
    assert np.count_nonzero(m.triangles == q) == 6
    assert farthest_vertex(m, np.zeros(m.nt, dtype=bool)) == 0


def test_quotient_identical_materials(ico):
    m = ico(3)
    c = ProblemCoefficients(beta1=1.0, beta2=1.0, gamma1=1.0, gamma2=1.0, f1=1.0, f2=1.0)
    mat = cap_indicator(m, [0, 0, 1], 0.5)
    u_d = solve_state(m, cap_indicator(m, [1, 0, 0], 1.0), ProblemCoefficients(2.0, 1.0, 1.0, 1.0, 1.0, 0.0))
    table = td_quotient_study(m, mat, c, u_d, farthest_vertex(m, mat), [0.4, 0.3])
    assert table.td_formula == 0.0
    for r in table.rows:
        assert abs(r.quotient) < 1e-9 * table.J0
        assert r.area_exact > 0.0 and r.area_mesh > 0.0


def test_quotient_study_validation(ico, moderate):
    m = ico(3)
    mat = cap_indicator(m, [0, 0, 1], 0.5)
    u_d = np.zeros(m.nv)
    q = farthest_vertex(m, mat)
    with pytest.raises(ValueError):
        td_quotient_study(m, mat, moderate, u_d, q, [0.2, 0.3])
    table = td_quotient_study(m, mat, moderate, u_d, q, [0.3, 1e-3])
    assert table.rows[-1].resolution_floor and np.isnan(table.rows[-1].quotient)
    assert not table.rows[0].resolution_floor
