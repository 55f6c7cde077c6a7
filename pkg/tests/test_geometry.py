import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rissim.geometry import (ArraySpec, ElementPattern, Orientation, angles_of, direction,
                             element_positions, link_geometry, los_response, pattern_gain,
                             steering_vector)

angles_phi = st.floats(-np.pi, np.pi, exclude_max=True)
angles_theta = st.floats(0.0, np.pi)


def test_single_element_at_origin():
    assert np.array_equal(element_positions(ArraySpec(1, 1), 0.3), [[0.0, 0.0, 0.0]])


def test_two_element_positions():
    pos = element_positions(ArraySpec(1, 2, spacing=0.5), 2.0)
    np.testing.assert_allclose(pos, [[0, -0.5, 0], [0, 0.5, 0]])


def test_4x4_neighbour_distances():
    lam = 0.15
    pos = element_positions(ArraySpec(4, 4), lam).reshape(4, 4, 3)
    # horizontal and vertical neighbours, checked exhaustively
    dh = np.linalg.norm(np.diff(pos, axis=1), axis=-1)
    dv = np.linalg.norm(np.diff(pos, axis=0), axis=-1)
    np.testing.assert_allclose(dh, lam / 2, rtol=1e-14)
    np.testing.assert_allclose(dv, lam / 2, rtol=1e-14)


def test_row_major_order():
    # column index moves along local y, row index along local z
    pos = element_positions(ArraySpec(2, 3), 1.0)
    assert pos[1, 1] > pos[0, 1] and pos[1, 2] == pos[0, 2]
    assert pos[3, 2] > pos[0, 2] and pos[3, 1] == pos[0, 1]


@given(st.integers(1, 9), st.integers(1, 9), st.floats(0.1, 2.0))
def test_positions_centro_symmetric(rows, cols, spacing):
    pos = element_positions(ArraySpec(rows, cols, spacing), 1.0)
    np.testing.assert_allclose(pos.sum(axis=0), 0.0, atol=1e-9)


def test_link_geometry_ue_example():
    o = Orientation()
    geo = link_geometry((0, 0, 25), o, (250, 0, 1.5), o)
    assert geo.d2d == pytest.approx(250.0)
    assert geo.d3d == pytest.approx(np.sqrt(250**2 + 23.5**2))


def test_link_geometry_ris_example():
    o = Orientation()
    geo = link_geometry((0, 0, 25), o, (200, 50, 25), o)
    assert geo.d3d == pytest.approx(206.155, abs=1e-3)


def test_boresight_is_broadside():
    o = Orientation.facing((1, 1, 0))
    geo = link_geometry((0, 0, 10), o, (30, 30, 10), Orientation())
    assert geo.phi_d == pytest.approx(0.0, abs=1e-12)
    assert geo.theta_d == pytest.approx(np.pi / 2, abs=1e-12)


def test_coincident_positions_rejected():
    with pytest.raises(ValueError):
        link_geometry((1, 2, 3), Orientation(), (1, 2, 3), Orientation())


def test_orientation_must_be_orthonormal():
    with pytest.raises(ValueError):
        Orientation((1, 0, 0), (1, 0, 0))
    with pytest.raises(ValueError):
        Orientation((2, 0, 0), (0, 0, 1))


vec = st.tuples(*[st.floats(-300, 300)] * 3)


@settings(max_examples=60)
@given(vec, vec, st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_link_geometry_swap(a, b, ya, yb):
    a, b = np.array(a), np.array(b)
    if np.linalg.norm(a - b) < 1e-3:
        return
    oa = Orientation.facing((np.cos(ya), np.sin(ya), 0))
    ob = Orientation.facing((np.cos(yb), np.sin(yb), 0))
    fwd = link_geometry(a, oa, b, ob)
    rev = link_geometry(b, ob, a, oa)
    assert fwd.d3d == pytest.approx(rev.d3d) and fwd.d2d == pytest.approx(rev.d2d)
    # departure of one direction is the arrival of the other, in the same frame
    np.testing.assert_allclose(direction(fwd.phi_d, fwd.theta_d), direction(rev.phi_a, rev.theta_a), atol=1e-9)
    np.testing.assert_allclose(direction(fwd.phi_a, fwd.theta_a), direction(rev.phi_d, rev.theta_d), atol=1e-9)


def test_angles_in_range():
    phi, theta = angles_of(np.random.default_rng(0).normal(size=(500, 3)))
    assert np.all((phi >= -np.pi) & (phi < np.pi))
    assert np.all((theta >= 0) & (theta <= np.pi))


def test_steering_broadside_all_ones():
    a = steering_vector(ArraySpec(5, 3, 0.7), 0.0, np.pi / 2, 0.1)
    np.testing.assert_allclose(a, 1.0, atol=1e-12)


def test_steering_endfire_pi_phase():
    a = steering_vector(ArraySpec(1, 2), np.pi / 2, np.pi / 2, 1.0)
    assert np.angle(a[1] / a[0]) == pytest.approx(np.pi)


def test_steering_norm_4x4():
    a = steering_vector(ArraySpec(4, 4), 0.73, 1.1, 0.15)
    assert np.linalg.norm(a) == pytest.approx(4.0, abs=1e-12)


@given(angles_phi, angles_theta, st.integers(1, 6), st.integers(1, 6))
def test_steering_unit_modulus(phi, theta, rows, cols):
    a = steering_vector(ArraySpec(rows, cols), phi, theta, 0.15)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    assert np.vdot(a, a).real == pytest.approx(rows * cols)


def test_steering_batch_matches_scalar():
    spec = ArraySpec(3, 2)
    phi = np.array([0.1, -1.2, 2.0])
    theta = np.array([0.4, 1.6, 2.9])
    batch = steering_vector(spec, phi, theta, 0.5)
    for k in range(3):
        np.testing.assert_allclose(batch[:, k], steering_vector(spec, phi[k], theta[k], 0.5))


def test_steering_matches_global_path_difference():
    # phase of element m equals k*<p_m, u> computed in global coordinates
    lam = 0.2
    o = Orientation.facing((1, 2, 0))
    spec = ArraySpec(2, 3, orientation=o)
    target = np.array([40.0, -10.0, 7.0])
    geo = link_geometry((0, 0, 0), o, target, Orientation())
    a = steering_vector(spec, geo.phi_d, geo.theta_d, lam)
    u = target / np.linalg.norm(target)
    p_global = element_positions(spec, lam) @ o.rotation.T
    np.testing.assert_allclose(a, np.exp(2j * np.pi / lam * p_global @ u), atol=1e-12)


def test_sine_pattern_values():
    p = ElementPattern("sine", alpha=1.0)
    assert pattern_gain(p, 0.0, np.pi / 2) == pytest.approx(1.0)
    assert pattern_gain(ElementPattern("sine", alpha=2.5), 0.3, 0.0) == pytest.approx(0.0)
    # back hemisphere is dark
    assert pattern_gain(p, np.pi, np.pi / 2) == 0.0


def test_isotropic_pattern():
    phi = np.linspace(-3, 3, 7)
    assert np.all(pattern_gain(ElementPattern(), phi, 1.0) == 1.0)


@given(angles_phi, angles_theta, st.floats(0, 8))
def test_pattern_in_unit_interval(phi, theta, alpha):
    g = pattern_gain(ElementPattern("sine", alpha=alpha), phi, theta)
    assert 0.0 <= g <= 1.0


def _table():
    az = np.linspace(-np.pi / 2, np.pi / 2, 5)
    el = np.linspace(0, np.pi, 7)
    vals = np.outer(np.cos(az) ** 2, np.sin(el))
    return ElementPattern("table", azimuths=az, elevations=el, values=vals)


def test_table_hits_grid_nodes():
    p = _table()
    az, el = np.array(p.azimuths), np.array(p.elevations)
    A, E = np.meshgrid(az, el, indexing="ij")
    np.testing.assert_allclose(pattern_gain(p, A, E), np.array(p.values), atol=1e-15)


def test_table_bilinear_midpoint():
    p = _table()
    az, el, v = np.array(p.azimuths), np.array(p.elevations), np.array(p.values)
    mid = pattern_gain(p, (az[1] + az[2]) / 2, (el[3] + el[4]) / 2)
    assert mid == pytest.approx(v[1:3, 3:5].mean())


@given(st.floats(-np.pi / 2, np.pi / 2), angles_theta)
def test_table_in_unit_interval(phi, theta):
    assert 0.0 <= pattern_gain(_table(), phi, theta) <= 1.0


def test_table_must_cover_front_hemisphere():
    with pytest.raises(ValueError):
        ElementPattern("table", azimuths=[-1, 1], elevations=[0, np.pi], values=np.ones((2, 2)))


def test_table_query_outside_grid():
    az = np.linspace(-np.pi / 2, np.pi / 2, 3)
    el = np.linspace(0.0, np.pi, 3)
    p = ElementPattern("table", azimuths=az, elevations=el, values=np.ones((3, 3)))
    with pytest.raises(ValueError):
        pattern_gain(p, 0.0, 3.5)


def test_plate_peak_gain():
    p = ElementPattern("sine", alpha=1, a=0.05, b=0.05)
    assert p.peak_gain(0.1) == pytest.approx(np.pi)


def test_los_response_unit_modulus_and_rank_one():
    o1 = Orientation.facing((1, 0, 0))
    o2 = Orientation.facing((-1, 0, 0))
    tx, rx = ArraySpec(2, 2, orientation=o1), ArraySpec(1, 3, orientation=o2)
    geo = link_geometry((0, 0, 10), o1, (80, 20, 2), o2)
    h = los_response(geo, tx, rx, 0.15)
    assert h.shape == (3, 4)
    np.testing.assert_allclose(np.abs(h), 1.0, atol=1e-12)
    s = np.linalg.svd(h, compute_uv=False)
    assert s[1] / s[0] < 1e-12
