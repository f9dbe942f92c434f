import numpy as np
import pytest
from hypothesis import given, strategies as st

from emacreg.errors import TopologyError
from emacreg.mesh import Marker, Mesh, build_rectangle_mesh, build_step_channel_mesh, identify_periodic


def _check_conforming(mesh):
    tri = mesh.triangles
    e = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    # every edge is shared by at most two triangles
    assert counts.max() <= 2
    be = np.sort(mesh.boundary_edges, axis=1)
    bset = {tuple(x) for x in be}
    single = {tuple(x) for x, c in zip(np.unique(e, axis=0), counts) if c == 1}
    assert bset == single


def test_smallest_rectangle():
    m = build_rectangle_mesh(1, 1)
    assert m.num_vertices == 4
    assert m.num_triangles == 2


def test_triangle_count_48():
    assert build_rectangle_mesh(48, 48).num_triangles == 4608


def test_center_vertex_present():
    m = build_rectangle_mesh(48, 48, ((-0.5, 0.5), (-0.5, 0.5)))
    center = 24 * 49 + 24
    np.testing.assert_allclose(m.vertices[center], (0.0, 0.0), atol=1e-15)


@pytest.mark.parametrize("nx,ny", [(0, 1), (1, 0)])
def test_zero_cells_rejected(nx, ny):
    with pytest.raises(ValueError):
        build_rectangle_mesh(nx, ny)


def test_degenerate_bounds_rejected():
    with pytest.raises(ValueError):
        build_rectangle_mesh(2, 2, ((0.0, 0.0), (0.0, 1.0)))


@given(st.integers(1, 12), st.integers(1, 12), st.floats(-3, 3), st.floats(0.1, 5))
def test_rectangle_invariants(nx, ny, x0, width):
    bounds = ((x0, x0 + width), (0.0, 1.0))
    m = build_rectangle_mesh(nx, ny, bounds)
    assert m.num_vertices == (nx + 1) * (ny + 1)
    assert m.num_triangles == 2 * nx * ny
    assert np.all(m.signed_areas() > 0)
    assert abs(m.area() - width) <= 1e-12 * max(1.0, width)
    assert m.euler_characteristic() == 1
    assert set(m.boundary_markers) == {Marker.BOTTOM, Marker.RIGHT, Marker.TOP, Marker.LEFT}
    _check_conforming(m)


def test_boundary_edges_keep_domain_on_left():
    m = build_rectangle_mesh(3, 2)
    centroid = m.vertices.mean(axis=0)
    a, b = m.vertices[m.boundary_edges[:, 0]], m.vertices[m.boundary_edges[:, 1]]
    d, r = b - a, centroid - a
    assert np.all(d[:, 0] * r[:, 1] - d[:, 1] * r[:, 0] > 0)


def test_step_channel_area():
    m = build_step_channel_mesh(1.0)
    assert abs(m.area() - 399.0) <= 1e-12
    assert np.all(m.signed_areas() > 0)


@pytest.mark.parametrize("h", [1.0, 0.5])
def test_step_channel_excludes_hole(h):
    m = build_step_channel_mesh(h)
    x, y = m.vertices.T
    assert not np.any((x > 5) & (x < 6) & (y > 0) & (y < 1))
    # no triangle centroid inside the step
    c = m.vertices[m.triangles].mean(axis=1)
    assert not np.any((c[:, 0] > 5) & (c[:, 0] < 6) & (c[:, 1] < 1))
    _check_conforming(m)


def test_step_channel_regression_count():
    # 2 * 399 / h^2 with the structured layout removing exactly the step cells
    assert build_step_channel_mesh(0.5).num_triangles == 3192


def test_step_channel_markers():
    m = build_step_channel_mesh(1.0)
    mid = 0.5 * (m.vertices[m.boundary_edges[:, 0]] + m.vertices[m.boundary_edges[:, 1]])
    markers = np.array([k.value for k in m.boundary_markers])
    assert np.all(markers[np.isclose(mid[:, 0], 0.0)] == "inflow")
    assert np.all(markers[np.isclose(mid[:, 0], 40.0)] == "outflow")
    assert np.all(markers[np.isclose(mid[:, 1], 10.0)] == "wall")
    on_step = (mid[:, 0] >= 5) & (mid[:, 0] <= 6) & (mid[:, 1] <= 1)
    assert on_step.sum() == 3
    assert np.all(markers[on_step] == "wall")


def test_step_channel_euler_characteristic():
    # the step touches the bottom wall, so the domain stays simply connected
    assert build_step_channel_mesh(1.0).euler_characteristic() == 1


@pytest.mark.parametrize("h", [0.0, -1.0, 1.5])
def test_step_channel_invalid(h):
    with pytest.raises(ValueError):
        build_step_channel_mesh(h)


def test_periodic_pairs_4x4():
    m = identify_periodic(build_rectangle_mesh(4, 4), "x")
    assert len(m.periodic_pairs) == 5
    v = m.vertices
    d = v[m.periodic_pairs[:, 1]] - v[m.periodic_pairs[:, 0]]
    np.testing.assert_allclose(d[:, 0], 1.0, atol=1e-14)
    np.testing.assert_allclose(d[:, 1], 0.0, atol=1e-14)


def test_periodic_pairs_1x1():
    assert len(identify_periodic(build_rectangle_mesh(1, 1), "x").periodic_pairs) == 2


def test_periodic_mismatch():
    v = np.array([[0, 0], [1, 0], [1, 0.5], [1, 1], [0, 1]], float)
    tri = np.array([[0, 1, 2], [0, 2, 4], [2, 3, 4]])
    edges = np.array([[0, 1], [1, 2], [2, 3], [3, 4], [4, 0]])
    m = Mesh(v, tri, edges, [Marker.WALL] * 5)
    with pytest.raises(TopologyError):
        identify_periodic(m, "x")


def test_mesh_is_immutable():
    m = build_rectangle_mesh(2, 2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0
