import math

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from emacreg.errors import PointLocationError
from emacreg.femspace import (
    DirichletBC,
    Field,
    basis_values,
    build_space,
    collect_bcs,
    evaluate,
    interpolate,
    quadrature,
)
from emacreg.mesh import Marker, build_rectangle_mesh, identify_periodic

X, Y = sympy.symbols("x y")


def _ref_integral(a, b):
    # symbolic integral of x^a y^b over the reference triangle
    return float(sympy.integrate(sympy.integrate(X**a * Y**b, (Y, 0, 1 - X)), (X, 0, 1)))


def _apply_rule(rule, a, b):
    xi, eta = rule.points[:, 1], rule.points[:, 2]
    return 0.5 * np.sum(rule.weights * xi**a * eta**b)


def test_order1_is_centroid():
    r = quadrature(1)
    assert len(r) == 1
    np.testing.assert_allclose(r.points[0], [1 / 3, 1 / 3, 1 / 3])
    assert r.weights[0] == 1.0


def test_order4_x2y2():
    assert abs(_apply_rule(quadrature(4), 2, 2) - 1.0 / 180) <= 1e-15


@pytest.mark.parametrize("order", [2, 4, 6, 8])
def test_monomials_exact(order):
    rule = quadrature(order)
    assert abs(rule.weights.sum() - 1.0) < 1e-14
    for a in range(order + 1):
        for b in range(order + 1 - a):
            assert abs(_apply_rule(rule, a, b) - _ref_integral(a, b)) <= 1e-14


@pytest.mark.parametrize("order", [-1, 9, 2.5])
def test_unsupported_order(order):
    with pytest.raises(ValueError):
        quadrature(order)


def test_dof_counts():
    assert build_space(build_rectangle_mesh(1, 1), 2, 1).num_dofs == 9
    assert build_space(build_rectangle_mesh(4, 4), 1, 1).num_dofs == 25
    assert build_space(identify_periodic(build_rectangle_mesh(4, 4), "x"), 1, 1).num_dofs == 20


@given(st.integers(1, 6), st.integers(1, 6))
def test_p2_dof_count(nx, ny):
    sp2 = build_space(build_rectangle_mesh(nx, ny), 2, 1)
    assert sp2.num_dofs == (2 * nx + 1) * (2 * ny + 1)
    assert build_space(build_rectangle_mesh(nx, ny), 2, 2).num_dofs == 2 * sp2.num_dofs


def test_unsupported_degree():
    with pytest.raises(ValueError):
        build_space(build_rectangle_mesh(1, 1), 3)


def test_vertex_nodes_first():
    m = build_rectangle_mesh(3, 2)
    s = build_space(m, 2)
    np.testing.assert_array_equal(s.node_coords[: m.num_vertices], m.vertices)
    assert np.all(s.cell_nodes[:, :3] < m.num_vertices)
    assert np.all(s.cell_nodes[:, 3:] >= m.num_vertices)


def test_shared_edges_share_dofs():
    s = build_space(build_rectangle_mesh(3, 3), 2)
    # node coordinates are unique, so a shared physical point maps to one DOF
    coords = np.round(s.node_coords, 12)
    assert len(np.unique(coords, axis=0)) == s.num_dofs
    # local node positions agree with the DOF coordinates
    p = s.mesh.vertices[s.mesh.triangles]
    mids = np.stack([0.5 * (p[:, 0] + p[:, 1]), 0.5 * (p[:, 1] + p[:, 2]), 0.5 * (p[:, 2] + p[:, 0])], axis=1)
    np.testing.assert_allclose(s.node_coords[s.cell_nodes], np.concatenate([p, mids], axis=1))


def test_vector_interleaving():
    s = build_space(build_rectangle_mesh(2, 2), 2, 2)
    f = interpolate(s, lambda x, t: np.stack([x[:, 0], 10 + x[:, 1]], axis=1))
    np.testing.assert_allclose(f.coefficients[0::2], s.node_coords[:, 0])
    np.testing.assert_allclose(f.coefficients[1::2], 10 + s.node_coords[:, 1])


def test_boundary_dofs_on_marked_edges():
    s = build_space(build_rectangle_mesh(4, 3), 2)
    for marker, (axis, value) in {Marker.BOTTOM: (1, 0.0), Marker.TOP: (1, 1.0), Marker.LEFT: (0, 0.0), Marker.RIGHT: (0, 1.0)}.items():
        nodes = s.boundary_nodes(marker)
        np.testing.assert_allclose(s.node_coords[nodes, axis], value)
    assert len(s.boundary_nodes(Marker.BOTTOM)) == 9
    total = s.boundary_nodes(Marker.BOTTOM, Marker.TOP, Marker.LEFT, Marker.RIGHT)
    assert len(total) == 2 * 9 + 2 * 7 - 4


def test_periodic_slaves_absent():
    m = identify_periodic(build_rectangle_mesh(4, 4), "x")
    s = build_space(m, 2, 2)
    assert s.num_dofs == 2 * 9 * 8
    assert np.all(s.node_coords[:, 0] < 1.0 - 1e-12)
    slaves = m.periodic_pairs[:, 1]
    masters = m.periodic_pairs[:, 0]
    np.testing.assert_array_equal(s.vertex_node[slaves], s.vertex_node[masters])


def test_interpolate_zero():
    s = build_space(build_rectangle_mesh(3, 3), 2, 2)
    assert not interpolate(s, lambda x, t: 0.0).coefficients.any()


def test_p1_reproduces_linear(rng):
    s = build_space(build_rectangle_mesh(5, 4), 1)
    f = interpolate(s, lambda x, t: x[:, 0])
    for p in rng.uniform(0.01, 0.99, size=(10, 2)):
        assert abs(evaluate(f, p) - p[0]) <= 1e-12


def test_p2_quadratic_l2_error():
    s = build_space(build_rectangle_mesh(4, 4), 2)
    f = interpolate(s, lambda x, t: x[:, 0] ** 2)
    ed = s.element_data(8)
    err = np.sqrt(ed.integrate((ed.values(f.coefficients) - ed.xq[..., 0] ** 2) ** 2))
    assert err <= 1e-13


@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_p2_reproduces_quadratics(c):
    def q(x, t=0.0):
        x0, x1 = x[:, 0], x[:, 1]
        return c[0] + c[1] * x0 + c[2] * x1 + c[3] * x0 * x0 + c[4] * x0 * x1 + c[5] * x1 * x1

    s = build_space(build_rectangle_mesh(3, 2), 2)
    f = interpolate(s, q)
    pts = np.random.default_rng(1).uniform(0, 1, size=(15, 2))
    vals = np.array([evaluate(f, p) for p in pts])
    assert np.abs(vals - q(pts)).max() <= 1e-12


@pytest.mark.parametrize("degree", [1, 2])
def test_partition_of_unity(degree):
    rule = quadrature(8)
    np.testing.assert_allclose(basis_values(degree, rule.points).sum(axis=1), 1.0, atol=1e-14)


def test_evaluate_zero_and_linear():
    s = build_space(build_rectangle_mesh(4, 4), 2, 2)
    assert np.all(evaluate(Field.zeros(s), (0.3, 0.7)) == 0)
    f = interpolate(s, lambda x, t: np.stack([x[:, 1], -x[:, 0]], axis=1))
    np.testing.assert_allclose(evaluate(f, (0.25, 0.25)), (0.25, -0.25), atol=1e-14)


def test_evaluate_vortex_center():
    s = build_space(build_rectangle_mesh(6, 6), 2, 2)
    pi = math.pi
    f = interpolate(
        s, lambda x, t: np.stack([-np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1]), np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1])], axis=1)
    )
    np.testing.assert_allclose(evaluate(f, (0.5, 0.5)), (0.0, 0.0), atol=1e-12)


def test_evaluate_outside():
    s = build_space(build_rectangle_mesh(2, 2), 1)
    with pytest.raises(PointLocationError):
        evaluate(Field.zeros(s), (1.5, 0.5))


def test_field_length_checked():
    s = build_space(build_rectangle_mesh(2, 2), 1)
    with pytest.raises(ValueError):
        Field(s, np.zeros(3))


def test_collect_bcs_last_wins():
    s = build_space(build_rectangle_mesh(2, 2), 2, 2)
    a = DirichletBC((Marker.BOTTOM,), lambda x, t: np.ones((len(x), 2)))
    b = DirichletBC((Marker.LEFT,), lambda x, t: 2 * np.ones((len(x), 2)))
    dofs, vals = collect_bcs(s, (a, b))
    assert len(dofs) == len(np.unique(dofs))
    corner = 2 * 0  # vertex (0, 0) is node 0
    assert vals[dofs == corner][0] == 2.0
    d1, _ = collect_bcs(s, (DirichletBC((Marker.TOP,), None, components=(1,)),))
    assert np.all(d1 % 2 == 1)
    e, v = collect_bcs(s, ())
    assert len(e) == 0 and len(v) == 0
