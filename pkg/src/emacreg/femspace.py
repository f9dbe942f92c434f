"""Lagrange P1/P2 spaces on triangles, nodal interpolation and quadrature."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import PointLocationError
from .mesh import Mesh

__all__ = [
    "QuadratureRule",
    "quadrature",
    "FeSpace",
    "Field",
    "build_space",
    "interpolate",
    "evaluate",
    "DEFAULT_ORDER",
    "DirichletBC",
    "collect_bcs",
]

DEFAULT_ORDER = 6
MAX_ORDER = 8

# local edge k of a triangle joins these two local vertices
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


@functools.lru_cache(maxsize=None)
def quadrature(order: int = DEFAULT_ORDER) -> QuadratureRule:
    """Triangle rule exact for polynomials of total degree ``order``.

    Built from a collapsed (Duffy) product of Gauss-Legendre and
    Gauss-Jacobi rules, which keeps every weight positive and every point
    strictly inside the triangle.
    """
    if int(order) != order or order < 0 or order > MAX_ORDER:
        raise ValueError(f"quadrature order must be an integer in [0, {MAX_ORDER}], got {order}")
    order = int(order)
    if order <= 1:
        pts = np.array([[1 / 3, 1 / 3, 1 / 3]])
        w = np.array([1.0])
    else:
        n = (order + 2) // 2
        s, ws = roots_legendre(n)
        s = 0.5 * (s + 1.0)
        e, we = roots_jacobi(n, 1.0, 0.0)
        eta = 0.5 * (e + 1.0)
        S, E = np.meshgrid(s, eta, indexing="ij")
        xi = (S * (1.0 - E)).ravel()
        et = E.ravel()
        w = np.outer(ws, we).ravel()
        w = w / w.sum()
        pts = np.column_stack([1.0 - xi - et, xi, et])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, order)


def basis_values(degree: int, bary: np.ndarray) -> np.ndarray:
    """Reference basis values, shape ``(npts, nloc)``."""
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    if degree == 1:
        return np.column_stack([l0, l1, l2])
    return np.column_stack(
        [
            l0 * (2 * l0 - 1),
            l1 * (2 * l1 - 1),
            l2 * (2 * l2 - 1),
            4 * l0 * l1,
            4 * l1 * l2,
            4 * l2 * l0,
        ]
    )


_GL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def basis_ref_gradients(degree: int, bary: np.ndarray) -> np.ndarray:
    """Gradients with respect to the reference coordinates, ``(npts, nloc, 2)``."""
    npts = len(bary)
    if degree == 1:
        return np.broadcast_to(_GL, (npts, 3, 2)).copy()
    out = np.empty((npts, 6, 2))
    for i in range(3):
        out[:, i] = (4 * bary[:, i] - 1)[:, None] * _GL[i]
    for k, (i, j) in enumerate(LOCAL_EDGES):
        out[:, 3 + k] = 4 * (bary[:, j, None] * _GL[i] + bary[:, i, None] * _GL[j])
    return out


class ElementData:
    """Per-element geometry and basis data at the points of one quadrature rule."""

    def __init__(self, space: FeSpace, rule: QuadratureRule):
        mesh = space.mesh
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        self.det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        self.jinv = np.linalg.inv(jac)
        self.rule = rule
        self.xq = np.einsum("qk,ekd->eqd", rule.points, p)
        self.wdet = 0.5 * np.abs(self.det)[:, None] * rule.weights[None, :]
        self.phi = basis_values(space.degree, rule.points)
        ref = basis_ref_gradients(space.degree, rule.points)
        self.dphi = np.einsum("qkr,erd->eqkd", ref, self.jinv)
        self.cell_nodes = space.cell_nodes
        self.components = space.components

    def local(self, coeffs: np.ndarray) -> np.ndarray:
        """Gather coefficients per element: ``(ne, nloc)`` or ``(ne, nloc, 2)``."""
        c = np.asarray(coeffs)
        if self.components == 1:
            return c[self.cell_nodes]
        return c.reshape(-1, 2)[self.cell_nodes]

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        loc = self.local(coeffs)
        if self.components == 1:
            return np.einsum("qk,ek->eq", self.phi, loc)
        return np.einsum("qk,eki->eqi", self.phi, loc)

    def gradients(self, coeffs: np.ndarray) -> np.ndarray:
        """Gradient at quadrature points; for vectors ``[..., i, j] = d u_i / d x_j``."""
        loc = self.local(coeffs)
        if self.components == 1:
            return np.einsum("eqkd,ek->eqd", self.dphi, loc)
        return np.einsum("eqkd,eki->eqid", self.dphi, loc)

    def integrate(self, integrand: np.ndarray) -> float:
        """Integral over the mesh of an ``(ne, nq)`` array of point values."""
        return float(np.sum(self.wdet * integrand))


class FeSpace:
    """Continuous Lagrange space of degree 1 or 2 with 1 or 2 components.

    Scalar nodes are numbered vertices first, then edge midpoints.  Vector
    DOFs are component-interleaved: DOF ``2 * node + c``.  Periodic slave
    vertices and edges never receive a node of their own.
    """

    def __init__(self, mesh: Mesh, degree: int, components: int = 1):
        if degree not in (1, 2):
            raise ValueError(f"unsupported degree {degree}")
        if components not in (1, 2):
            raise ValueError(f"unsupported number of components {components}")
        self.mesh = mesh
        self.degree = degree
        self.components = components

        root = mesh.periodic_root()
        masters = np.unique(root)
        vertex_node = np.full(mesh.num_vertices, -1, dtype=np.int64)
        vertex_node[masters] = np.arange(len(masters))
        self.vertex_node = vertex_node[root]
        coords = [mesh.vertices[masters]]
        cell_nodes = [self.vertex_node[mesh.triangles]]
        self._edge_lookup = None

        if degree == 2:
            tri = mesh.triangles
            mids = np.stack(
                [0.5 * (mesh.vertices[tri[:, a]] + mesh.vertices[tri[:, b]]) for a, b in LOCAL_EDGES],
                axis=1,
            )
            codes = self._point_codes(mids.reshape(-1, 2))
            uniq, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
            n_vert = len(masters)
            cell_nodes.append(n_vert + inverse.reshape(-1, 3))
            coords.append(self._wrap(mids.reshape(-1, 2)[first]))
            self._edge_lookup = (uniq, n_vert)

        self.cell_nodes = np.concatenate(cell_nodes, axis=1)
        self.node_coords = np.concatenate(coords)
        self.num_nodes = len(self.node_coords)
        self._element_cache = {}
        self._boundary_cache = {}

    # periodic wrapping and edge keys -------------------------------------------------
    def _wrap(self, pts: np.ndarray) -> np.ndarray:
        out = np.array(pts, dtype=float, copy=True)
        for ax, (lo, hi) in self.mesh.periods.items():
            tol = 1e-12 * max(1.0, hi - lo)
            out[np.abs(out[:, ax] - hi) <= tol, ax] = lo
        return out

    def _point_codes(self, pts: np.ndarray) -> np.ndarray:
        v = self.mesh.vertices
        lo = v.min(axis=0)
        span = float((v.max(axis=0) - lo).max())
        q = 1e-9 * span
        ij = np.rint((self._wrap(pts) - lo) / q).astype(np.int64)
        stride = int(np.rint(span / q)) + 3
        return ij[:, 0] * stride + ij[:, 1]

    # public API ------------------------------------------------------------------------
    @property
    def num_dofs(self) -> int:
        return self.num_nodes * self.components

    @property
    def dof_coords(self) -> np.ndarray:
        if self.components == 1:
            return self.node_coords
        return np.repeat(self.node_coords, 2, axis=0)

    @property
    def cell_dofs(self) -> np.ndarray:
        if self.components == 1:
            return self.cell_nodes
        n = self.cell_nodes
        return np.stack([2 * n, 2 * n + 1], axis=2).reshape(len(n), -1)

    @property
    def nloc(self) -> int:
        return 3 if self.degree == 1 else 6

    def element_data(self, order: int = DEFAULT_ORDER) -> ElementData:
        if order not in self._element_cache:
            self._element_cache[order] = ElementData(self, quadrature(order))
        return self._element_cache[order]

    def edge_nodes(self, edges: np.ndarray) -> np.ndarray:
        """Midpoint node of each vertex-pair edge (degree 2 only)."""
        uniq, n_vert = self._edge_lookup
        v = self.mesh.vertices
        mids = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
        codes = self._point_codes(mids)
        pos = np.searchsorted(uniq, codes)
        if np.any(pos >= len(uniq)) or np.any(uniq[np.minimum(pos, len(uniq) - 1)] != codes):
            raise ValueError("edge is not part of the mesh")
        return n_vert + pos

    def boundary_nodes(self, *markers) -> np.ndarray:
        """Sorted scalar nodes lying on edges carrying any of ``markers``."""
        key = frozenset(markers)
        if key not in self._boundary_cache:
            edges = self.mesh.edges_with(*markers)
            nodes = [self.vertex_node[edges.ravel()]]
            if self.degree == 2 and len(edges):
                nodes.append(self.edge_nodes(edges))
            self._boundary_cache[key] = np.unique(np.concatenate(nodes)) if len(edges) else np.zeros(0, np.int64)
        return self._boundary_cache[key]

    def boundary_dofs(self, *markers, components=None) -> np.ndarray:
        nodes = self.boundary_nodes(*markers)
        if self.components == 1:
            return nodes
        comps = (0, 1) if components is None else tuple(components)
        return np.sort(np.concatenate([2 * nodes + c for c in comps]))

    def refined_p1(self):
        """Once-refined P1 triangulation carrying the P2 nodes.

        Returns ``(points, triangles, point_node, parent)`` where
        ``point_node`` maps every visualization point to a scalar node of this
        space and ``parent`` gives the original triangle of every sub-triangle.
        Points are not wrapped, so periodic meshes display in full.
        """
        if self.degree != 2:
            raise ValueError("refinement mapping needs a degree-2 space")
        mesh = self.mesh
        tri = mesh.triangles
        nv = mesh.num_vertices
        pairs = np.sort(np.stack([tri[:, list(e)] for e in LOCAL_EDGES], axis=1), axis=2)
        uniq, first, inverse = np.unique(pairs.reshape(-1, 2), axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel().reshape(-1, 3)
        mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
        points = np.concatenate([mesh.vertices, mids])
        point_node = np.concatenate(
            [self.vertex_node, self.cell_nodes[:, 3:].ravel()[first]]
        )
        m = nv + inverse
        v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
        m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
        sub = np.stack(
            [
                np.column_stack([v0, m01, m20]),
                np.column_stack([m01, v1, m12]),
                np.column_stack([m20, m12, v2]),
                np.column_stack([m01, m12, m20]),
            ],
            axis=1,
        ).reshape(-1, 3)
        parent = np.repeat(np.arange(len(tri)), 4)
        return points, sub, point_node, parent

    def locate(self, point, tol: float = 1e-12):
        """Index of a triangle containing ``point`` and its barycentric coordinates."""
        x = np.asarray(point, dtype=float)
        p = self.mesh.vertices[self.mesh.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        r = x - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        l0 = 1.0 - l1 - l2
        inside = np.flatnonzero((l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol))
        if len(inside) == 0:
            raise PointLocationError(f"point {tuple(x)} is outside the mesh")
        e = inside[0]
        return e, np.array([l0[e], l1[e], l2[e]])


def build_space(mesh: Mesh, degree: int, components: int = 1) -> FeSpace:
    return FeSpace(mesh, degree, components)


@dataclass(eq=False)
class Field:
    """Coefficient vector over a space, one entry per global DOF."""

    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.num_dofs,):
            raise ValueError(
                f"expected {self.space.num_dofs} coefficients, got {self.coefficients.shape}"
            )

    @classmethod
    def zeros(cls, space: FeSpace) -> Field:
        return cls(space, np.zeros(space.num_dofs))

    def copy(self) -> Field:
        return Field(self.space, self.coefficients.copy())

    @property
    def nodal(self) -> np.ndarray:
        """Coefficients as ``(num_nodes,)`` or ``(num_nodes, 2)``."""
        if self.space.components == 1:
            return self.coefficients
        return self.coefficients.reshape(-1, 2)


def interpolate(space: FeSpace, f, t: float = 0.0) -> Field:
    """Nodal interpolant of ``f(x, t)`` where ``x`` is an ``(n, 2)`` array."""
    vals = np.asarray(f(space.node_coords, t), dtype=float)
    n = space.num_nodes
    if space.components == 1:
        vals = np.broadcast_to(vals, (n,))
    else:
        vals = np.broadcast_to(vals, (n, 2))
    return Field(space, np.array(vals, dtype=float).ravel())


def evaluate(field: Field, point) -> float | np.ndarray:
    space = field.space
    e, bary = space.locate(point)
    phi = basis_values(space.degree, bary[None, :])[0]
    loc = field.nodal[space.cell_nodes[e]]
    return phi @ loc


@dataclass(frozen=True)
class DirichletBC:
    """Strong Dirichlet data on the edges carrying ``markers``.

    ``value(x, t)`` returns an ``(n, 2)`` array for points ``x``; ``None``
    means homogeneous data.  Only the listed velocity ``components`` are
    constrained, which expresses conditions such as ``u . n = 0`` on
    axis-aligned walls.
    """

    markers: tuple
    value: object = None
    components: tuple = (0, 1)

    def dofs(self, space: FeSpace) -> np.ndarray:
        return space.boundary_dofs(*self.markers, components=self.components)

    def values(self, space: FeSpace, t: float) -> np.ndarray:
        dofs = self.dofs(space)
        if self.value is None:
            return np.zeros(len(dofs))
        nodes = dofs // 2
        comps = dofs % 2
        vals = np.asarray(self.value(space.node_coords[nodes], t), dtype=float).reshape(-1, 2)
        return vals[np.arange(len(dofs)), comps]


def collect_bcs(space: FeSpace, bcs, t: float = 0.0):
    """Constrained DOFs and their values; later conditions win on shared DOFs."""
    if not bcs:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    dofs = np.concatenate([np.asarray(bc.dofs(space), dtype=np.int64) for bc in bcs])
    vals = np.concatenate([np.asarray(bc.values(space, t), dtype=float) for bc in bcs])
    # keep the last occurrence of each DOF
    rev_unique, rev_idx = np.unique(dofs[::-1], return_index=True)
    return rev_unique, vals[::-1][rev_idx]
