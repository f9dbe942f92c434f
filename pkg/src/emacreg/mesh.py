"""Conforming triangulations of the benchmark domains.

All generators produce structured meshes: every quadrilateral cell of a
uniform grid is split along its bottom-left to top-right diagonal, so the
triangles come out counterclockwise and the sparsity pattern of anything
assembled on them is reproducible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TopologyError

__all__ = [
    "Marker",
    "Mesh",
    "build_rectangle_mesh",
    "build_step_channel_mesh",
    "identify_periodic",
]


class Marker(enum.Enum):
    WALL = "wall"
    INFLOW = "inflow"
    OUTFLOW = "outflow"
    BOTTOM = "bottom"
    TOP = "top"
    LEFT = "left"
    RIGHT = "right"


_AXES = {"x": 0, "y": 1, 0: 0, 1: 1}


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """An immutable 2D triangulation.

    ``boundary_edges`` holds vertex pairs oriented so the domain lies to the
    left; ``boundary_markers`` is parallel to it.  ``periodic_pairs`` rows are
    ``(master, slave)`` vertex indices and ``periods`` maps a periodic axis
    index to the ``(lo, hi)`` extent of the domain along it.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: tuple
    periodic_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    periods: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "periodic_pairs", _frozen(self.periodic_pairs, np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_markers", tuple(self.boundary_markers))
        object.__setattr__(self, "periods", dict(self.periods))
        if len(self.boundary_markers) != len(self.boundary_edges):
            raise ValueError("one marker per boundary edge required")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return self.num_vertices - len(self.edges()) + self.num_triangles

    def edges_with(self, *markers: Marker) -> np.ndarray:
        keep = [i for i, m in enumerate(self.boundary_markers) if m in markers]
        return self.boundary_edges[keep]

    def periodic_root(self) -> np.ndarray:
        """Map every vertex to the master it is identified with (itself if none).

        Chains such as the corner of a doubly periodic square are followed to
        their end.
        """
        root = np.arange(self.num_vertices)
        for master, slave in self.periodic_pairs:
            root[slave] = master
        # follow chains; depth is at most the number of periodic axes
        for _ in range(len(self.periods) + 1):
            root = root[root]
        return root


def _free_boundary_edges(triangles: np.ndarray) -> np.ndarray:
    """Directed edges that belong to exactly one triangle."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return e[counts[inverse.ravel()] == 1]


def _grid(nx, ny, x0, x1, y0, y1):
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    return verts, (i, j), (v00, v10, v01, v11)


def build_rectangle_mesh(nx: int, ny: int, bounds=((0.0, 1.0), (0.0, 1.0))) -> Mesh:
    """Uniform ``nx`` by ``ny`` mesh of an axis-aligned rectangle.

    ``bounds`` is ``((xmin, xmax), (ymin, ymax))``.  Vertex ``(i, j)`` has
    index ``j * (nx + 1) + i``.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    (x0, x1), (y0, y1) = bounds
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bounds {bounds}")
    nx, ny = int(nx), int(ny)
    verts, _, (v00, v10, v01, v11) = _grid(nx, ny, x0, x1, y0, y1)
    tris = np.concatenate(
        [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
    )
    # interleave so the two halves of a cell are adjacent in the ordering
    tris = tris.reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)

    def vid(i, j):
        return j * (nx + 1) + i

    ii = np.arange(nx)
    jj = np.arange(ny)
    bottom = np.column_stack([vid(ii, 0), vid(ii + 1, 0)])
    right = np.column_stack([vid(nx, jj), vid(nx, jj + 1)])
    top = np.column_stack([vid(ii + 1, ny), vid(ii, ny)])[::-1]
    left = np.column_stack([vid(0, jj + 1), vid(0, jj)])[::-1]
    edges = np.concatenate([bottom, right, top, left])
    markers = (
        [Marker.BOTTOM] * nx + [Marker.RIGHT] * ny + [Marker.TOP] * nx + [Marker.LEFT] * ny
    )
    return Mesh(verts, tris, edges, markers)


def build_step_channel_mesh(h_target: float = 1.0) -> Mesh:
    """The 40 x 10 channel with a unit square step whose left face is at x = 5.

    The grid spacing is ``1 / ceil(1 / h_target)`` so that the step faces are
    grid lines; cells inside the step are deleted.
    """
    if not h_target > 0:
        raise ValueError(f"h_target must be positive, got {h_target}")
    if h_target > 1.0:
        raise ValueError(f"h_target={h_target} does not resolve the unit step")
    n = math.ceil(1.0 / h_target - 1e-9)
    nx, ny = 40 * n, 10 * n
    verts, (i, j), (v00, v10, v01, v11) = _grid(nx, ny, 0.0, 40.0, 0.0, 10.0)
    in_step = (i >= 5 * n) & (i < 6 * n) & (j < n)
    keep = ~in_step
    v00, v10, v01, v11 = v00[keep], v10[keep], v01[keep], v11[keep]
    tris = np.stack(
        [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])], axis=1
    ).reshape(-1, 3)

    used = np.unique(tris)
    renumber = np.full(len(verts), -1, dtype=np.int64)
    renumber[used] = np.arange(len(used))
    verts = verts[used]
    tris = renumber[tris]

    edges = _free_boundary_edges(tris)
    mid = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])
    markers = []
    for x, _y in mid:
        if abs(x) < 1e-12:
            markers.append(Marker.INFLOW)
        elif abs(x - 40.0) < 1e-12:
            markers.append(Marker.OUTFLOW)
        else:
            markers.append(Marker.WALL)
    return Mesh(verts, tris, edges, markers)


def identify_periodic(mesh: Mesh, axis="x") -> Mesh:
    """Identify the two extreme sides of ``mesh`` along ``axis``.

    Vertices on the high side become slaves of the matching vertex on the low
    side.  Corners are included, so identifying a 4 x 4 grid in x yields five
    pairs.
    """
    if axis not in _AXES:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    ax = _AXES[axis]
    other = 1 - ax
    coord = mesh.vertices[:, ax]
    lo, hi = float(coord.min()), float(coord.max())
    tol = 1e-12 * max(1.0, hi - lo)
    lo_side = np.flatnonzero(np.abs(coord - lo) <= tol)
    hi_side = np.flatnonzero(np.abs(coord - hi) <= tol)
    lo_side = lo_side[np.argsort(mesh.vertices[lo_side, other], kind="stable")]
    hi_side = hi_side[np.argsort(mesh.vertices[hi_side, other], kind="stable")]
    if len(lo_side) != len(hi_side):
        raise TopologyError(
            f"periodic sides along {axis!r} have {len(lo_side)} and {len(hi_side)} vertices"
        )
    mismatch = np.abs(mesh.vertices[lo_side, other] - mesh.vertices[hi_side, other])
    if mismatch.size and mismatch.max() > tol:
        raise TopologyError(
            f"periodic sides along {axis!r} do not match (max offset {mismatch.max():.3e})"
        )
    pairs = np.concatenate([mesh.periodic_pairs, np.column_stack([lo_side, hi_side])])
    periods = dict(mesh.periods)
    periods[ax] = (lo, hi)
    return Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, mesh.boundary_markers, pairs, periods)
