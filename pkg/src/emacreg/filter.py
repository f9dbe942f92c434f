"""Helmholtz filter with a divergence constraint.

Given ``u`` find ``(w, lam)`` with

    (lam, div chi) + alpha^2 (grad w, grad chi) + (w, chi) = (u, chi)
    (div w, r) = 0

for all discrete ``chi`` and mean-zero ``r``.  The mean of ``lam`` is pinned
by one scalar Lagrange multiplier, so the assembled matrix is
``[[alpha^2 A + M, B^T, 0], [B, 0, m], [0, m^T, 0]]``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .femspace import DirichletBC, FeSpace, Field, collect_bcs
from .linalg import block_compose, constrain_symmetric, factor, nested_dissection
from .operators import OperatorSet, assemble_operators

__all__ = ["FilterSystem", "build_filter", "apply_filter"]


class FilterSystem:
    """Saddle-point system of the filter with its cached factorization.

    ``bcs`` is a sequence of :class:`~emacreg.femspace.DirichletBC` for
    ``w``.  ``None`` selects homogeneous Dirichlet data on every marked
    boundary edge; an empty sequence leaves ``w`` natural on the boundary.
    """

    def __init__(self, vel_space: FeSpace, pres_space: FeSpace, alpha: float, bcs=None, ops: OperatorSet | None = None):
        if alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {alpha}")
        self.vel_space = vel_space
        self.pres_space = pres_space
        self.alpha = float(alpha)
        if bcs is None:
            markers = tuple(sorted(set(vel_space.mesh.boundary_markers), key=lambda m: m.value))
            bcs = (DirichletBC(markers),) if markers else ()
        self.bcs = tuple(bcs)
        self.ops = ops if ops is not None else assemble_operators(vel_space, pres_space)
        nu, npr = vel_space.num_dofs, pres_space.num_dofs
        m = sp.csr_matrix(self.ops.mean.reshape(-1, 1))
        self.full_matrix = block_compose(
            [
                [self.alpha**2 * self.ops.A + self.ops.M, self.ops.B.T, None],
                [self.ops.B, None, m],
                [None, m.T, None],
            ],
            row_sizes=[nu, npr, 1],
            col_sizes=[nu, npr, 1],
        )
        self.fixed, _ = collect_bcs(vel_space, self.bcs, 0.0)
        self.matrix = constrain_symmetric(self.full_matrix, self.fixed)
        self._fact = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def factorization(self):
        if self._fact is None:
            self._fact = factor(self.matrix, nested_dissection(self.full_matrix))
        return self._fact

    def apply(self, u, t: float = 0.0):
        """Filter ``u``; the boundary data of ``w`` is taken at time ``t``."""
        cu = u.coefficients if isinstance(u, Field) else np.asarray(u, dtype=float)
        nu, npr = self.vel_space.num_dofs, self.pres_space.num_dofs
        rhs = np.zeros(self.matrix.shape[0])
        rhs[:nu] = self.ops.M @ cu
        fixed, values = collect_bcs(self.vel_space, self.bcs, t)
        if len(fixed):
            lift = np.zeros_like(rhs)
            lift[fixed] = values
            rhs -= self.full_matrix @ lift
            rhs[fixed] = values
        x = self.factorization.solve(rhs)
        w = Field(self.vel_space, x[:nu])
        lam = Field(self.pres_space, x[nu : nu + npr])
        return w, lam


def build_filter(vel_space, pres_space, alpha, bcs=None) -> FilterSystem:
    return FilterSystem(vel_space, pres_space, alpha, bcs)


def apply_filter(system: FilterSystem, u, t: float = 0.0):
    return system.apply(u, t)
