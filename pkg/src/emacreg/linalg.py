"""Sparse storage, block composition and direct factorization.

Backed by ``scipy.sparse`` (CSR storage) and SuperLU.  Saddle-point systems
are symmetrically permuted by a METIS nested-dissection ordering and then
factored with a relaxed diagonal pivot threshold; SuperLU's own COLAMD
ordering is the fallback for matrices without a precomputed ordering.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import pymetis
import scipy.sparse.linalg as spla

from .errors import FactorizationError

log = logging.getLogger(__name__)

__all__ = [
    "from_triplets",
    "block_compose",
    "Factorization",
    "factor",
    "solve",
    "constrain_symmetric",
    "nested_dissection",
    "CHECK_RESIDUALS",
]

# set to True to assert the residual bound after every solve
CHECK_RESIDUALS = False


def from_triplets(rows, cols, values, shape) -> sp.csr_matrix:
    """CSR matrix from COO triplets; duplicate entries are summed."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (len(rows) == len(cols) == len(values)):
        raise ValueError("triplet arrays must have equal length")
    n, m = shape
    if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise ValueError(f"triplet index out of range for shape {shape}")
    mat = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def block_compose(blocks, row_sizes=None, col_sizes=None) -> sp.csr_matrix:
    """Assemble a grid of blocks (``None`` for zero blocks) into one matrix.

    Sizes of rows or columns made only of ``None`` must be passed explicitly.
    """
    nr = len(blocks)
    nc = len(blocks[0])
    if any(len(r) != nc for r in blocks):
        raise ValueError("block grid is ragged")
    rs = list(row_sizes) if row_sizes is not None else [None] * nr
    cs = list(col_sizes) if col_sizes is not None else [None] * nc
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            r, c = b.shape
            if rs[i] is None:
                rs[i] = r
            if cs[j] is None:
                cs[j] = c
            if rs[i] != r or cs[j] != c:
                raise ValueError(
                    f"block ({i}, {j}) has shape {b.shape}, expected ({rs[i]}, {cs[j]})"
                )
    if None in rs or None in cs:
        raise ValueError("cannot infer the size of an empty block row or column")
    grid = [
        [sp.csr_matrix(b) if b is not None else sp.csr_matrix((rs[i], cs[j])) for j, b in enumerate(row)]
        for i, row in enumerate(blocks)
    ]
    out = sp.bmat(grid, format="csr")
    out.sum_duplicates()
    out.sort_indices()
    return out


def constrain_symmetric(matrix, fixed) -> sp.csr_matrix:
    """Zero the rows and columns in ``fixed`` and put ones on their diagonal."""
    n = matrix.shape[0]
    keep = np.ones(n)
    keep[np.asarray(fixed, dtype=np.int64)] = 0.0
    D = sp.diags(keep)
    out = (D @ matrix @ D + sp.diags(1.0 - keep)).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def nested_dissection(matrix, dense_threshold: int = 1000) -> np.ndarray:
    """Fill-reducing symmetric permutation of the graph of ``|A| + |A^T|``.

    Rows with more than ``dense_threshold`` entries (multiplier rows) are
    kept out of the graph and ordered last.
    """
    csr = sp.csr_matrix(matrix)
    n = csr.shape[0]
    pattern = sp.csr_matrix((np.ones(csr.nnz), csr.indices, csr.indptr), shape=csr.shape)
    graph = (pattern + pattern.T).tocsr()
    graph.setdiag(0)
    graph.eliminate_zeros()
    deg = np.diff(graph.indptr)
    dense = np.flatnonzero(deg > dense_threshold)
    keep = np.flatnonzero(deg <= dense_threshold)
    sub = graph[keep][:, keep].tocsr()
    if sub.nnz == 0:
        return np.concatenate([keep, dense])
    perm, _ = pymetis.nested_dissection(pymetis.CSRAdjacency(sub.indptr, sub.indices))
    return np.concatenate([keep[np.asarray(perm, dtype=np.int64)], dense])


class Factorization:
    """LU factors of a square sparse matrix.

    With ``ordering`` the matrix is permuted symmetrically and factored with
    threshold ``pivot_threshold`` on the diagonal, which keeps the ordering
    intact wherever the diagonal is large enough.
    """

    def __init__(self, matrix, ordering=None, pivot_threshold: float = 0.01):
        self.matrix = sp.csc_matrix(matrix)
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"cannot factor a non-square {n}x{m} matrix")
        self.ordering = None if ordering is None else np.asarray(ordering, dtype=np.int64)
        try:
            if self.ordering is None:
                self._lu = spla.splu(self.matrix, permc_spec="COLAMD")
            else:
                if self.ordering.shape != (n,):
                    raise ValueError(f"ordering has shape {self.ordering.shape}, expected ({n},)")
                p = self.ordering
                permuted = sp.csc_matrix(sp.csr_matrix(self.matrix)[p][:, p])
                self._lu = spla.splu(
                    permuted,
                    permc_spec="NATURAL",
                    diag_pivot_thresh=pivot_threshold,
                    options=dict(SymmetricMode=True),
                )
        except RuntimeError as exc:
            pivot = _zero_pivot(self.matrix)
            raise FactorizationError(f"matrix is singular ({exc}); zero pivot near row {pivot}", pivot) from exc
        diag = self._lu.U.diagonal()
        if np.any(diag == 0.0) or not np.all(np.isfinite(diag)):
            k = int(np.flatnonzero((diag == 0.0) | ~np.isfinite(diag))[0])
            raise FactorizationError(f"matrix is singular; zero pivot at position {k}", k)

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self.ordering is None:
            x = self._lu.solve(rhs)
        else:
            x = np.empty_like(rhs)
            x[self.ordering] = self._lu.solve(rhs[self.ordering])
        if CHECK_RESIDUALS:
            r = np.abs(self.matrix @ x - rhs).max()
            assert r <= 1e-10 * (np.abs(rhs).max() + 1.0), f"solve residual {r:.3e}"
        return x


def _zero_pivot(matrix) -> int:
    """Best-effort location of the structurally empty row causing singularity."""
    csr = sp.csr_matrix(matrix)
    empty = np.flatnonzero(np.diff(csr.indptr) == 0)
    if len(empty):
        return int(empty[0])
    dense_ok = matrix.shape[0] <= 2000
    if dense_ok:
        _, s, vt = np.linalg.svd(csr.toarray())
        return int(np.argmax(np.abs(vt[-1])))
    return -1


def factor(matrix, ordering=None) -> Factorization:
    return Factorization(matrix, ordering)


def solve(fact: Factorization, rhs) -> np.ndarray:
    return fact.solve(rhs)
