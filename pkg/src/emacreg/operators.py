"""Finite element operators: mass, stiffness, divergence and the convective forms.

Every convective form is written as ``N(a, b; v) = (F(a, b), v)`` with ``F``
bilinear and pointwise in the values and gradients of ``a`` and ``b``.  One
kernel per form therefore gives the residual vector, the Jacobian with
respect to either slot, and the self-coupled Jacobian used by Newton.
Gradients follow ``grad[..., i, j] = d u_i / d x_j``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .femspace import DEFAULT_ORDER, FeSpace, Field
from .linalg import from_triplets

__all__ = [
    "NonlinearKind",
    "OperatorSet",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_divergence",
    "assemble_mean",
    "assemble_operators",
    "apply_nonlinear",
    "assemble_nonlinear_jacobian",
    "trilinear",
]


class NonlinearKind(enum.Enum):
    EMAC = "emac"
    SKEW = "skew"
    CONV = "conv"
    ROT = "rot"
    LERAY = "leray"


def _matvec(g, v):
    # explicit 2x2 products; einsum is slow on these broadcast shapes
    return np.stack(
        [g[..., 0, 0] * v[..., 0] + g[..., 0, 1] * v[..., 1], g[..., 1, 0] * v[..., 0] + g[..., 1, 1] * v[..., 1]],
        axis=-1,
    )


def _div(g):
    return g[..., 0, 0] + g[..., 1, 1]


def _emac(av, ag, bv, bg):
    # 2 D(a) b + (div a) b
    return _matvec(ag, bv) + _matvec(np.swapaxes(ag, -1, -2), bv) + _div(ag)[..., None] * bv


def _skew(av, ag, bv, bg):
    return _matvec(bg, av) + 0.5 * _div(ag)[..., None] * bv


def _conv(av, ag, bv, bg):
    return _matvec(bg, av)


def _rot(av, ag, bv, bg):
    # (curl b) x a with the scalar 2D curl embedded along e_3
    omega = bg[..., 1, 0] - bg[..., 0, 1]
    return omega[..., None] * np.stack([-av[..., 1], av[..., 0]], axis=-1)


KERNELS = {
    NonlinearKind.EMAC: _emac,
    NonlinearKind.SKEW: _skew,
    NonlinearKind.CONV: _conv,
    NonlinearKind.ROT: _rot,
    NonlinearKind.LERAY: _conv,
}


@dataclass
class OperatorSet:
    """Linear operators of a Taylor-Hood pair.

    ``M`` and ``A`` act on velocity DOFs, ``B`` maps velocity to pressure
    test functions (``B[q, v] = (q, div v)``), ``Mp`` is the pressure mass
    matrix and ``mean`` holds ``(1, q_i)``.
    """

    M: sp.csr_matrix
    A: sp.csr_matrix
    B: sp.csr_matrix
    Mp: sp.csr_matrix
    mean: np.ndarray


def _scalar_local(space, kernel):
    ed = space.element_data(DEFAULT_ORDER)
    local = kernel(ed)
    rows = np.repeat(space.cell_nodes[:, :, None], space.nloc, axis=2)
    cols = np.repeat(space.cell_nodes[:, None, :], space.nloc, axis=1)
    n = space.num_nodes
    mat = from_triplets(rows, cols, local, (n, n))
    if space.components == 2:
        mat = sp.kron(mat, sp.identity(2), format="csr")
        mat.sort_indices()
    return mat


def assemble_mass(space: FeSpace) -> sp.csr_matrix:
    return _scalar_local(space, lambda ed: np.einsum("eq,qk,ql->ekl", ed.wdet, ed.phi, ed.phi))


def assemble_stiffness(space: FeSpace) -> sp.csr_matrix:
    return _scalar_local(space, lambda ed: np.einsum("eq,eqkd,eqld->ekl", ed.wdet, ed.dphi, ed.dphi))


def assemble_divergence(vel_space: FeSpace, pres_space: FeSpace) -> sp.csr_matrix:
    """``B[q, 2 k + i] = (psi_q, d phi_k / d x_i)``."""
    if vel_space.mesh is not pres_space.mesh:
        raise ValueError("velocity and pressure spaces live on different meshes")
    if vel_space.components != 2 or pres_space.components != 1:
        raise ValueError("divergence needs a vector velocity space and a scalar pressure space")
    ev = vel_space.element_data(DEFAULT_ORDER)
    ep = pres_space.element_data(DEFAULT_ORDER)
    local = np.einsum("eq,qp,eqkd->epkd", ev.wdet, ep.phi, ev.dphi)
    ne, npl, nvl, _ = local.shape
    rows = np.broadcast_to(pres_space.cell_nodes[:, :, None, None], local.shape)
    cols = 2 * vel_space.cell_nodes[:, None, :, None] + np.arange(2)[None, None, None, :]
    cols = np.broadcast_to(cols, local.shape)
    return from_triplets(rows, cols, local, (pres_space.num_dofs, vel_space.num_dofs))


def assemble_mean(space: FeSpace) -> np.ndarray:
    """Integrals of the scalar basis functions."""
    ed = space.element_data(DEFAULT_ORDER)
    local = np.einsum("eq,qk->ek", ed.wdet, ed.phi)
    return np.bincount(space.cell_nodes.ravel(), local.ravel(), minlength=space.num_nodes)


def assemble_operators(vel_space: FeSpace, pres_space: FeSpace) -> OperatorSet:
    return OperatorSet(
        M=assemble_mass(vel_space),
        A=assemble_stiffness(vel_space),
        B=assemble_divergence(vel_space, pres_space),
        Mp=assemble_mass(pres_space),
        mean=assemble_mean(pres_space),
    )


# nonlinear forms ----------------------------------------------------------------------


def _coeffs(space, x):
    c = x.coefficients if isinstance(x, Field) else np.asarray(x, dtype=float)
    if c.shape != (space.num_dofs,):
        raise ValueError(f"field has {c.shape} coefficients, space needs {space.num_dofs}")
    return c


def _check(kind, space, *fields):
    if not isinstance(kind, NonlinearKind):
        kind = NonlinearKind(kind)
    for f in fields:
        if isinstance(f, Field) and f.space is not space:
            raise ValueError("fields live on different spaces")
    if space.components != 2:
        raise ValueError(f"{kind.value} form needs a vector velocity space")
    return kind


def _space_of(*fields):
    for f in fields:
        if isinstance(f, Field):
            return f.space
    raise ValueError("a space is required when passing raw coefficient arrays")


def nonlinear_residual(kind: NonlinearKind, space: FeSpace, a, b, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Vector with entries ``N(a, b; phi_i)`` for coefficient arrays ``a``, ``b``."""
    ed = space.element_data(order)
    av, ag = ed.values(a), ed.gradients(a)
    bv, bg = (av, ag) if b is a else (ed.values(b), ed.gradients(b))
    flux = KERNELS[kind](av, ag, bv, bg)
    local = np.einsum("eq,qk,eqi->eki", ed.wdet, ed.phi, flux)
    return np.bincount(space.cell_dofs.ravel(), local.ravel(), minlength=space.num_dofs)


def _trial(ed):
    """Vector basis functions ordered ``2 k + i`` as values and gradients."""
    nq, nloc = ed.phi.shape
    ne = ed.dphi.shape[0]
    eye = np.eye(2)
    tv = (ed.phi[:, :, None, None] * eye[None, None, :, :]).reshape(nq, 2 * nloc, 2)
    tg = (eye[None, None, None, :, :, None] * ed.dphi[:, :, :, None, None, :]).reshape(ne, nq, 2 * nloc, 2, 2)
    return tv[None], tg


def nonlinear_jacobian(kind: NonlinearKind, space: FeSpace, a, b, wrt: str = "both", order: int = DEFAULT_ORDER):
    """Sparse derivative of ``nonlinear_residual`` in the direction of a trial field.

    ``wrt`` selects the differentiated slot: ``"a"``, ``"b"`` or ``"both"``
    (the self-coupled case ``a = b``).
    """
    if wrt not in ("a", "b", "both"):
        raise ValueError(f"wrt must be 'a', 'b' or 'both', got {wrt!r}")
    ed = space.element_data(order)
    kern = KERNELS[kind]
    av, ag = ed.values(a)[:, :, None], ed.gradients(a)[:, :, None]
    bv, bg = ed.values(b)[:, :, None], ed.gradients(b)[:, :, None]
    tv, tg = _trial(ed)
    flux = 0.0
    if wrt in ("b", "both"):
        flux = flux + kern(av, ag, tv, tg)
    if wrt in ("a", "both"):
        flux = flux + kern(tv, tg, bv, bg)
    local = np.einsum("eq,qk,eqti->ekit", ed.wdet, ed.phi, flux, optimize=True)
    ne, nloc = local.shape[:2]
    local = local.reshape(ne, 2 * nloc, 2 * nloc)
    dofs = space.cell_dofs
    rows = np.repeat(dofs[:, :, None], 2 * nloc, axis=2)
    cols = np.repeat(dofs[:, None, :], 2 * nloc, axis=1)
    n = space.num_dofs
    return from_triplets(rows, cols, local, (n, n))


def apply_nonlinear(kind, a, b, space: FeSpace | None = None) -> np.ndarray:
    """Residual vector ``N(a, b; phi_i)`` over the velocity test functions."""
    space = space or _space_of(a, b)
    kind = _check(kind, space, a, b)
    ca = _coeffs(space, a)
    cb = ca if b is a else _coeffs(space, b)
    return nonlinear_residual(kind, space, ca, cb)


def assemble_nonlinear_jacobian(kind, a, b, wrt: str = "both", space: FeSpace | None = None) -> sp.csr_matrix:
    space = space or _space_of(a, b)
    kind = _check(kind, space, a, b)
    return nonlinear_jacobian(kind, space, _coeffs(space, a), _coeffs(space, b), wrt)


def trilinear(kind, a, b, c, space: FeSpace | None = None) -> float:
    """``N(a, b; c)`` for three fields on one space."""
    space = space or _space_of(a, b, c)
    return float(apply_nonlinear(kind, a, b, space) @ _coeffs(space, c))


def load_vector(space: FeSpace, f, t: float = 0.0, order: int = DEFAULT_ORDER) -> np.ndarray:
    """``(f(., t), phi_i)`` for a vector source ``f(x, t)`` evaluated at quadrature points."""
    ed = space.element_data(order)
    ne, nq, _ = ed.xq.shape
    vals = np.asarray(f(ed.xq.reshape(-1, 2), t), dtype=float).reshape(ne, nq, -1)
    local = np.einsum("eq,qk,eqi->eki", ed.wdet, ed.phi, vals)
    return np.bincount(space.cell_dofs.ravel(), local.ravel(), minlength=space.num_dofs)
