"""Conserved quantities, error norms and momentum probes.

All functionals are evaluated by quadrature on the velocity space.  The
angular momentum is the scalar ``(u, phi)`` with ``phi = (y, -x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .femspace import DEFAULT_ORDER, Field, interpolate
from .operators import NonlinearKind, nonlinear_residual

__all__ = [
    "DiagnosticsRecord",
    "conserved_quantities",
    "errors_vs_analytic",
    "diagnostics_record",
    "model_energy_split",
    "momentum_probe",
    "probe_test_field",
    "designed_probe_fields",
    "ERROR_ORDER",
    "PROBE_BOX",
]

ERROR_ORDER = 8
PROBE_BOX = (0.25, 0.75)


@dataclass
class DiagnosticsRecord:
    t: float
    energy_model: float
    energy_kinetic: float
    momentum: tuple
    ang_momentum: float
    enstrophy: float
    div_u: float
    div_w: float
    err_l2_u: Optional[float] = None
    err_l2_w: Optional[float] = None
    err_h1_w: Optional[float] = None

    def as_row(self) -> dict:
        row = {f.name: getattr(self, f.name) for f in fields(self)}
        mx, my = row.pop("momentum")
        row["momentum_x"], row["momentum_y"] = mx, my
        return row


def _vals_grads(field: Field, order: int):
    ed = field.space.element_data(order)
    return ed, ed.values(field.coefficients), ed.gradients(field.coefficients)


def conserved_quantities(state, order: int = DEFAULT_ORDER):
    """``(E, M, AM)`` with ``E = (u, w) / 2``, ``M = ((u, e_1), (u, e_2))`` and ``AM = (u, phi)``."""
    ed = state.u.space.element_data(order)
    uv = ed.values(state.u.coefficients)
    wv = uv if state.w is state.u else ed.values(state.w.coefficients)
    x, y = ed.xq[..., 0], ed.xq[..., 1]
    E = 0.5 * ed.integrate(np.sum(uv * wv, axis=-1))
    M = np.array([ed.integrate(uv[..., 0]), ed.integrate(uv[..., 1])])
    AM = ed.integrate(uv[..., 0] * y - uv[..., 1] * x)
    return E, M, AM


def model_energy_split(w: Field, alpha: float, order: int = DEFAULT_ORDER) -> float:
    """``||w||^2 / 2 + alpha^2 / 2 ||grad w||^2``."""
    ed, wv, wg = _vals_grads(w, order)
    return 0.5 * ed.integrate(np.sum(wv**2, axis=-1)) + 0.5 * alpha**2 * ed.integrate(np.sum(wg**2, axis=(-1, -2)))


def _div_norm(field: Field, order: int) -> float:
    ed, _, g = _vals_grads(field, order)
    return float(np.sqrt(ed.integrate((g[..., 0, 0] + g[..., 1, 1]) ** 2)))


def _enstrophy(field: Field, order: int) -> float:
    ed, _, g = _vals_grads(field, order)
    return 0.5 * ed.integrate((g[..., 1, 0] - g[..., 0, 1]) ** 2)


def errors_vs_analytic(state, exact, t: Optional[float] = None, order: int = ERROR_ORDER):
    """``(||u - u_h||, ||w - w_h||, |w - w_h|_1)`` at time ``t`` (default ``state.t``).

    ``exact`` provides ``u(x, t)``, ``w(x, t)`` and ``grad_w(x, t)``; the last
    returns ``(n, 2, 2)`` arrays with ``[..., i, j] = d w_i / d x_j``.  The H1
    error is the seminorm.
    """
    t = state.t if t is None else t
    ed = state.u.space.element_data(order)
    pts = ed.xq.reshape(-1, 2)
    shape = ed.xq.shape[:2]
    ue = np.asarray(exact.u(pts, t)).reshape(*shape, 2)
    we = np.asarray(exact.w(pts, t)).reshape(*shape, 2)
    ge = np.asarray(exact.grad_w(pts, t)).reshape(*shape, 2, 2)
    eu = ed.values(state.u.coefficients) - ue
    ew = ed.values(state.w.coefficients) - we
    eg = ed.gradients(state.w.coefficients) - ge
    l2u = np.sqrt(ed.integrate(np.sum(eu**2, axis=-1)))
    l2w = np.sqrt(ed.integrate(np.sum(ew**2, axis=-1)))
    h1w = np.sqrt(ed.integrate(np.sum(eg**2, axis=(-1, -2))))
    return float(l2u), float(l2w), float(h1w)


def diagnostics_record(stepper, state, exact=None, order: int = DEFAULT_ORDER) -> DiagnosticsRecord:
    E, M, AM = conserved_quantities(state, order)
    ed, uv, _ = _vals_grads(state.u, order)
    ek = 0.5 * ed.integrate(np.sum(uv**2, axis=-1))
    errs = (None, None, None) if exact is None else errors_vs_analytic(state, exact)
    return DiagnosticsRecord(
        t=float(state.t),
        energy_model=float(E),
        energy_kinetic=float(ek),
        momentum=(float(M[0]), float(M[1])),
        ang_momentum=float(AM),
        enstrophy=float(_enstrophy(state.u, order)),
        div_u=_div_norm(state.u, order),
        div_w=_div_norm(state.w, order),
        err_l2_u=errs[0],
        err_l2_w=errs[1],
        err_h1_w=errs[2],
    )


# momentum probes ----------------------------------------------------------------------


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _rolloff(x, lo, hi):
    """1 on ``[lo, hi]``, smooth decay to 0 at 0 and 1."""
    return np.where(x < lo, _smoothstep(x / lo), np.where(x > hi, _smoothstep((1.0 - x) / (1.0 - hi)), 1.0))


_TESTS = {
    "e1": lambda x: np.stack([np.ones(len(x)), np.zeros(len(x))], axis=1),
    "e2": lambda x: np.stack([np.zeros(len(x)), np.ones(len(x))], axis=1),
    "phi": lambda x: np.stack([x[:, 1], -x[:, 0]], axis=1),
}


def probe_test_field(space, test: str, box=PROBE_BOX) -> Field:
    """Interpolant of ``chi * g`` where ``g`` is ``e_1``, ``e_2`` or ``phi``.

    ``chi`` equals 1 on ``box``^2 and rolls off smoothly in the strip
    between the box and the boundary of the unit square.
    """
    if test not in _TESTS:
        raise ValueError(f"test must be one of {sorted(_TESTS)}, got {test!r}")
    lo, hi = box
    g = _TESTS[test]

    def chi(x, t):
        r = _rolloff(x[:, 0], lo, hi) * _rolloff(x[:, 1], lo, hi)
        return r[:, None] * g(x)

    return interpolate(space, chi)


def _check_support(field: Field, box, tol=1e-12):
    lo, hi = box
    xy = field.space.node_coords
    inside = np.all((xy > lo + tol) & (xy < hi - tol), axis=1)
    outside = np.abs(field.nodal[~inside]).max(initial=0.0)
    if outside > 0.0:
        raise ValueError(f"field is not supported inside the probe box {box}: |value| {outside:.3e} outside")


def momentum_probe(kind, w: Field, u: Field, test: str = "e1", box=PROBE_BOX) -> float:
    """Value of the convective form tested against the extension of ``test``.

    The EMAC probe is ``c(w, w; chi)``; every other kind evaluates
    ``N(w, u; chi)``, so ROT gives ``((curl u) x w, chi)`` and LERAY gives
    ``(w . grad u, chi)``.  Both fields must vanish outside ``box``^2.
    """
    kind = NonlinearKind(kind)
    if w.space is not u.space:
        raise ValueError("w and u live on different spaces")
    _check_support(w, box)
    _check_support(u, box)
    chi = probe_test_field(w.space, test, box)
    b = w.coefficients if kind is NonlinearKind.EMAC else u.coefficients
    return float(nonlinear_residual(kind, w.space, w.coefficients, b) @ chi.coefficients)


def _bump(s, box=PROBE_BOX, tol=1e-12):
    lo, hi = box
    scale = 4.0 / (hi - lo) ** 2
    return np.where((s > lo + tol) & (s < hi - tol), (scale * (s - lo) * (hi - s)) ** 3, 0.0)


def designed_probe_fields(space, box=PROBE_BOX):
    """Non-solenoidal pair ``w = b (x, y)``, ``u = b (1, x)`` with ``b`` a cubic bump on ``box``^2.

    Both fields are interpolated into ``space``; they vanish outside the box.
    """

    def b(x):
        return _bump(x[:, 0], box) * _bump(x[:, 1], box)

    w = interpolate(space, lambda x, t: b(x)[:, None] * x)
    u = interpolate(space, lambda x, t: b(x)[:, None] * np.stack([np.ones(len(x)), x[:, 0]], axis=1))
    return w, u
