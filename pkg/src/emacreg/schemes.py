"""Monolithic Newton time stepping for EMAC-Reg, EMAC, SKEW and NS-alpha.

Unknown layout of the global vector:

* filtered schemes (EMAC-Reg, NS-alpha): ``[u, P, w, lam, mu_P, mu_lam]``
* unfiltered schemes (EMAC, SKEW): ``[u, p, mu_p]``

``mu_*`` are scalar multipliers enforcing zero mean of the pressure-like
fields.  Under Crank-Nicolson the momentum equation is evaluated at the
midpoint ``(x^n + x^{n+1}) / 2`` while the divergence and filter equations
are imposed at ``t^{n+1}``; the pressure unknown is the midpoint pressure.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import FactorizationError, NewtonConvergenceError, StateError
from .femspace import DirichletBC, FeSpace, Field, build_space, collect_bcs, interpolate
from .filter import FilterSystem
from .linalg import block_compose, constrain_symmetric, factor, nested_dissection
from .mesh import Mesh
from .operators import NonlinearKind, assemble_operators, load_vector, nonlinear_jacobian, nonlinear_residual

log = logging.getLogger(__name__)

__all__ = [
    "Scheme",
    "Integrator",
    "StepperConfig",
    "State",
    "NewtonInfo",
    "Stepper",
    "run",
]


class Scheme(enum.Enum):
    EMACREG = "emacreg"
    EMAC = "emac"
    SKEW = "skew"
    NSALPHA = "nsalpha"

    @property
    def filtered(self) -> bool:
        return self in (Scheme.EMACREG, Scheme.NSALPHA)


class Integrator(enum.Enum):
    CN = "cn"
    BDF2 = "bdf2"


@dataclass
class StepperConfig:
    scheme: Scheme = Scheme.EMACREG
    integrator: Integrator = Integrator.CN
    dt: float = 0.01
    nu: float = 0.0
    alpha: float = 0.0
    newton_tol: float = 1e-10
    newton_max: int = 20
    forcing: Optional[Callable] = None
    project_initial: bool = True

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        self.integrator = Integrator(self.integrator)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.nu < 0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.newton_max < 1:
            raise ValueError("newton_max must be at least 1")


@dataclass
class State:
    """Discrete unknowns at one time level.

    For EMAC and SKEW ``w`` is the same field as ``u`` and ``lam`` is None.
    """

    t: float
    u: Field
    P: Field
    w: Field
    lam: Optional[Field] = None

    def copy(self) -> State:
        w = self.u.copy() if self.w is self.u else self.w.copy()
        u = w if self.w is self.u else self.u.copy()
        return State(self.t, u, self.P.copy(), w, None if self.lam is None else self.lam.copy())


@dataclass
class NewtonInfo:
    iterations: int = 0
    residuals: list = field(default_factory=list)


def _embed(mat, r0, c0, n):
    coo = sp.coo_matrix(mat)
    return sp.csr_matrix((coo.data, (coo.row + r0, coo.col + c0)), shape=(n, n))


class Stepper:
    """Time stepper for one scheme on one mesh with fixed boundary conditions.

    ``u_bcs`` and ``w_bcs`` are sequences of
    :class:`~emacreg.femspace.DirichletBC`; ``w_bcs`` defaults to ``u_bcs``.
    """

    def __init__(self, config: StepperConfig, mesh: Mesh, u_bcs=(), w_bcs=None):
        self.config = config
        self.mesh = mesh
        self.V = build_space(mesh, 2, 2)
        self.Q = build_space(mesh, 1, 1)
        self.ops = assemble_operators(self.V, self.Q)
        self.u_bcs = tuple(u_bcs)
        self.w_bcs = self.u_bcs if w_bcs is None else tuple(w_bcs)
        self.filtered = config.scheme.filtered
        self.kind = {
            Scheme.EMACREG: NonlinearKind.EMAC,
            Scheme.EMAC: NonlinearKind.EMAC,
            Scheme.SKEW: NonlinearKind.SKEW,
            Scheme.NSALPHA: NonlinearKind.ROT,
        }[config.scheme]

        nu, npr = self.V.num_dofs, self.Q.num_dofs
        self.nu_dofs, self.np_dofs = nu, npr
        if self.filtered:
            sizes = [nu, npr, nu, npr, 1, 1]
        else:
            sizes = [nu, npr, 1]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.size = int(self.offsets[-1])
        self.u_fixed, _ = collect_bcs(self.V, self.u_bcs, 0.0)
        self.w_fixed, _ = collect_bcs(self.V, self.w_bcs, 0.0)
        fixed = [self.u_fixed]
        if self.filtered:
            fixed.append(self.offsets[2] + self.w_fixed)
        self.fixed = np.concatenate(fixed).astype(np.int64)

        self.filter = FilterSystem(self.V, self.Q, config.alpha, self.w_bcs, self.ops) if self.filtered else None
        self._projector = None
        self._linear_cache = {}
        self._ordering = None
        self.last_newton = NewtonInfo()

    # helpers -------------------------------------------------------------------------
    @property
    def projector(self) -> FilterSystem:
        """Discrete L2 projection onto discretely divergence-free velocities."""
        if self._projector is None:
            self._projector = FilterSystem(self.V, self.Q, 0.0, self.u_bcs, self.ops)
        return self._projector

    def block(self, x, i):
        return x[self.offsets[i] : self.offsets[i + 1]]

    def pack(self, state: State) -> np.ndarray:
        x = np.zeros(self.size)
        x[self.offsets[0] : self.offsets[1]] = state.u.coefficients
        x[self.offsets[1] : self.offsets[2]] = state.P.coefficients
        if self.filtered:
            x[self.offsets[2] : self.offsets[3]] = state.w.coefficients
            x[self.offsets[3] : self.offsets[4]] = state.lam.coefficients
        return x

    def unpack(self, x, t) -> State:
        u = Field(self.V, self.block(x, 0).copy())
        P = Field(self.Q, self.block(x, 1).copy())
        if self.filtered:
            w = Field(self.V, self.block(x, 2).copy())
            lam = Field(self.Q, self.block(x, 3).copy())
            return State(t, u, P, w, lam)
        return State(t, u, P, u, None)

    def _impose(self, x, t):
        dofs, vals = collect_bcs(self.V, self.u_bcs, t)
        x[dofs] = vals
        if self.filtered:
            dofs, vals = collect_bcs(self.V, self.w_bcs, t)
            x[self.offsets[2] + dofs] = vals

    def _check_state(self, state, name):
        if state.u.space is not self.V:
            raise ValueError(f"{name} lives on a different velocity space")

    # initial data ----------------------------------------------------------------------
    def initial_state(self, u0, w0=None, t0: float = 0.0) -> State:
        """State at ``t0`` from the velocity ``u0(x, t)``.

        ``u`` is the nodal interpolant with the boundary data imposed, then
        (when ``project_initial``) projected onto discretely divergence-free
        fields.  For filtered schemes ``w`` is the discrete filter of ``u``,
        or the interpolant of ``w0`` when given.
        """
        u = interpolate(self.V, u0, t0)
        dofs, vals = collect_bcs(self.V, self.u_bcs, t0)
        u.coefficients[dofs] = vals
        if self.config.project_initial:
            u, _ = self.projector.apply(u, t0)
        P = Field.zeros(self.Q)
        if not self.filtered:
            return State(t0, u, P, u, None)
        if w0 is None:
            w, lam = self.filter.apply(u, t0)
        else:
            w = interpolate(self.V, w0, t0)
            lam = Field.zeros(self.Q)
        return State(t0, u, P, w, lam)

    # residual and Jacobian -------------------------------------------------------------
    def _time_coefficients(self, older):
        cfg = self.config
        if cfg.integrator is Integrator.CN or older is None:
            return "cn", 1.0 / cfg.dt, 0.5
        return "bdf2", 1.5 / cfg.dt, 1.0

    def _linear_part(self, mode):
        """Constant part of the Jacobian for the given integrator mode."""
        if mode in self._linear_cache:
            return self._linear_cache[mode]
        cfg = self.config
        ct, theta = (1.0 / cfg.dt, 0.5) if mode == "cn" else (1.5 / cfg.dt, 1.0)
        M, A, B = self.ops.M, self.ops.A, self.ops.B
        m = sp.csr_matrix(self.ops.mean.reshape(-1, 1))
        Kuu = ct * M + theta * cfg.nu * A
        if self.filtered:
            F = cfg.alpha**2 * A + M
            grid = [
                [Kuu, -B.T, None, None, None, None],
                [B, None, None, None, m, None],
                [-M, None, F, B.T, None, None],
                [None, None, B, None, None, m],
                [None, m.T, None, None, None, None],
                [None, None, None, m.T, None, None],
            ]
        else:
            grid = [
                [Kuu, -B.T, None],
                [B, None, m],
                [None, m.T, None],
            ]
        sizes = list(np.diff(self.offsets))
        mat = block_compose(grid, sizes, sizes)
        self._linear_cache[mode] = mat
        return mat

    def _forcing(self, t):
        f = self.config.forcing
        if f is None:
            return 0.0
        return load_vector(self.V, f, t)

    def residual(self, new: State, old: State, older: Optional[State] = None) -> np.ndarray:
        """Residual of the discrete equations for the step ``old -> new``.

        Rows are ordered momentum, u-divergence, filter, w-divergence and the
        mean constraints.  Rows of boundary DOFs hold ``x - g(t_new)``.
        """
        if older is not None and self.config.integrator is not Integrator.BDF2:
            raise StateError("a second history level is only used by BDF2")
        return self._residual_vec(self._pack_full(new), old, older, new.t)

    def _pack_full(self, state):
        x = self.pack(state)
        x[self._mu_slice] = getattr(state, "_mu", 0.0)
        return x

    @property
    def _mu_slice(self):
        return slice(self.offsets[4 if self.filtered else 2], self.size)

    def _midpoints(self, x, old, older, mode):
        u1 = self.block(x, 0)
        w1 = self.block(x, 2) if self.filtered else u1
        if mode == "cn":
            ub = 0.5 * (u1 + old.u.coefficients)
            wb = 0.5 * (w1 + old.w.coefficients)
            dudt_num = u1 - old.u.coefficients
        else:
            ub, wb = u1, w1
            dudt_num = 1.5 * u1 - 2.0 * old.u.coefficients + 0.5 * older.u.coefficients
        return u1, w1, ub, wb, dudt_num

    def _residual_vec(self, x, old, older, t1):
        cfg = self.config
        mode, ct, theta = self._time_coefficients(older)
        M, A, B, mean = self.ops.M, self.ops.A, self.ops.B, self.ops.mean
        u1, w1, ub, wb, dnum = self._midpoints(x, old, older, mode)
        P = self.block(x, 1)
        dt = cfg.dt
        tf = old.t + 0.5 * dt if mode == "cn" else t1
        mom = M @ dnum / dt + self._convection(ub, wb) + cfg.nu * (A @ ub) - B.T @ P - self._forcing(tf)
        R = np.zeros(self.size)
        R[self.offsets[0] : self.offsets[1]] = mom
        if self.filtered:
            lam = self.block(x, 3)
            mu_u, mu_w = x[self.offsets[4]], x[self.offsets[5]]
            R[self.offsets[1] : self.offsets[2]] = B @ u1 + mean * mu_u
            R[self.offsets[2] : self.offsets[3]] = (cfg.alpha**2) * (A @ w1) + M @ w1 + B.T @ lam - M @ u1
            R[self.offsets[3] : self.offsets[4]] = B @ w1 + mean * mu_w
            R[self.offsets[4]] = mean @ P
            R[self.offsets[5]] = mean @ lam
        else:
            R[self.offsets[1] : self.offsets[2]] = B @ u1 + mean * x[self.offsets[2]]
            R[self.offsets[2]] = mean @ P
        # boundary rows: x - g(t1)
        g = x.copy()
        self._impose(g, t1)
        R[self.fixed] = x[self.fixed] - g[self.fixed]
        return R

    def _convection(self, ub, wb):
        if self.config.scheme is Scheme.EMACREG:
            return nonlinear_residual(self.kind, self.V, wb, wb)
        if self.config.scheme is Scheme.NSALPHA:
            # ((curl u) x w, v)
            return nonlinear_residual(self.kind, self.V, wb, ub)
        return nonlinear_residual(self.kind, self.V, ub, ub)

    def jacobian(self, x, old, older=None) -> sp.csr_matrix:
        mode, ct, theta = self._time_coefficients(older)
        _, _, ub, wb, _ = self._midpoints(x, old, older, mode)
        nu = self.nu_dofs
        n = self.size
        scheme = self.config.scheme
        if scheme is Scheme.EMACREG:
            J = _embed(theta * nonlinear_jacobian(self.kind, self.V, wb, wb, "both"), 0, self.offsets[2], n)
        elif scheme is Scheme.NSALPHA:
            J = _embed(theta * nonlinear_jacobian(self.kind, self.V, wb, ub, "b"), 0, 0, n)
            J = J + _embed(theta * nonlinear_jacobian(self.kind, self.V, wb, ub, "a"), 0, self.offsets[2], n)
        else:
            J = _embed(theta * nonlinear_jacobian(self.kind, self.V, ub, ub, "both"), 0, 0, n)
        return (self._linear_part(mode) + J).tocsr()

    # Newton ------------------------------------------------------------------------------
    def _guess(self, old: State) -> np.ndarray:
        x = self.pack(old)
        self._impose(x, old.t + self.config.dt)
        return x

    def newton_step(self, guess: State, old: State, older: Optional[State] = None):
        """One monolithic Newton update; returns the new state and its residual norm."""
        x = self._pack_full(guess)
        self._impose(x, guess.t)
        R = self._residual_vec(x, old, older, guess.t)
        x = self._update(x, R, old, older)
        R = self._residual_vec(x, old, older, guess.t)
        return self._to_state(x, guess.t), float(np.abs(R).max())

    @property
    def ordering(self) -> np.ndarray:
        """Nested-dissection ordering of the full Jacobian sparsity pattern."""
        if self._ordering is None:
            M = abs(self.ops.M)
            coupling = (M @ sp.kron(sp.identity(self.V.num_nodes), np.ones((2, 2)))).tocsr()
            pattern = abs(self._linear_part("cn")) + _embed(coupling, 0, 0, self.size)
            if self.filtered:
                pattern = pattern + _embed(coupling, 0, self.offsets[2], self.size)
            self._ordering = nested_dissection(pattern)
        return self._ordering

    def _update(self, x, R, old, older):
        J = constrain_symmetric(self.jacobian(x, old, older), self.fixed)
        rhs = -R
        rhs[self.fixed] = 0.0
        try:
            delta = factor(J, self.ordering).solve(rhs)
        except FactorizationError as exc:
            raise FactorizationError(
                f"Newton Jacobian singular at t={old.t + self.config.dt:g}: {exc}", exc.pivot
            ) from exc
        return x + delta

    def _to_state(self, x, t):
        s = self.unpack(x, t)
        s._mu = x[self._mu_slice].copy()
        return s

    def advance(self, state: State, history: Optional[State] = None) -> State:
        """Advance one step.  ``history`` is the level before ``state`` (BDF2 only).

        BDF2 without history takes a Crank-Nicolson step.
        """
        cfg = self.config
        older = history if cfg.integrator is Integrator.BDF2 else None
        t1 = state.t + cfg.dt
        x = self._guess(state)
        info = NewtonInfo()
        R = self._residual_vec(x, state, older, t1)
        rn = float(np.abs(R).max())
        info.residuals.append(rn)
        while rn > cfg.newton_tol:
            if info.iterations >= cfg.newton_max:
                self.last_newton = info
                raise NewtonConvergenceError(
                    f"Newton did not converge at t={t1:g}: residual {rn:.3e} after {info.iterations} iterations",
                    residual_norm=rn,
                    iterations=info.iterations,
                    time=t1,
                )
            x = self._update(x, R, state, older)
            info.iterations += 1
            R = self._residual_vec(x, state, older, t1)
            rn = float(np.abs(R).max())
            info.residuals.append(rn)
        self.last_newton = info
        log.debug("t=%.6g newton iterations=%d residual=%.3e", t1, info.iterations, rn)
        return self._to_state(x, t1)


def run(config: StepperConfig, benchmark, end_time: Optional[float] = None, observers=(), exact_errors: bool = True):
    """Run ``benchmark`` to ``end_time`` (default ``benchmark.T``) and return the diagnostics records.

    ``observers`` are called as ``observer(stepper, state, record)`` after the
    initial state and after every step.
    """
    from .diagnostics import diagnostics_record

    stepper = Stepper(config, benchmark.build_mesh(), benchmark.u_bcs, benchmark.w_bcs)
    exact = benchmark.exact if exact_errors else None
    end_time = benchmark.T if end_time is None else end_time
    nsteps = int(round(end_time / config.dt))
    if end_time < 0 or abs(nsteps * config.dt - end_time) > 1e-9 * max(1.0, end_time):
        raise ValueError(f"end_time {end_time} is not a non-negative multiple of dt {config.dt}")
    w0 = benchmark.w0 if benchmark.use_exact_w0 else None
    state = stepper.initial_state(benchmark.u0, w0)
    records = [diagnostics_record(stepper, state, exact)]
    for obs in observers:
        obs(stepper, state, records[-1])
    prev = None
    for _ in range(nsteps):
        try:
            new = stepper.advance(state, prev)
        except (NewtonConvergenceError, FactorizationError) as exc:
            log.error("step failed at t=%.6g: %s", state.t + config.dt, exc)
            raise
        prev, state = state, new
        records.append(diagnostics_record(stepper, state, exact))
        for obs in observers:
            obs(stepper, state, records[-1])
    return records
