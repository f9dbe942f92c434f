"""Benchmark problems: analytic data, boundary conditions and parameter sets.

Each factory returns an immutable :class:`BenchmarkSpec`.  Parameter
defaults follow the published experiments; ``desk`` variants shrink the
mesh or the final time where a run would otherwise take hours.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .femspace import DirichletBC
from .mesh import Marker, build_rectangle_mesh, build_step_channel_mesh, identify_periodic
from .schemes import Integrator, Scheme, StepperConfig

log = logging.getLogger(__name__)

__all__ = [
    "AnalyticSolution",
    "BenchmarkSpec",
    "chorin_like",
    "gresho",
    "step_channel",
    "kelvin_helmholtz",
    "BENCHMARKS",
    "get_benchmark",
    "ConvergenceRow",
    "convergence_study",
    "rates",
]

WALLS = (Marker.BOTTOM, Marker.RIGHT, Marker.TOP, Marker.LEFT)


@dataclass(frozen=True)
class AnalyticSolution:
    """Closed-form ``u``, ``w``, ``grad w`` and ``p`` as functions of ``(x, t)``.

    ``x`` is an ``(n, 2)`` array.  ``exact`` names the fields that solve the
    model equations exactly; the others are reference data only.
    """

    u: Callable
    w: Callable
    grad_w: Callable
    p: Callable
    exact: tuple = ("u", "w", "p")


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    mesh_factory: Callable
    h: float
    nu: float
    alpha: float
    dt: float
    T: float
    integrator: Integrator
    u0: Callable
    u_bcs: tuple = ()
    w_bcs: Optional[tuple] = None
    w0: Optional[Callable] = None
    forcing: Optional[Callable] = None
    exact: Optional[AnalyticSolution] = None
    use_exact_w0: bool = False
    variant: str = "paper"
    description: str = ""

    def build_mesh(self):
        return self.mesh_factory(self.h)

    def config(self, scheme=Scheme.EMACREG, **overrides) -> StepperConfig:
        """Stepper configuration; ``alpha`` is dropped for unfiltered schemes."""
        scheme = Scheme(scheme)
        params = dict(
            scheme=scheme,
            integrator=self.integrator,
            dt=self.dt,
            nu=self.nu,
            alpha=self.alpha if scheme.filtered else 0.0,
            forcing=self.forcing,
        )
        params.update(overrides)
        return StepperConfig(**params)

    def with_(self, **changes) -> BenchmarkSpec:
        return replace(self, **changes)


def _unit_square(h):
    n = int(round(1.0 / h))
    if n < 1 or abs(n * h - 1.0) > 1e-9:
        raise ValueError(f"h must be 1/n for an integer n, got {h}")
    return build_rectangle_mesh(n, n)


# 4.1: decaying vortex array -----------------------------------------------------------


def chorin_like(h: float = 1.0 / 8, nu: float = 0.2, dt: float = 0.005, T: float = 1.0, alpha: Optional[float] = None) -> BenchmarkSpec:
    """Decaying vortex array on the unit square with ``alpha = h / 2``.

    ``w = (-cos(pi x) sin(pi y), sin(pi x) cos(pi y)) exp(-2 pi^2 nu t)``,
    ``u = (1 + 2 pi^2 alpha^2) w`` and ``grad p = -w . grad w``; no forcing.
    """
    alpha = h / 2 if alpha is None else alpha
    k = 1.0 + 2.0 * math.pi**2 * alpha**2
    pi = math.pi

    def w(x, t):
        d = math.exp(-2 * pi**2 * nu * t)
        return d * np.stack([-np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1]), np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1])], axis=1)

    def u(x, t):
        return k * w(x, t)

    def grad_w(x, t):
        d = math.exp(-2 * pi**2 * nu * t)
        sx, cx = np.sin(pi * x[:, 0]), np.cos(pi * x[:, 0])
        sy, cy = np.sin(pi * x[:, 1]), np.cos(pi * x[:, 1])
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = pi * sx * sy
        g[:, 0, 1] = -pi * cx * cy
        g[:, 1, 0] = pi * cx * cy
        g[:, 1, 1] = -pi * sx * sy
        return d * g

    def p(x, t):
        # grad p = -w . grad w; the constant makes p vanish at the stagnation point
        d = math.exp(-4 * pi**2 * nu * t)
        return -0.25 * d * (2.0 + np.cos(2 * pi * x[:, 0]) + np.cos(2 * pi * x[:, 1]))

    exact = AnalyticSolution(u=u, w=w, grad_w=grad_w, p=p)
    return BenchmarkSpec(
        name="chorin",
        mesh_factory=_unit_square,
        h=h,
        nu=nu,
        alpha=alpha,
        dt=dt,
        T=T,
        integrator=Integrator.CN,
        u0=u,
        w0=w,
        u_bcs=(DirichletBC(WALLS, u),),
        w_bcs=(DirichletBC(WALLS, w),),
        exact=exact,
        description="decaying vortex array with an exact solution",
    )


# 4.2: Gresho vortex -------------------------------------------------------------------

GRESHO_C2 = -12.5 * 0.4**2 + 20 * 0.4**2 - 4 * math.log(0.4)
GRESHO_C1 = GRESHO_C2 - 20 * 0.2 + 4 * math.log(0.2)


def gresho_velocity(x, t=0.0):
    """Standing vortex: azimuthal speed ``5 r`` for ``r <= 0.2``, ``2 - 5 r`` up to 0.4, then 0."""
    r = np.hypot(x[:, 0], x[:, 1])
    speed = np.where(r <= 0.2, 5 * r, np.where(r <= 0.4, 2 - 5 * r, 0.0))
    rs = np.where(r > 0, r, 1.0)
    return np.stack([-speed * x[:, 1] / rs, speed * x[:, 0] / rs], axis=1)


def gresho_pressure(x, t=0.0):
    r = np.hypot(x[:, 0], x[:, 1])
    rs = np.maximum(r, 1e-300)
    inner = 12.5 * r**2 + GRESHO_C1
    ring = 12.5 * r**2 - 20 * r + 4 * np.log(rs) + GRESHO_C2
    return np.where(r <= 0.2, inner, np.where(r <= 0.4, ring, 0.0))


def _gresho_grad(x, t=0.0):
    # gradient of the steady velocity, used for the reference H1 error
    r = np.hypot(x[:, 0], x[:, 1])
    rs = np.where(r > 0, r, 1.0)
    g = np.zeros((len(x), 2, 2))
    inner = r <= 0.2
    g[inner, 0, 1] = -5.0
    g[inner, 1, 0] = 5.0
    ring = (r > 0.2) & (r <= 0.4)
    xr, yr, rr = x[ring, 0], x[ring, 1], rs[ring]
    # u = (-y, x) (2 / r - 5)
    f = 2 / rr - 5
    df = -2 / rr**2
    g[ring, 0, 0] = -yr * df * xr / rr
    g[ring, 0, 1] = -f - yr * df * yr / rr
    g[ring, 1, 0] = f + xr * df * xr / rr
    g[ring, 1, 1] = xr * df * yr / rr
    return g


def gresho(n: int = 48, dt: float = 0.01, T: float = 4.0, alpha: float = 1.0 / 50, nu: float = 0.0, h: Optional[float] = None) -> BenchmarkSpec:
    """Standing vortex on ``(-0.5, 0.5)^2`` with no-slip walls; ``h`` overrides ``n``."""
    if h is not None:
        n = int(round(1.0 / h))
    exact = AnalyticSolution(u=gresho_velocity, w=gresho_velocity, grad_w=_gresho_grad, p=gresho_pressure, exact=("u", "p"))
    return BenchmarkSpec(
        name="gresho",
        mesh_factory=lambda h: build_rectangle_mesh(int(round(1.0 / h)), int(round(1.0 / h)), ((-0.5, 0.5), (-0.5, 0.5))),
        h=1.0 / n,
        nu=nu,
        alpha=alpha,
        dt=dt,
        T=T,
        integrator=Integrator.CN,
        u0=gresho_velocity,
        u_bcs=(DirichletBC(WALLS),),
        w_bcs=(DirichletBC(WALLS),),
        exact=exact,
        description="standing vortex, steady Euler solution",
    )


# 4.3: channel with a step -------------------------------------------------------------


def channel_profile(x, t=0.0):
    """Parabolic profile ``(4 y (10 - y) / 100, 0)`` with peak 1 at ``y = 5``."""
    y = x[:, 1]
    return np.stack([4 * y * (10 - y) / 100, np.zeros_like(y)], axis=1)


def step_channel(h: float = 1.0, dt: float = 0.025, T: float = 40.0, alpha: float = 0.1, nu: float = 1.0 / 600) -> BenchmarkSpec:
    """Channel ``[0, 40] x [0, 10]`` with a unit step; starts from rest with boundary data imposed."""
    bcs = (
        DirichletBC((Marker.WALL,)),
        DirichletBC((Marker.INFLOW, Marker.OUTFLOW), channel_profile),
    )

    def u0(x, t):
        return np.zeros((len(x), 2))

    return BenchmarkSpec(
        name="step",
        mesh_factory=build_step_channel_mesh,
        h=h,
        nu=nu,
        alpha=alpha,
        dt=dt,
        T=T,
        integrator=Integrator.CN,
        u0=u0,
        u_bcs=bcs,
        w_bcs=bcs,
        description="flow over a forward-backward facing step",
    )


# 4.4: Kelvin-Helmholtz ----------------------------------------------------------------

KH_DELTA0 = 1.0 / 28
KH_CN = 1e-3
KH_UINF = 1.0


def kh_velocity(x, t=0.0):
    """Tanh shear layer plus ``c_n (d_y psi, -d_x psi)``."""
    X, Y = x[:, 0], x[:, 1]
    d = KH_DELTA0
    env = KH_UINF * np.exp(-((Y - 0.5) ** 2) / d**2)
    modes = np.cos(8 * np.pi * X) + np.cos(20 * np.pi * X)
    dpsi_dy = -2 * (Y - 0.5) / d**2 * env * modes
    dpsi_dx = env * (-8 * np.pi * np.sin(8 * np.pi * X) - 20 * np.pi * np.sin(20 * np.pi * X))
    base = KH_UINF * np.tanh((2 * Y - 1) / d)
    return np.stack([base + KH_CN * dpsi_dy, -KH_CN * dpsi_dx], axis=1)


def _periodic_square(h):
    return identify_periodic(_unit_square(h), "x")


def kelvin_helmholtz(
    h: Optional[float] = None,
    T: Optional[float] = None,
    dt: float = 0.001,
    Re: float = 1000.0,
    alpha: Optional[float] = None,
    nu: Optional[float] = None,
    variant: str = "desk",
) -> BenchmarkSpec:
    """x-periodic shear layer; ``nu = 1 / (28 Re)`` and ``alpha = h / 3``.

    Walls pin only the normal component, the tangential condition is the
    natural one of the viscous form.  ``variant="paper"`` selects
    ``h = 1/48`` and ``T = 10``.
    """
    if variant not in ("desk", "paper"):
        raise ValueError(f"unknown variant {variant!r}")
    h_default, T_default = (1.0 / 48, 10.0) if variant == "paper" else (1.0 / 16, 2.0)
    h = h_default if h is None else h
    T = T_default if T is None else T
    bcs = (DirichletBC((Marker.BOTTOM, Marker.TOP), None, components=(1,)),)
    return BenchmarkSpec(
        name="kh",
        mesh_factory=_periodic_square,
        h=h,
        nu=1.0 / (28.0 * Re) if nu is None else nu,
        alpha=h / 3 if alpha is None else alpha,
        dt=dt,
        T=T,
        integrator=Integrator.BDF2,
        u0=kh_velocity,
        u_bcs=bcs,
        w_bcs=bcs,
        variant=variant,
        description="Kelvin-Helmholtz instability in a periodic channel",
    )


BENCHMARKS = {
    "chorin": chorin_like,
    "gresho": gresho,
    "step": step_channel,
    "kh": kelvin_helmholtz,
}


def get_benchmark(name: str, **kwargs) -> BenchmarkSpec:
    try:
        factory = BENCHMARKS[name]
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None
    return factory(**kwargs)


# convergence studies ------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    """Errors of one run: ``max_*`` are maxima over all time levels, ``final_*`` at ``T``."""

    h: float
    dt: float
    max_l2_w: float
    max_h1_w: float
    max_l2_u: float
    final_l2_w: float
    final_h1_w: float
    final_l2_u: float
    rates: dict = field(default_factory=dict)


def rates(errors) -> list:
    """``log2(e_coarse / e_fine)`` for consecutive entries; the first is None."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else float("nan"))
    return out


def _study_points(axis, levels, h_fixed, dt_fixed):
    if axis == "spatial":
        return [(2.0**-i, dt_fixed) for i in levels or range(1, 6)]
    if axis == "temporal":
        return [(h_fixed, 2.0**-i) for i in levels or range(0, 6)]
    if axis == "hybrid":
        return [(2.0**-i, 2.0 ** -(i - 1)) for i in levels or range(1, 6)]
    raise ValueError(f"axis must be spatial, temporal or hybrid, got {axis!r}")


def _one_point(args):
    from .schemes import run

    h, dt, T, scheme = args
    bench = chorin_like(h=h, dt=dt, T=T)
    records = run(bench.config(scheme), bench)
    l2w = [r.err_l2_w for r in records]
    h1w = [r.err_h1_w for r in records]
    l2u = [r.err_l2_u for r in records]
    return ConvergenceRow(h, dt, max(l2w), max(h1w), max(l2u), l2w[-1], h1w[-1], l2u[-1])


def convergence_study(axis: str = "spatial", levels=None, T: float = 1.0, h_fixed: float = 1.0 / 32, dt_fixed: float = 0.005, scheme=Scheme.EMACREG, workers: int = 1):
    """Error table for the decaying vortex array along one refinement axis.

    Rates are attached to every row under the keys of the error columns.
    """
    points = [(h, dt, T, scheme) for h, dt in _study_points(axis, levels, h_fixed, dt_fixed)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_one_point, points))
    else:
        rows = [_one_point(p) for p in points]
    for key in ("max_l2_w", "max_h1_w", "max_l2_u", "final_l2_w", "final_h1_w", "final_l2_u"):
        for row, r in zip(rows, rates([getattr(x, key) for x in rows])):
            row.rates[key] = r
    return rows
