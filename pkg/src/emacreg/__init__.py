"""Finite element solvers for the EMAC-Reg regularization of incompressible flow.

The package provides Taylor-Hood (P2/P1) discretizations on triangular
meshes, the Helmholtz filter with a divergence constraint, monolithic Newton
time stepping for the EMAC-Reg, EMAC, SKEW and NS-alpha formulations, and
the diagnostics used to study their conservation properties.
"""

__version__ = "0.1.0"

from .errors import FactorizationError, NewtonConvergenceError, PointLocationError, StateError, TopologyError
from .mesh import Marker, Mesh, build_rectangle_mesh, build_step_channel_mesh, identify_periodic
from .femspace import DirichletBC, FeSpace, Field, build_space, evaluate, interpolate
from .operators import NonlinearKind, apply_nonlinear, assemble_nonlinear_jacobian, assemble_operators, trilinear
from .filter import FilterSystem, apply_filter, build_filter
from .schemes import Integrator, Scheme, State, Stepper, StepperConfig, run
from .diagnostics import DiagnosticsRecord, conserved_quantities, errors_vs_analytic, momentum_probe
from .benchmarks import chorin_like, convergence_study, gresho, kelvin_helmholtz, step_channel
