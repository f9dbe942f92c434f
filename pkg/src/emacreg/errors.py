"""Exception types raised by the solver.  Bad arguments raise plain ``ValueError``."""


class TopologyError(ValueError):
    """Mesh sides cannot be identified or a mesh is not conforming."""


class PointLocationError(LookupError):
    """A point lies outside every triangle of the mesh."""


class FactorizationError(RuntimeError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class StateError(RuntimeError):
    """Time-stepping history is missing or inconsistent."""


class NewtonConvergenceError(RuntimeError):
    def __init__(self, message, residual_norm=None, iterations=None, time=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations
        self.time = time
