import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=20, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def random_field(space, rng, zero_trace=False, scale=1.0):
    """Random coefficient vector; boundary DOFs zeroed when ``zero_trace``."""
    from emacreg.femspace import Field
    from emacreg.mesh import Marker

    c = scale * rng.standard_normal(space.num_dofs)
    if zero_trace:
        c[space.boundary_dofs(*set(space.mesh.boundary_markers))] = 0.0
    return Field(space, c)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
