import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from collbreak import CollisionKernel, KeepTwo, NoMassTransfer, ShatterAttach, Uniform

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

BUILTINS = {
    "uniform": Uniform(),
    "shatter_attach": ShatterAttach(),
    "keep_two": KeepTwo(),
    "no_mass_transfer": NoMassTransfer(),
}

# lines collected by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def states(max_n: int = 32, min_n: int = 1):
    """Nonnegative count vectors with a few exact zeros."""
    return st.integers(min_n, max_n).flatmap(
        lambda n: arrays(
            np.float64,
            n,
            elements=st.one_of(st.just(0.0), st.floats(1e-3, 2.0)),
        )
    )


kernels = st.builds(
    lambda a, b, A: CollisionKernel(A, min(a, b), max(b, a, 0.05)),
    st.floats(-1.0, 0.95),
    st.floats(0.05, 1.0),
    st.floats(0.1, 3.0),
)


@pytest.fixture
def sqrt_kernel():
    return CollisionKernel(1.0, 0.5, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
