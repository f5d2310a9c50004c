import numpy as np
import pytest

from avtse import kernels
from avtse.weights import init_random


@pytest.fixture(scope="session")
def ws():
    """Seeded random weights shared by every model-level test."""
    return init_random(1234)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(99)


def pytest_generate_tests(metafunc):
    # kernel-level tests run on every available lane
    if "backend" in metafunc.fixturenames:
        metafunc.parametrize("backend", kernels.available_backends())


@pytest.fixture
def backend_guard(backend):
    kernels.set_backend(backend)
    yield backend
    kernels.set_backend("auto")
