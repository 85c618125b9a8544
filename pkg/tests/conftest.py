import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seganet import _kernels
from seganet.phantom import generate_phantom

settings.register_profile("seganet", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("seganet")


@pytest.fixture(scope="session")
def phantom():
    return generate_phantom()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    previous = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(previous)
