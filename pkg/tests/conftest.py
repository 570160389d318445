import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_hermitian(rng, dim, scale=1.0, real=False):
    A = rng.normal(size=(dim, dim))
    if not real:
        A = A + 1j * rng.normal(size=(dim, dim))
    return scale * (A + A.conj().T) / 2


def random_density(rng, dim, real=False):
    A = rng.normal(size=(dim, dim))
    if not real:
        A = A + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
