import numpy as np
import pytest


def central_fd(f, x, h=1e-6):
    """Central finite difference of a scalar-to-scalar callable."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def central_fd_vec(f, x, h=1e-6):
    """Central finite-difference gradient of f: R^n -> R."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
