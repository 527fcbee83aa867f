import numpy as np
import pytest

from hessian_lab import DefiningFunction, make_domain


@pytest.fixture(scope="session")
def ball2():
    """Unit ball in C^2 at h = 0.125."""
    return make_domain(DefiningFunction.ball(1.0, 2), 0.125)


@pytest.fixture(scope="session")
def ball2_coarse():
    """Unit ball in C^2 at h = 0.25."""
    return make_domain(DefiningFunction.ball(1.0, 2), 0.25)


@pytest.fixture(scope="session")
def ball3():
    """Unit ball in C^3 at h = 0.25."""
    return make_domain(DefiningFunction.ball(1.0, 3), 0.25)


def abs_sq(X):
    return np.sum(np.asarray(X) ** 2, axis=-1)


def zeros(X):
    return np.zeros(len(X))
