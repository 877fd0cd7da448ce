"""Shared fixtures and finite-difference cross-check helpers."""

import numpy as np
import pytest

from evanskit import registry


def fd_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of f: R^n -> R^m at x."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(f(x))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))) / (2 * h)
    return J


def fd_derivative(f, x, h=1e-6):
    """Central difference of a scalar/array-valued function of one variable."""
    return (np.asarray(f(x + h)) - np.asarray(f(x - h))) / (2 * h)


@pytest.fixture(scope="session")
def burgers():
    return registry.burgers_system()


@pytest.fixture(scope="session")
def gnl2x2():
    return registry.gnl2x2_system()


@pytest.fixture(scope="session")
def jinxin():
    return registry.jinxin_system()
