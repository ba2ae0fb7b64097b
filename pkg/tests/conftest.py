import numpy as np
import pytest

from saddle_core import Dataset, geometry_from


def random_dataset(rng, n, d, k):
    X = rng.standard_normal((n, d))
    y = rng.integers(0, k, size=n)
    return Dataset(X=X, y=y, k=k)


def random_primal(rng, d, k, radius):
    """Strictly positive (2d, k) matrix with total mass below the radius."""
    U = rng.random((2 * d, k)) + 0.05
    return U * (radius * rng.uniform(0.2, 1.0) / U.sum())


def random_dual(rng, n, k):
    V = rng.random((n, k)) + 0.05
    return V / V.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tiny_dataset(rng):
    return random_dataset(rng, 5, 4, 3)


@pytest.fixture
def tiny_geometry(tiny_dataset):
    return geometry_from(tiny_dataset, 2.0, 0.01)


@pytest.fixture
def identity_dataset():
    return Dataset(X=np.eye(3), y=np.array([0, 1, 2]), k=3)
