# tests/conftest.py
import numpy as np
import pytest

from geometry.catalog import make_manifold


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def sphere():
    return make_manifold("sphere:d=2,r=1")


@pytest.fixture(scope="session")
def clifford():
    return make_manifold("clifford")


@pytest.fixture(scope="session")
def circle():
    return make_manifold("circle:r=1")


@pytest.fixture(scope="session")
def plane():
    return make_manifold("euclidean:d=2")


@pytest.fixture(scope="session")
def ellipsoid():
    return make_manifold("ellipsoid:a=1,b=1,c=1.2")


@pytest.fixture
def sphere_base(sphere):
    return sphere.embed(sphere.base_chart_point())


def random_tensor(rng, n, m, batch=()):
    from algebra.truncated_tensor import TruncatedTensor

    levels = [rng.normal(size=batch + (n ** k,)) for k in range(m + 1)]
    return TruncatedTensor(levels, n)


def random_lie(rng, n, m):
    """Zero scalar part, so exp() applies."""
    t = random_tensor(rng, n, m)
    t.levels[0][...] = 0.0
    return t
