"""Shared fixtures: meshes and operator caches are expensive, so they are
built once per session and shared across test modules."""

import numpy as np
import pytest

from polypot.geometry import sphere_mesh
from polypot.solvers import operator_cache

_MESHES: dict = {}
_CACHES: dict = {}


def shared_mesh(level: int, radius: float = 1.0):
    key = (level, radius)
    if key not in _MESHES:
        _MESHES[key] = sphere_mesh(level, radius)
    return _MESHES[key]


def shared_cache(level: int, radius: float = 1.0) -> dict:
    key = (level, radius)
    if key not in _CACHES:
        _CACHES[key] = operator_cache(shared_mesh(level, radius))
    return _CACHES[key]


@pytest.fixture(scope="session")
def mesh2():
    return shared_mesh(2)


@pytest.fixture(scope="session")
def mesh3():
    return shared_mesh(3)


@pytest.fixture(scope="session")
def mesh4():
    return shared_mesh(4)


@pytest.fixture(scope="session")
def cache2():
    return shared_cache(2)


@pytest.fixture(scope="session")
def cache3():
    return shared_cache(3)


@pytest.fixture(scope="session")
def cache4():
    return shared_cache(4)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260814)
