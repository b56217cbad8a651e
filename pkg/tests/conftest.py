import numpy as np
import pytest

from lcsde import geometry as geo


@pytest.fixture
def orthant2():
    return geo.orthant(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def random_pointed_cone(rng, d, max_gens):
    g = int(rng.integers(0, max_gens + 1))
    axis = rng.normal(size=d)
    axis /= np.linalg.norm(axis)
    out = []
    while len(out) < g:
        u = rng.normal(size=d)
        u /= np.linalg.norm(u)
        if u @ axis >= 0.2:
            out.append(u)
    return geo.make_cone(np.array(out).reshape(g, d), d)


def random_set(rng, cone, max_vertices=4, scale=2.0):
    k = int(rng.integers(1, max_vertices + 1))
    return geo.make_set(rng.normal(scale=scale, size=(k, cone.dimension)), cone)
