import numpy as np
import pytest

from brushbench.energy import GridEnergy


def random_energy(rng, h, w, max_unary=10.0, max_edge=3.0):
    """Random grid energy with non-negative edge weights."""
    unary = rng.uniform(0, max_unary, (h, w, 2))
    edges = np.zeros((4, h, w))
    if w > 1:
        edges[0, :, :w - 1] = rng.uniform(0, max_edge, (h, w - 1))
    if h > 1:
        edges[1, :h - 1, :] = rng.uniform(0, max_edge, (h - 1, w))
    if h > 1 and w > 1:
        edges[2, :h - 1, :w - 1] = rng.uniform(0, max_edge, (h - 1, w - 1))
        edges[3, :h - 1, 1:] = rng.uniform(0, max_edge, (h - 1, w - 1))
    return GridEnergy(unary, edges, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
