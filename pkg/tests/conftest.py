import numpy as np
import pytest

from covsense.factorgraph import DegreeDistribution


def random_dist(rng, max_degree=8, support_size=None):
    """Random degree distribution on a random subset of ``2..max_degree``."""
    degs = np.arange(2, max_degree + 1)
    size = support_size or rng.integers(1, len(degs) + 1)
    chosen = rng.choice(degs, size=size, replace=False)
    w = np.zeros(max_degree)
    w[chosen - 1] = rng.random(size) + 0.05
    return DegreeDistribution.normalized(w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
