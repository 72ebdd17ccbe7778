import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_simplex(rng, n, c, alpha=1.0):
    """Uniform-ish random rows on the simplex."""
    return rng.dirichlet(np.full(c, alpha), size=n)


def random_interior(rng, n, c, floor=1e-4):
    """Random rows with every entry at least ``floor``."""
    return floor + (1.0 - c * floor) * random_simplex(rng, n, c)


def labels_from_probs(rng, probs):
    """Draw one label per row from the row's own probabilities."""
    cumulative = np.cumsum(probs, axis=1)
    draws = rng.random(len(probs))
    return np.minimum((draws[:, None] > cumulative).sum(axis=1), probs.shape[1] - 1)
