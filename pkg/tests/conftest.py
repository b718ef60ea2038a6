"""Shared synthetic-data helpers for the test suite."""

import numpy as np
import pytest

from peergroup.preprocess import FeatureTable, VariableSpec


def make_table(values, kinds=None, ids=None, standardized=False):
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    if kinds is None:
        kinds = ["continuous"] * d
    specs = [VariableSpec(f"v{j}", kinds[j]) for j in range(d)]
    if ids is None:
        ids = [f"org{i:03d}" for i in range(n)]
    return FeatureTable(ids=ids, specs=specs, values=values,
                        standardized=standardized)


def gaussian_blobs(seed, sizes, centers, sigma=1.0):
    """Stacked spherical Gaussian clusters; returns (X, labels)."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=float)
    parts, labels = [], []
    for c, (size, center) in enumerate(zip(sizes, centers), start=1):
        parts.append(rng.normal(center, sigma, (size, len(center))))
        labels.extend([c] * size)
    return np.vstack(parts), np.array(labels)


def tight_pairs_matrix():
    """Four points in two tight pairs: within d=1, between d=5."""
    d = np.full((4, 4), 5.0)
    d[0, 1] = d[1, 0] = 1.0
    d[2, 3] = d[3, 2] = 1.0
    np.fill_diagonal(d, 0.0)
    return d


def random_dissimilarity(rng, n):
    """Random symmetric matrix with zero diagonal and distinct entries."""
    m = rng.uniform(0.1, 10.0, (n, n))
    d = (m + m.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(0)
