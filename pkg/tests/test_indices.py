import math

import numpy as np
import pytest

from peergroup.indices import (
    ch_index,
    compute_index,
    index_report,
    pcr,
    pearson_gamma,
    silhouette,
)

from conftest import random_dissimilarity, tight_pairs_matrix


def brute_silhouette(d, labels):
    """Straightforward per-observation silhouette for cross-checking."""
    n = len(labels)
    s = np.zeros(n)
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = np.mean([d[i, j] for j in own])
        b = min(
            np.mean([d[i, j] for j in range(n) if labels[j] == c])
            for c in set(labels) if c != labels[i]
        )
        if max(a, b) > 0:
            s[i] = (b - a) / max(a, b)
    return s


class TestSilhouette:
    def test_tight_pairs(self):
        res = silhouette(tight_pairs_matrix(), [1, 1, 2, 2])
        assert np.allclose(res.s, 0.8)
        assert res.asw == pytest.approx(0.8)

    def test_singleton_convention(self):
        d = tight_pairs_matrix()
        res = silhouette(d, [1, 1, 2, 3])
        assert res.s[2] == 0.0
        assert res.s[3] == 0.0

    def test_equidistant_point(self):
        # point 0 at distance 2 from both clusters' members
        d = np.array([
            [0, 2, 2, 2],
            [2, 0, 1, 5],
            [2, 1, 0, 5],
            [2, 5, 5, 0],
        ], dtype=float)
        res = silhouette(d, [1, 1, 1, 2])
        assert res.s[0] == pytest.approx(0.0)

    def test_one_cluster_error(self):
        with pytest.raises(ValueError, match="one cluster"):
            silhouette(tight_pairs_matrix(), [1, 1, 1, 1])

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            n = rng.integers(5, 15)
            d = random_dissimilarity(rng, n)
            labels = rng.integers(1, 4, n)
            labels[:3] = [1, 2, 3]  # ensure several clusters
            res = silhouette(d, labels)
            assert np.allclose(res.s, brute_silhouette(d, labels), atol=1e-12)

    def test_range(self, rng):
        d = random_dissimilarity(rng, 12)
        labels = rng.integers(1, 3, 12)
        labels[:2] = [1, 2]
        res = silhouette(d, labels)
        assert np.all(res.s >= -1) and np.all(res.s <= 1)


class TestChIndex:
    def test_line_example(self):
        x = np.array([0.0, 1.0, 10.0, 11.0])
        d = np.abs(x[:, None] - x[None, :])
        # W = 1, T = 101, B = 100, CH = (100/1)/(1/2) = 200
        assert ch_index(d, [1, 1, 2, 2]) == pytest.approx(200.0)

    def test_random_labels_near_one(self, rng):
        x = rng.normal(0, 1, (40, 3))
        d = np.sqrt(((x[:, None] - x[None, :]) ** 2).sum(-1))
        vals = []
        for _ in range(200):
            labels = rng.integers(1, 4, 40)
            labels[:3] = [1, 2, 3]
            vals.append(ch_index(d, labels))
        assert np.mean(vals) == pytest.approx(1.0, abs=0.15)

    def test_zero_within_flagged_infinite(self):
        d = np.array([
            [0, 0, 3, 3],
            [0, 0, 3, 3],
            [3, 3, 0, 0],
            [3, 3, 0, 0],
        ], dtype=float)
        assert math.isinf(ch_index(d, [1, 1, 2, 2]))

    def test_degenerate_k_errors(self):
        d = tight_pairs_matrix()
        with pytest.raises(ValueError):
            ch_index(d, [1, 1, 1, 1])
        with pytest.raises(ValueError):
            ch_index(d, [1, 2, 3, 4])

    def test_nonnegative_on_euclidean_input(self, rng):
        # B = T - W is guaranteed nonnegative when d comes from points
        for _ in range(20):
            x = rng.normal(0, 1, (10, 3))
            d = np.sqrt(((x[:, None] - x[None, :]) ** 2).sum(-1))
            labels = rng.integers(1, 4, 10)
            labels[:3] = [1, 2, 3]
            assert ch_index(d, labels) >= 0.0


class TestPearsonGamma:
    def test_tight_pairs_perfect(self):
        assert pearson_gamma(tight_pairs_matrix(), [1, 1, 2, 2]) == pytest.approx(1.0)

    def test_anti_aligned(self):
        # same-cluster pairs farther apart than cross pairs
        d = np.full((4, 4), 1.0)
        d[0, 1] = d[1, 0] = 5.0
        d[2, 3] = d[3, 2] = 5.0
        np.fill_diagonal(d, 0.0)
        assert pearson_gamma(d, [1, 1, 2, 2]) == pytest.approx(-1.0)

    def test_against_direct_correlation(self, rng):
        d = random_dissimilarity(rng, 4)
        labels = [1, 1, 2, 3]
        iu = np.triu_indices(4, k=1)
        x = d[iu]
        y = np.array([0.0 if labels[i] == labels[j] else 1.0
                      for i, j in zip(*iu)])
        expected = np.corrcoef(x, y)[0, 1]
        assert pearson_gamma(d, labels) == pytest.approx(expected, abs=1e-12)

    def test_zero_variance_errors(self):
        d = np.full((3, 3), 2.0)
        np.fill_diagonal(d, 0.0)
        with pytest.raises(ValueError, match="dissimilarities"):
            pearson_gamma(d, [1, 1, 2])
        with pytest.raises(ValueError, match="indicator"):
            pearson_gamma(tight_pairs_matrix(), [1, 2, 3, 4])


class TestScaleInvariance:
    def test_all_indices_scale_invariant(self, rng):
        d = random_dissimilarity(rng, 15)
        labels = rng.integers(1, 4, 15)
        labels[:3] = [1, 2, 3]
        for c in (0.1, 3.0, 250.0):
            for name in ("asw", "ch", "pg"):
                assert compute_index(name, c * d, labels) == pytest.approx(
                    compute_index(name, d, labels), rel=1e-9)


class TestIndexReport:
    def test_fields(self):
        rep = index_report(tight_pairs_matrix(), [1, 1, 2, 2])
        assert rep.k == 2 and rep.n == 4
        assert rep.asw == pytest.approx(0.8)
        assert rep.pearson_gamma == pytest.approx(1.0)

    def test_unknown_index_name(self):
        with pytest.raises(ValueError, match="unknown index"):
            compute_index("gap", tight_pairs_matrix(), [1, 1, 2, 2])


class TestPcr:
    def test_identical_partitions(self):
        assert pcr([1, 1, 2, 2, 3], [1, 1, 2, 2, 3]) == 1.0

    def test_half_retained_example(self):
        # previous {A,B,C},{D,E}; current {A,B},{C,D,E}
        assert pcr([1, 1, 1, 2, 2], [1, 1, 2, 2, 2]) == pytest.approx(0.5)

    def test_merge_everything_gives_one(self):
        assert pcr([1, 1, 2, 2, 3], [1, 1, 1, 1, 1]) == 1.0

    def test_coarsening_gives_one(self, rng):
        for _ in range(20):
            prev = rng.integers(1, 5, 20)
            prev[:4] = [1, 2, 3, 4]
            merge_map = {1: 1, 2: 1, 3: 2, 4: 2}
            cur = np.array([merge_map[c] for c in prev])
            assert pcr(prev, cur) == 1.0

    def test_directional(self):
        prev = [1, 1, 1, 1]
        cur = [1, 1, 2, 2]
        assert pcr(prev, cur) == pytest.approx(1 / 3)
        assert pcr(cur, prev) == 1.0

    def test_bounds(self, rng):
        for _ in range(30):
            prev = rng.integers(1, 4, 15)
            cur = rng.integers(1, 4, 15)
            prev[:2] = [1, 1]
            val = pcr(prev, cur)
            assert 0.0 <= val <= 1.0

    def test_all_singleton_previous_error(self):
        with pytest.raises(ValueError, match="no co-clustered pairs"):
            pcr([1, 2, 3], [1, 1, 1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="same observations"):
            pcr([1, 1], [1, 1, 2])
