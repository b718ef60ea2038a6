import numpy as np
import pytest

from peergroup.dpmm import (
    ChainResult,
    DissimilarityMatrix,
    DpmmConfig,
    chain_agreement,
    euclidean_dissimilarity,
    posterior_dissimilarity,
    run_chain,
    run_dpmm,
)

from conftest import gaussian_blobs, make_table

FAST = DpmmConfig(iterations=600, burn_in=100, thin=2, chains=2, seed=0)


def fake_chain(counts, samples, ids=None):
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.shape[0]
    np.fill_diagonal(counts, samples)
    return ChainResult(
        coassignment_counts=counts,
        samples_used=samples,
        alpha_trace=np.linspace(0.5, 1.5, 10),
        log_posterior_trace=np.linspace(-50, -40, 10),
        ids=ids or [str(i) for i in range(n)],
    )


class TestConfig:
    def test_defaults_valid(self):
        DpmmConfig().validate()

    def test_burn_in_bounds(self):
        with pytest.raises(ValueError, match="burn_in"):
            DpmmConfig(iterations=100, burn_in=100).validate()

    def test_thin_positive(self):
        with pytest.raises(ValueError, match="thin"):
            DpmmConfig(thin=0).validate()

    def test_chain_count(self):
        with pytest.raises(ValueError, match="chains"):
            DpmmConfig(chains=0).validate()

    def test_hyperparameters_positive(self):
        with pytest.raises(ValueError, match="positive"):
            DpmmConfig(k0=0.0).validate()


class TestRunChain:
    def test_invalid_config_rejected_before_sampling(self):
        x = np.zeros((4, 2))
        with pytest.raises(ValueError):
            run_chain(x, DpmmConfig(iterations=10, burn_in=20), 0)

    def test_duplicate_pair_coassigned(self):
        x = np.array([[0.3, -0.1], [0.3, -0.1]])
        res = run_chain(x, FAST, 1)
        frac = res.coassignment_counts[0, 1] / res.samples_used
        assert frac >= 0.95

    def test_block_structure_two_blobs(self):
        x, truth = gaussian_blobs(2, [15, 15], [[0, 0, 0], [10, 0, 0]])
        res = run_chain(x, FAST, 3)
        pdm = res.pdm()
        same = truth[:, None] == truth[None, :]
        off = ~np.eye(30, dtype=bool)
        assert pdm[same & off].mean() <= 0.1
        assert pdm[~same].mean() >= 0.9

    def test_single_blob_mostly_one_cluster(self):
        rng = np.random.default_rng(4)
        x = rng.normal(0, 1, (50, 2))
        x = (x - x.mean(axis=0)) / x.std(axis=0, ddof=1)
        res = run_chain(x, FAST, 5)
        pdm = res.pdm()
        iu = np.triu_indices(50, k=1)
        # one dominant cluster: most pairs co-assigned most of the time
        assert np.median(1.0 - pdm[iu]) > 0.5

    def test_bit_determinism(self):
        x, _ = gaussian_blobs(6, [8, 8], [[0, 0], [6, 0]])
        a = run_chain(x, FAST, 7)
        b = run_chain(x, FAST, 7)
        assert np.array_equal(a.coassignment_counts, b.coassignment_counts)
        assert np.array_equal(a.alpha_trace, b.alpha_trace)

    def test_counts_invariants(self):
        x, _ = gaussian_blobs(8, [6, 6], [[0, 0], [5, 0]])
        res = run_chain(x, FAST, 9)
        c = res.coassignment_counts
        assert np.array_equal(c, c.T)
        assert np.all(np.diag(c) == res.samples_used)
        off = c[~np.eye(12, dtype=bool)]
        assert off.min() >= 0 and off.max() <= res.samples_used

    def test_requires_standardized_table(self):
        t = make_table(np.random.default_rng(0).normal(0, 1, (6, 2)))
        with pytest.raises(ValueError, match="standardized"):
            run_chain(t, FAST, 0)


class TestPosteriorDissimilarity:
    def test_always_coassigned_gives_zero(self):
        c = np.full((2, 2), 100)
        dm = posterior_dissimilarity([fake_chain(c, 100)])
        assert dm.d[0, 1] == 0.0

    def test_never_coassigned_gives_one(self):
        c = np.zeros((2, 2), dtype=int)
        dm = posterior_dissimilarity([fake_chain(c, 100)])
        assert dm.d[0, 1] == 1.0

    def test_pooled_fraction(self):
        a = fake_chain(np.array([[0, 80], [80, 0]]), 100)
        b = fake_chain(np.array([[0, 60], [60, 0]]), 100)
        dm = posterior_dissimilarity([a, b])
        assert dm.d[0, 1] == pytest.approx(0.3)
        assert dm.kind == "posterior"

    def test_mismatched_ids_error(self):
        a = fake_chain(np.zeros((2, 2), dtype=int), 10, ids=["a", "b"])
        b = fake_chain(np.zeros((2, 2), dtype=int), 10, ids=["a", "c"])
        with pytest.raises(ValueError, match="different ids"):
            posterior_dissimilarity([a, b])

    def test_pdm_properties_from_sampler(self):
        x, _ = gaussian_blobs(10, [8, 8], [[0, 0], [7, 0]])
        results = run_dpmm(x, FAST)
        dm = posterior_dissimilarity(results)
        assert np.array_equal(dm.d, dm.d.T)
        assert np.all(np.diag(dm.d) == 0.0)
        assert dm.d.min() >= 0.0 and dm.d.max() <= 1.0


class TestPermutationBehaviour:
    def test_pdm_approximately_equivariant(self):
        # exact equivariance holds only in distribution; on well-separated
        # data the PDM is near 0/1 so reordered runs agree closely
        x, _ = gaussian_blobs(11, [10, 10], [[0, 0, 0], [10, 0, 0]])
        perm = np.random.default_rng(1).permutation(20)
        dm = posterior_dissimilarity(run_dpmm(x, FAST))
        dm_p = posterior_dissimilarity(run_dpmm(x[perm], FAST))
        assert np.abs(dm.d[np.ix_(perm, perm)] - dm_p.d).max() <= 0.1


class TestChainAgreement:
    def test_identical_chains(self):
        c = np.array([[0, 40], [40, 0]])
        rep = chain_agreement([fake_chain(c, 50), fake_chain(c, 50)])
        assert rep.pair_max_abs_diff[(0, 1)] == 0.0
        assert rep.pair_correlation[(0, 1)] == 1.0
        assert not rep.flagged

    def test_independent_seeds_agree_on_clean_data(self):
        x, _ = gaussian_blobs(12, [12, 12], [[0, 0], [10, 0]])
        results = run_dpmm(x, FAST)
        rep = chain_agreement(results)
        assert max(rep.pair_max_abs_diff.values()) < 0.05
        assert not rep.flagged

    def test_disagreement_flagged(self):
        a = fake_chain(np.array([[0, 90], [90, 0]]), 100)
        b = fake_chain(np.array([[0, 10], [10, 0]]), 100)
        rep = chain_agreement([a, b])
        assert rep.pair_max_abs_diff[(0, 1)] == pytest.approx(0.8)
        assert rep.flagged

    def test_truncated_chain_degrades_agreement(self):
        # overlapping blobs so coassignment is genuinely uncertain
        x, _ = gaussian_blobs(13, [12, 12], [[0, 0], [2.0, 0]])
        full = run_chain(x, FAST, 21)
        short_cfg = DpmmConfig(iterations=104, burn_in=100, thin=2,
                               chains=1, seed=0)
        short = run_chain(x, short_cfg, 22)
        rep = chain_agreement([full, short], threshold=0.3)
        assert max(rep.pair_max_abs_diff.values()) > 0.3
        assert rep.flagged

    def test_single_chain_error(self):
        c = np.zeros((2, 2), dtype=int)
        with pytest.raises(ValueError, match="at least 2 chains"):
            chain_agreement([fake_chain(c, 10)])

    def test_trace_diagnostics_present(self):
        c = np.array([[0, 40], [40, 0]])
        rep = chain_agreement([fake_chain(c, 50), fake_chain(c, 50)])
        assert len(rep.alpha.means) == 2
        assert len(rep.log_posterior.lag1_autocorr) == 2


class TestDissimilarityMatrix:
    def test_symmetry_enforced(self):
        d = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            DissimilarityMatrix(ids=["a", "b"], d=d, kind="metric")

    def test_zero_diagonal_enforced(self):
        d = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValueError, match="diagonal"):
            DissimilarityMatrix(ids=["a", "b"], d=d, kind="metric")

    def test_posterior_range_enforced(self):
        d = np.array([[0.0, 3.0], [3.0, 0.0]])
        with pytest.raises(ValueError, match=r"\[0,1\]"):
            DissimilarityMatrix(ids=["a", "b"], d=d, kind="posterior")
        DissimilarityMatrix(ids=["a", "b"], d=d, kind="metric")


class TestEuclidean:
    def test_three_four_five(self):
        x = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
        dm = euclidean_dissimilarity(x)
        assert dm.d[0, 1] == pytest.approx(3.0)
        assert dm.d[1, 2] == pytest.approx(4.0)
        assert dm.d[0, 2] == pytest.approx(5.0)
        assert dm.kind == "metric"

    def test_table_ids_carried(self):
        t = make_table(np.eye(3), ids=["x", "y", "z"])
        dm = euclidean_dissimilarity(t)
        assert dm.ids == ["x", "y", "z"]
