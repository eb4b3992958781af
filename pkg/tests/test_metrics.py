import math

import numpy as np
import pytest
from scipy import stats

from fusionmc.errors import CountMismatch, TooFewSamples
from fusionmc.metrics import (
    DensitySide,
    consensus_merge,
    gaussian_density_side,
    iad,
    iad_samples,
    kde_1d,
)


class TestConsensusMerge:
    def test_identical_draws_unchanged(self):
        rng = np.random.default_rng(0)
        s = rng.standard_normal((200, 2))
        merged = consensus_merge([s, s])
        np.testing.assert_allclose(merged, s, atol=1e-8)

    def test_identity_weights_pairwise_average(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((50, 2))
        b = rng.standard_normal((50, 2))
        merged = consensus_merge([a, b], weights=[np.eye(2), np.eye(2)])
        np.testing.assert_allclose(merged, 0.5 * (a + b), atol=1e-12)

    def test_gaussian_factors_match_pooled_moments(self):
        rng = np.random.default_rng(2)
        n = 100_000
        means = [np.array([1.0, 0.0]), np.array([-1.0, 0.5]), np.array([0.0, -0.5])]
        covs = []
        for _ in range(3):
            s = rng.standard_normal((2, 2))
            covs.append(s @ s.T + np.eye(2))
        draws = [
            m + rng.standard_normal((n, 2)) @ np.linalg.cholesky(c).T
            for m, c in zip(means, covs)
        ]
        merged = consensus_merge(draws)
        prec = sum(np.linalg.inv(c) for c in covs)
        pooled_cov = np.linalg.inv(prec)
        pooled_mean = pooled_cov @ sum(
            np.linalg.inv(c) @ m for c, m in zip(covs, means)
        )
        se_mean = np.sqrt(np.diag(pooled_cov) / n)
        assert np.all(np.abs(merged.mean(axis=0) - pooled_mean) < 4 * se_mean)
        emp_cov = np.cov(merged.T)
        dd = np.diag(pooled_cov)
        se_cov = np.sqrt((np.outer(dd, dd) + pooled_cov**2) / n)
        assert np.all(np.abs(emp_cov - pooled_cov) < 4 * se_cov)

    def test_count_mismatch(self):
        with pytest.raises(CountMismatch):
            consensus_merge([np.zeros((3, 1)), np.zeros((4, 1))])


class TestKde:
    def test_mode_near_zero_for_standard_normal(self):
        rng = np.random.default_rng(3)
        kde = kde_1d(rng.standard_normal(50_000))
        assert abs(kde.grid[np.argmax(kde.density)]) < 0.1

    def test_integral_is_one(self):
        rng = np.random.default_rng(4)
        kde = kde_1d(rng.standard_normal(5000))
        integral = np.trapezoid(kde.density, kde.grid)
        assert abs(integral - 1.0) < 1e-3

    def test_constant_weights_match_unweighted(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(500)
        a = kde_1d(x)
        b = kde_1d(x, np.full(500, 0.002))
        np.testing.assert_array_equal(a.density, b.density)
        assert a.bandwidth == b.bandwidth

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            kde_1d(np.arange(5.0))

    def test_degenerate_weights_rejected(self):
        w = np.zeros(100)
        w[0] = 1.0
        with pytest.raises(TooFewSamples):
            kde_1d(np.arange(100.0), w)


class TestIad:
    def test_identical_samples_zero(self):
        rng = np.random.default_rng(6)
        s = rng.standard_normal((2000, 2))
        assert iad_samples(s, None, s, None) == 0.0

    def test_shifted_gaussians_analytic(self):
        # half-L1 between N(0,1) and N(1,1) is 2 Phi(1/2) - 1
        side_a = gaussian_density_side(np.zeros(1), np.eye(1))
        side_b = gaussian_density_side(np.ones(1), np.eye(1))
        expected = 2 * stats.norm.cdf(0.5) - 1
        assert iad(side_a, side_b) == pytest.approx(expected, abs=1e-4)
        assert iad(side_a, side_b) == pytest.approx(0.3829249, abs=1e-4)

    def test_disjoint_supports(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0, 1, (4000, 1))
        b = rng.uniform(100, 101, (4000, 1))
        assert iad_samples(a, None, b, None) == pytest.approx(1.0, abs=1e-3)

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((3000, 1))
        b = 0.3 + rng.standard_normal((3000, 1))
        assert iad_samples(a, None, b, None) == pytest.approx(
            iad_samples(b, None, a, None), abs=1e-12
        )

    def test_kde_vs_analytic_consistency(self):
        rng = np.random.default_rng(9)
        s = rng.standard_normal((100_000, 1))
        val = iad(
            DensitySide.from_samples(s),
            gaussian_density_side(np.zeros(1), np.eye(1)),
        )
        assert val < 0.02

    def test_within_unit_interval(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            a = rng.standard_normal((500, 1)) * rng.uniform(0.5, 2)
            b = rng.standard_normal((500, 1)) + rng.uniform(-2, 2)
            assert 0.0 <= iad_samples(a, None, b, None) <= 1.0
