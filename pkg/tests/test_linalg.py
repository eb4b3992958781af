import numpy as np
import pytest

from fusionmc.errors import DimensionMismatch, NonFinite, NotPSD
from fusionmc.linalg import (
    operator_norm,
    operator_norm_batch,
    pooled_precision,
    psd_sqrt,
    weighted_center,
    weighted_mean_cov,
)


def random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + d * np.eye(d)


def power_iteration_norm(m, iters=500, seed=0):
    # independent oracle for the spectral norm of a general square matrix
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(m.shape[1])
    g = m.T @ m
    for _ in range(iters):
        x = g @ x
        x /= np.linalg.norm(x)
    return float(np.sqrt(x @ g @ x))


class TestPsdSqrt:
    def test_identity(self):
        np.testing.assert_allclose(psd_sqrt(np.eye(2)), np.eye(2))

    def test_diagonal(self):
        np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_reconstruction_random_spd(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            d = int(rng.integers(1, 21))
            a = random_spd(rng, d)
            s = psd_sqrt(a)
            err = np.abs(s @ s - a).max() / np.abs(a).max()
            assert err < 1e-10
            np.testing.assert_allclose(s, s.T)

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(NotPSD):
            psd_sqrt(np.diag([1.0, -1.0]))

    def test_clamps_tiny_negative(self):
        m = np.diag([1.0, -1e-14])
        s = psd_sqrt(m)
        assert s[1, 1] == 0.0

    def test_rejects_asymmetric(self):
        with pytest.raises(NotPSD):
            psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestPooledPrecision:
    def test_two_identities(self):
        prec, pooled = pooled_precision([np.eye(2), np.eye(2)])
        np.testing.assert_allclose(prec, 2 * np.eye(2))
        np.testing.assert_allclose(pooled, 0.5 * np.eye(2))

    def test_scalar_case(self):
        # 1/1 + 1/3 = 4/3, inverse 3/4
        prec, pooled = pooled_precision([np.array([[1.0]]), np.array([[3.0]])])
        np.testing.assert_allclose(prec, [[4.0 / 3.0]])
        np.testing.assert_allclose(pooled, [[0.75]])

    def test_single_factor(self):
        lam = np.array([[2.0, 0.3], [0.3, 1.0]])
        prec, pooled = pooled_precision([lam])
        np.testing.assert_allclose(pooled, lam, atol=1e-12)
        np.testing.assert_allclose(prec, np.linalg.inv(lam), atol=1e-12)

    def test_pooled_dominated_by_each_factor(self):
        # lam_c - pooled must stay PSD for every factor
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = int(rng.integers(1, 8))
            lams = [random_spd(rng, d) for _ in range(int(rng.integers(2, 6)))]
            _, pooled = pooled_precision(lams)
            for lam in lams:
                w = np.linalg.eigvalsh(lam - pooled)
                assert w.min() >= -1e-10 * max(1.0, np.abs(lam).max())

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            pooled_precision([np.eye(2), np.eye(3)])

    def test_not_spd(self):
        with pytest.raises(NotPSD):
            pooled_precision([np.diag([1.0, 0.0])])


class TestWeightedCenter:
    def test_equal_lambdas_is_mean(self):
        c = weighted_center(
            [np.eye(1), np.eye(1)], [np.array([0.0]), np.array([4.0])]
        )
        np.testing.assert_allclose(c, [2.0])

    def test_unequal_scalar(self):
        # (1*0 + (1/3)*4) / (4/3) = 1
        c = weighted_center(
            [np.array([[1.0]]), np.array([[3.0]])],
            [np.array([0.0]), np.array([4.0])],
        )
        np.testing.assert_allclose(c, [1.0])

    def test_all_points_equal(self):
        rng = np.random.default_rng(3)
        p = rng.standard_normal(3)
        lams = [random_spd(rng, 3) for _ in range(4)]
        np.testing.assert_allclose(weighted_center(lams, [p] * 4), p, atol=1e-10)

    def test_equal_lambdas_exact_mean(self):
        rng = np.random.default_rng(4)
        lam = random_spd(rng, 2)
        pts = [rng.standard_normal(2) for _ in range(5)]
        c = weighted_center([lam] * 5, pts)
        np.testing.assert_allclose(c, np.mean(pts, axis=0), atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            weighted_center([np.eye(1)], [np.zeros(1), np.zeros(1)])


class TestOperatorNorm:
    def test_identity(self):
        assert operator_norm(np.eye(3)) == pytest.approx(1.0)

    def test_diagonal_with_negative(self):
        assert operator_norm(np.diag([2.0, -5.0])) == pytest.approx(5.0)

    def test_against_power_iteration(self):
        rng = np.random.default_rng(5)
        for i in range(20):
            d = int(rng.integers(2, 10))
            a = rng.standard_normal((d, d))
            assert operator_norm(a) == pytest.approx(
                power_iteration_norm(a, seed=i), rel=1e-8
            )

    def test_nonfinite(self):
        with pytest.raises(NonFinite):
            operator_norm(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(6)
        ms = np.stack([random_spd(rng, 4) - 3 * np.eye(4) for _ in range(7)])
        batch = operator_norm_batch(ms)
        for i in range(7):
            assert batch[i] == pytest.approx(operator_norm(ms[i]), rel=1e-10)


def test_weighted_mean_cov_matches_numpy():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((200, 3))
    mean, cov = weighted_mean_cov(x)
    np.testing.assert_allclose(mean, x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(cov, np.cov(x.T, bias=True), atol=1e-12)
