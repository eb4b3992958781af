import math

import numpy as np
import pytest
from scipy import stats

from fusionmc.bridge import (
    LayerInfo,
    bb_interval_prob,
    bb_interval_prob_scalar,
    box_image_bounds,
    layer_from_batch,
    sample_bridge_points,
    simulate_layer,
    simulate_layers_batch,
    unwhiten,
)
from fusionmc.errors import DimensionMismatch, SeriesNonConvergence


def mc_containment_oracle(a, b, x, y, delta, n_paths=100_000, n_steps=300, seed=0):
    """Monte Carlo containment probability with per-segment single-barrier
    hitting corrections (independent of the alternating series)."""
    rng = np.random.default_rng(seed)
    dt = delta / n_steps
    total = 0.0
    chunk = 10_000
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        steps = rng.standard_normal((m, n_steps)) * math.sqrt(dt)
        w = np.cumsum(steps, axis=1)
        t = np.linspace(dt, delta, n_steps)
        path = x + w + (t / delta) * (y - x - w[:, -1][:, None])
        knots = np.concatenate([np.full((m, 1), x), path], axis=1)
        inside = (knots >= a) & (knots <= b)
        ok = inside.all(axis=1)
        v1, v2 = knots[:, :-1], knots[:, 1:]
        hit_hi = np.exp(-2.0 * np.clip(b - v1, 0, None) * np.clip(b - v2, 0, None) / dt)
        hit_lo = np.exp(-2.0 * np.clip(v1 - a, 0, None) * np.clip(v2 - a, 0, None) / dt)
        seg = np.clip(1.0 - hit_hi - hit_lo, 0.0, 1.0)
        prob = np.where(ok, np.prod(seg, axis=1), 0.0)
        total += prob.sum()
        done += m
    return total / n_paths


class TestContainmentSeries:
    @pytest.mark.parametrize(
        "a,b,x,y,delta",
        [
            (-1.0, 1.0, 0.0, 0.0, 1.0),
            (-1.5, 2.0, 0.3, -0.5, 1.0),
            (-0.8, 1.2, 0.0, 0.5, 0.4),
            (-0.4, 0.5, -0.1, 0.2, 0.25),
        ],
    )
    def test_against_mc_oracle(self, a, b, x, y, delta):
        got = bb_interval_prob_scalar(a, b, x, y, delta)
        oracle = mc_containment_oracle(a, b, x, y, delta)
        se = math.sqrt(max(oracle * (1 - oracle), 1e-4) / 100_000)
        assert abs(got - oracle) < 4 * se + 2e-3

    def test_endpoint_outside_is_zero(self):
        assert bb_interval_prob_scalar(-1, 1, 2.0, 0.0, 1.0) == 0.0
        assert bb_interval_prob_scalar(-1, 1, 0.0, -3.0, 1.0) == 0.0

    def test_wide_interval_is_one(self):
        assert bb_interval_prob_scalar(-50, 50, 0.0, 0.0, 1.0) == pytest.approx(1.0)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 50)
        y = rng.uniform(-1, 1, 50)
        a = np.minimum(x, y) - rng.uniform(0.1, 2, 50)
        b = np.maximum(x, y) + rng.uniform(0.1, 2, 50)
        vec = bb_interval_prob(a, b, x, y, 0.7)
        for i in range(50):
            assert vec[i] == pytest.approx(
                bb_interval_prob_scalar(a[i], b[i], x[i], y[i], 0.7), abs=1e-12
            )

    def test_monotone_in_interval(self):
        p1 = bb_interval_prob_scalar(-0.5, 0.5, 0.0, 0.1, 1.0)
        p2 = bb_interval_prob_scalar(-1.0, 1.0, 0.0, 0.1, 1.0)
        p3 = bb_interval_prob_scalar(-2.0, 2.0, 0.0, 0.1, 1.0)
        assert p1 < p2 < p3

    def test_series_cap(self):
        # pathological geometry: interval tiny relative to the time span
        with pytest.raises(SeriesNonConvergence):
            bb_interval_prob_scalar(0.0, 1e-3, 5e-4, 5e-4, 1e6)


class TestSimulateLayer:
    def test_box_contains_endpoints(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            z0 = rng.standard_normal(3)
            z1 = rng.standard_normal(3)
            layer = simulate_layer(z0, z1, 0.0, 0.5, rng)
            assert (layer.whitened_box[:, 0] <= np.minimum(z0, z1)).all()
            assert (layer.whitened_box[:, 1] >= np.maximum(z0, z1)).all()
            assert (layer.levels >= 1).all()

    def test_shrinking_delta_box_width(self):
        rng = np.random.default_rng(2)
        gap = 1.0
        for delta in [1e-2, 1e-4, 1e-6]:
            widths = []
            batch = simulate_layers_batch(
                np.zeros((2000, 1)), np.full((2000, 1), gap), 0.0, delta, rng
            )
            widths = batch.hi - batch.lo
            excess = widths.mean() - gap
            assert 0 < excess < 6 * math.sqrt(delta)

    def test_batch_and_single_agree_in_law(self):
        rng1 = np.random.default_rng(3)
        rng2 = np.random.default_rng(3)
        batch = simulate_layers_batch(np.zeros((1, 2)), np.ones((1, 2)), 0.0, 1.0, rng1)
        single = simulate_layer(np.zeros(2), np.ones(2), 0.0, 1.0, rng2)
        np.testing.assert_allclose(batch.lo[0], single.whitened_box[:, 0])
        np.testing.assert_allclose(batch.hi[0], single.whitened_box[:, 1])


class TestSampleBridgePoints:
    def test_containment(self):
        rng = np.random.default_rng(4)
        n_trials, n_pts = 10_000, 50
        lam_sqrt = np.array([[1.2, 0.3], [0.3, 0.8]])
        z0 = rng.standard_normal((n_trials, 2)) * 0.3
        z1 = rng.standard_normal((n_trials, 2)) * 0.3
        batch = simulate_layers_batch(z0, z1, 0.0, 0.4, rng)
        times = np.linspace(0.4 / (n_pts + 1), 0.4 - 0.4 / (n_pts + 1), n_pts)
        escapes = 0
        for i in range(n_trials):
            layer = layer_from_batch(batch, i, lam_sqrt=lam_sqrt)
            pts = sample_bridge_points(layer, times, rng)
            if (pts < layer.whitened_box[:, 0]).any() or (
                pts > layer.whitened_box[:, 1]
            ).any():
                escapes += 1
            xpts = unwhiten(layer, pts)
            if (xpts < layer.original_box[:, 0]).any() or (
                xpts > layer.original_box[:, 1]
            ).any():
                escapes += 1
        assert escapes == 0

    def test_midpoint_marginal_recovers_unconditional_bridge(self):
        # tower property: layer sampling then layer-conditional point sampling
        # must reproduce the plain bridge midpoint law
        rng = np.random.default_rng(5)
        n = 100_000
        z0 = np.zeros((n, 1))
        z1 = np.full((n, 1), 0.7)
        delta = 0.9
        batch = simulate_layers_batch(z0, z1, 0.0, delta, rng)
        mids = np.empty(n)
        for i in range(n):
            layer = layer_from_batch(batch, i)
            mids[i] = sample_bridge_points(layer, [delta / 2], rng)[0, 0]
        expected = stats.norm(loc=0.35, scale=math.sqrt(delta / 4))
        _, pval = stats.kstest(mids, expected.cdf)
        assert pval > 0.001

    def test_cross_coordinate_independence(self):
        rng = np.random.default_rng(6)
        n = 20_000
        z0 = np.zeros((n, 2))
        z1 = np.zeros((n, 2))
        batch = simulate_layers_batch(z0, z1, 0.0, 1.0, rng)
        mids = np.empty((n, 2))
        for i in range(n):
            mids[i] = sample_bridge_points(layer_from_batch(batch, i), [0.5], rng)[0]
        corr = np.corrcoef(mids.T)[0, 1]
        assert abs(corr) < 3.0 / math.sqrt(n)

    def test_grid_sampler_matches_rejection_sampler(self):
        # the two conditional samplers target the same law; cross-validate
        from fusionmc.bridge import _grid_sample_coord_points, _sample_coord_points

        rng = np.random.default_rng(14)
        x, y, t0, t1, level, theta = 0.0, 0.5, 0.0, 1.0, 2, 1.0
        lo, hi = min(x, y) - level * theta, max(x, y) + level * theta
        grid = np.array(
            [
                _grid_sample_coord_points(
                    x, y, t0, t1, [0.5], lo, hi, level, theta, rng
                )[0]
                for _ in range(15_000)
            ]
        )
        rej = np.array(
            [
                _sample_coord_points(
                    x, y, t0, t1, [0.5], lo, hi, level, theta, rng, 10_000
                )[0]
                for _ in range(15_000)
            ]
        )
        _, pval = stats.ks_2samp(grid, rej)
        assert pval > 0.001

    def test_empty_times(self):
        rng = np.random.default_rng(7)
        layer = simulate_layer([0.0], [1.0], 0.0, 1.0, rng)
        assert sample_bridge_points(layer, [], rng).shape == (0, 1)

    def test_times_must_be_interior_and_sorted(self):
        rng = np.random.default_rng(8)
        layer = simulate_layer([0.0], [1.0], 0.0, 1.0, rng)
        with pytest.raises(DimensionMismatch):
            sample_bridge_points(layer, [1.5], rng)
        with pytest.raises(DimensionMismatch):
            sample_bridge_points(layer, [0.7, 0.3], rng)

    def test_degenerate_layer_raises(self):
        # corrupted layer whose box excludes an endpoint: zero conditional mass
        rng = np.random.default_rng(9)
        layer = LayerInfo(
            whitened_box=np.array([[0.0, 1.0]]),
            original_box=np.array([[0.0, 1.0]]),
            z_start=np.array([-1.0]),
            z_end=np.array([1.0]),
            t_start=0.0,
            t_end=1.0,
            lambda_sqrt=np.eye(1),
            levels=np.array([1]),
            theta=1.0,
        )
        with pytest.raises(SeriesNonConvergence):
            sample_bridge_points(layer, [0.5], rng, max_tries=50)


class TestUnwhiten:
    def test_identity(self):
        rng = np.random.default_rng(10)
        layer = simulate_layer([0.0, 0.0], [1.0, -1.0], 0.0, 1.0, rng)
        z = np.array([0.3, -0.2])
        np.testing.assert_allclose(unwhiten(layer, z), z)

    def test_scalar_scaling(self):
        rng = np.random.default_rng(11)
        layer = simulate_layer([0.0], [1.0], 0.0, 1.0, rng, lambda_sqrt=np.array([[2.0]]))
        np.testing.assert_allclose(unwhiten(layer, np.array([3.0])), [6.0])

    def test_dim_mismatch(self):
        rng = np.random.default_rng(12)
        layer = simulate_layer([0.0], [1.0], 0.0, 1.0, rng)
        with pytest.raises(DimensionMismatch):
            unwhiten(layer, np.zeros(3))

    def test_box_image_contains_mapped_points(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            d = int(rng.integers(1, 5))
            m = rng.standard_normal((d, d))
            lam_sqrt = m @ m.T + 0.1 * np.eye(d)
            lo = rng.standard_normal(d)
            hi = lo + rng.uniform(0.1, 2.0, d)
            box = box_image_bounds(lam_sqrt, lo, hi)
            z = rng.uniform(lo, hi, size=(50, d))
            x = z @ lam_sqrt.T
            assert (x >= box[:, 0] - 1e-12).all() and (x <= box[:, 1] + 1e-12).all()
