import numpy as np
import pytest

from fusionmc.errors import BadBeta, DimensionMismatch
from fusionmc.hierarchy import HierarchyNode, build_tree, dc_fusion
from fusionmc.models import GaussianModel
from fusionmc.problems import gaussian_equal_factors


class TestBuildTree:
    def test_fork_join(self):
        root = build_tree("fork-join", 5)
        assert root.internal_count() == 1
        assert len(root.children) == 5
        assert root.depth() == 1
        assert root.factor_set == frozenset(range(5))

    def test_balanced_binary_four(self):
        root = build_tree("balanced-binary", 4)
        assert root.internal_count() == 3
        assert root.depth() == 2

    def test_balanced_binary_odd_promotion(self):
        root = build_tree("balanced-binary", 5)
        root.validate()
        assert root.factor_set == frozenset(range(5))
        assert root.depth() == 3

    def test_progressive_four(self):
        root = build_tree("progressive", 4)
        assert root.internal_count() == 3
        assert root.depth() == 3

    def test_tempered_two_half(self):
        root = build_tree("tempered", 2, beta=0.5)
        assert len(root.leaves()) == 4
        assert len(root.children) == 2
        assert all(len(g.children) == 2 for g in root.children)
        assert all(leaf.temper_beta == 0.5 for leaf in root.leaves())
        root.validate()

    def test_tempered_requires_integer_copies(self):
        with pytest.raises(BadBeta):
            build_tree("tempered", 2, beta=0.4)
        with pytest.raises(BadBeta):
            build_tree("tempered", 2, beta=None)

    def test_single_factor(self):
        root = build_tree("balanced-binary", 1)
        assert root.is_leaf

    def test_unknown_kind(self):
        with pytest.raises(DimensionMismatch):
            build_tree("ternary", 4)

    def test_validate_catches_overlap(self):
        bad = HierarchyNode(
            node_id=0,
            children=[
                HierarchyNode(node_id=1, factor_index=0, factor_set=frozenset([0])),
                HierarchyNode(node_id=2, factor_index=0, factor_set=frozenset([0])),
            ],
            factor_set=frozenset([0]),
        )
        with pytest.raises(DimensionMismatch):
            bad.validate()


class TestDcFusion:
    def test_single_leaf_passthrough(self):
        rng = np.random.default_rng(0)
        model = GaussianModel(np.zeros(1), np.eye(1))
        root = build_tree("fork-join", 1)
        out = dc_fusion(root, [model], 2000, rng)
        assert out.root is None
        assert out.samples.shape == (2000, 1)
        np.testing.assert_allclose(out.weights, np.full(2000, 1 / 2000))
        assert abs(out.mean()[0]) < 0.1

    def test_balanced_binary_four_gaussians(self):
        rng = np.random.default_rng(1)
        models = gaussian_equal_factors(4, dim=1)  # product is N(0, 1)
        root = build_tree("balanced-binary", 4)
        out = dc_fusion(root, models, 10_000, rng)
        assert abs(out.mean()[0]) < 0.05
        assert abs(out.var()[0] - 1.0) < 0.1
        for node_out in out.node_outputs.values():
            assert node_out.weights.sum() == pytest.approx(1.0, abs=1e-9)

    def test_tree_invariance_of_target(self):
        rng = np.random.default_rng(2)
        models = gaussian_equal_factors(4, dim=1)
        for kind in ("fork-join", "balanced-binary", "progressive"):
            out = dc_fusion(build_tree(kind, 4), models, 6000, np.random.default_rng(3))
            assert abs(out.mean()[0]) < 0.06, kind
            assert abs(out.var()[0] - 1.0) < 0.12, kind

    def test_fork_join_matches_direct_gbf(self):
        from fusionmc.estimators import EstimatorConfig
        from fusionmc.guidance import AdaptiveMeshPolicy, GuidanceContext, recommend_T
        from fusionmc.linalg import weighted_mean_cov
        from fusionmc.smc import gbf

        models = gaussian_equal_factors(3, dim=1)
        n = 1500
        out = dc_fusion(
            build_tree("fork-join", 3), models, n, np.random.default_rng(42)
        )
        # replicate the recursion by hand with the same stream layout
        rng = np.random.default_rng(42)
        child_rngs = rng.spawn(3)
        leaves, relam, hints, lams = [], [], [], []
        for m, crng in zip(models, child_rngs):
            draws = m.sample_leaf(n, crng)
            hint, lam = weighted_mean_cov(draws)
            leaves.append((draws, np.full(n, 1.0 / n)))
            relam.append(m.with_lambda(lam))
            hints.append(hint)
            lams.append(lam)
        ctx = GuidanceContext(n_factors=3, dim=1)
        big_t = recommend_T(ctx)
        direct = gbf(
            relam,
            leaves,
            None,
            n,
            rng,
            estimator_cfg=EstimatorConfig(),
            adaptive_policy=AdaptiveMeshPolicy(big_t, ctx, hints, lams),
        )
        np.testing.assert_array_equal(out.samples, direct.samples)
        np.testing.assert_array_equal(out.weights, direct.weights)

    def test_tempered_tree_recovers_target(self):
        # conflicting pair: N(-1.2, 1) and N(1.2, 1); product is N(0, 1/2)
        rng = np.random.default_rng(4)
        models = [
            GaussianModel(np.array([-1.2]), np.eye(1)),
            GaussianModel(np.array([1.2]), np.eye(1)),
        ]
        out_plain = dc_fusion(build_tree("fork-join", 2), models, 8000, rng)
        out_temp = dc_fusion(build_tree("tempered", 2, beta=0.5), models, 8000, rng)
        for out in (out_plain, out_temp):
            assert abs(out.mean()[0]) < 0.08
            assert abs(out.var()[0] - 0.5) < 0.08

    def test_guided_regular_policy_runs(self):
        rng = np.random.default_rng(5)
        models = gaussian_equal_factors(2, dim=1)
        out = dc_fusion(
            build_tree("fork-join", 2), models, 2000, rng, mesh_policy="guided-regular"
        )
        assert out.root is not None
        assert out.root.mesh_used.n_intervals >= 1
        deltas = np.diff(out.root.mesh_used.times)
        np.testing.assert_allclose(deltas[:-1], deltas[0], rtol=1e-9)

    def test_fixed_mesh_policy(self):
        rng = np.random.default_rng(6)
        models = gaussian_equal_factors(2, dim=1)
        out = dc_fusion(
            build_tree("fork-join", 2),
            models,
            1500,
            rng,
            mesh_policy="fixed",
            fixed_mesh=(1.0, 4),
        )
        assert out.root.mesh_used.n_intervals == 4
