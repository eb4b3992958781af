"""Fusion trees and the recursive divide-and-conquer driver.

A hierarchy node either samples one factor (leaf) or fuses its children's
weighted outputs with the sequential engine, treating each child's output as
a sub-posterior one level up. Only the terminal-time marginal and weights
travel upward.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BadBeta, DimensionMismatch, EmptyInput
from .estimators import EstimatorConfig
from .guidance import (
    AdaptiveMeshPolicy,
    GuidanceContext,
    estimate_ssh_gamma,
    recommend_T,
    regular_mesh,
    sigma_a_sq,
)
from .linalg import weighted_mean_cov
from .models import product_model, temper
from .smc import FusionResult, gbf, regular_times


@dataclass
class HierarchyNode:
    node_id: int
    children: list = field(default_factory=list)
    factor_index: int | None = None  # leaves: index into the base model list
    temper_beta: float | None = None
    factor_set: frozenset = frozenset()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(c.depth() for c in self.children)

    def internal_count(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + sum(c.internal_count() for c in self.children)

    def leaves(self) -> list:
        if self.is_leaf:
            return [self]
        return [leaf for c in self.children for leaf in c.leaves()]

    def validate(self):
        if not self.is_leaf:
            union = set()
            for c in self.children:
                c.validate()
                if union & set(c.factor_set):
                    raise DimensionMismatch("sibling factor sets overlap")
                union |= set(c.factor_set)
            if union != set(self.factor_set):
                raise DimensionMismatch("factor set is not the union of children")


class _TreeBuilder:
    def __init__(self):
        self.next_id = 0

    def node(self, **kw) -> HierarchyNode:
        n = HierarchyNode(node_id=self.next_id, **kw)
        self.next_id += 1
        return n

    def leaf(self, factor_index, leaf_tag, beta=None) -> HierarchyNode:
        return self.node(
            factor_index=factor_index,
            temper_beta=beta,
            factor_set=frozenset([leaf_tag]),
        )

    def join(self, children) -> HierarchyNode:
        fs = frozenset().union(*(c.factor_set for c in children))
        return self.node(children=list(children), factor_set=fs)


def build_tree(kind: str, n_factors: int, beta: float | None = None) -> HierarchyNode:
    """fork-join, balanced-binary, progressive, or tempered hierarchy."""
    if n_factors < 1:
        raise EmptyInput("need at least one factor")
    b = _TreeBuilder()
    if kind == "tempered":
        if beta is None or not 0.0 < beta <= 1.0:
            raise BadBeta(f"tempered tree needs beta in (0, 1], got {beta}")
        copies = 1.0 / beta
        if abs(copies - round(copies)) > 1e-9:
            raise BadBeta("tempered tree needs 1/beta to be an integer")
        copies = int(round(copies))
        if copies == 1:
            return build_tree("fork-join", n_factors)
        groups = []
        tag = 0
        for _ in range(copies):
            leaves = []
            for c in range(n_factors):
                leaves.append(b.leaf(c, tag, beta=beta))
                tag += 1
            groups.append(b.join(leaves))
        return b.join(groups)
    leaves = [b.leaf(c, c) for c in range(n_factors)]
    if n_factors == 1:
        return leaves[0]
    if kind == "fork-join":
        return b.join(leaves)
    if kind == "balanced-binary":
        level = leaves
        while len(level) > 1:
            nxt = []
            for i in range(0, len(level) - 1, 2):
                nxt.append(b.join([level[i], level[i + 1]]))
            if len(level) % 2:
                nxt.append(level[-1])  # odd node promoted to the next level
            level = nxt
        return level[0]
    if kind == "progressive":
        acc = leaves[0]
        for leaf in leaves[1:]:
            acc = b.join([acc, leaf])
        return acc
    raise DimensionMismatch(f"unknown tree kind {kind!r}")


@dataclass
class NodeOutput:
    samples: np.ndarray
    weights: np.ndarray
    model: object  # product model for this node's density, with its lam
    lam: np.ndarray
    mean_hint: np.ndarray
    fusion: FusionResult | None


@dataclass
class DcResult:
    samples: np.ndarray
    weights: np.ndarray
    root: FusionResult | None
    node_outputs: dict  # node_id -> NodeOutput

    def mean(self):
        return self.weights @ self.samples

    def var(self):
        mu = self.mean()
        return self.weights @ (self.samples - mu) ** 2


def _leaf_base_model(node: HierarchyNode, models):
    base = models[node.factor_index]
    if node.temper_beta is not None:
        base = temper(base, node.temper_beta)
    return base


def dc_fusion(
    node: HierarchyNode,
    models,
    n_particles: int,
    rng: np.random.Generator,
    ctx_kwargs: dict | None = None,
    estimator_cfg: EstimatorConfig | None = None,
    mesh_policy: str = "guided-adaptive",
    fixed_mesh: tuple | None = None,
    resample_threshold: float = 0.5,
    lambda_policy: str = "estimate",
    leaf_kwargs: dict | None = None,
) -> DcResult:
    """Run the divide-and-conquer recursion rooted at `node`.

    mesh_policy: "guided-adaptive" | "guided-regular" | "fixed" (with
    fixed_mesh = (T, n) applied at every internal node).
    lambda_policy: "estimate" re-estimates each node's preconditioner from its
    output samples; "model" keeps the models' own lam at the leaves.
    """
    node.validate()
    outputs: dict[int, NodeOutput] = {}
    out = _dc_recurse(
        node,
        models,
        n_particles,
        rng,
        dict(ctx_kwargs or {}),
        estimator_cfg or EstimatorConfig(),
        mesh_policy,
        fixed_mesh,
        resample_threshold,
        lambda_policy,
        dict(leaf_kwargs or {}),
        outputs,
    )
    return DcResult(out.samples, out.weights, out.fusion, outputs)


def _dc_recurse(
    node,
    models,
    n_particles,
    rng,
    ctx_kwargs,
    cfg,
    mesh_policy,
    fixed_mesh,
    resample_threshold,
    lambda_policy,
    leaf_kwargs,
    outputs,
):
    if node.is_leaf:
        base = _leaf_base_model(node, models)
        samples = base.sample_leaf(n_particles, rng, **leaf_kwargs)
        weights = np.full(n_particles, 1.0 / n_particles)
        if lambda_policy == "estimate":
            hint, lam = weighted_mean_cov(samples)
        else:
            lam = base.lam
            hint = base.mean_hint if base.mean_hint is not None else samples.mean(axis=0)
        out = NodeOutput(samples, weights, base.with_lambda(lam), lam, hint, None)
        outputs[node.node_id] = out
        return out

    child_rngs = rng.spawn(len(node.children))
    children = [
        _dc_recurse(
            child,
            models,
            n_particles,
            child_rng,
            ctx_kwargs,
            cfg,
            mesh_policy,
            fixed_mesh,
            resample_threshold,
            lambda_policy,
            leaf_kwargs,
            outputs,
        )
        for child, child_rng in zip(node.children, child_rngs)
    ]
    child_models = [c.model for c in children]
    leaf_samples = [(c.samples, c.weights) for c in children]
    hints = [c.mean_hint for c in children]
    lams = [c.lam for c in children]
    dim = children[0].samples.shape[1]
    ctx = GuidanceContext(n_factors=len(children), dim=dim, **ctx_kwargs)
    if ctx.regime == "ssh" and ctx.ssh_gamma is None:
        ctx.ssh_gamma = estimate_ssh_gamma(sigma_a_sq(hints, lams), ctx)
    if mesh_policy == "fixed":
        if fixed_mesh is None:
            raise DimensionMismatch("fixed mesh policy needs fixed_mesh=(T, n)")
        result = gbf(
            child_models,
            leaf_samples,
            regular_times(*fixed_mesh),
            n_particles,
            rng,
            estimator_cfg=cfg,
            resample_threshold=resample_threshold,
        )
    else:
        big_t = recommend_T(ctx)
        if mesh_policy == "guided-adaptive":
            result = gbf(
                child_models,
                leaf_samples,
                None,
                n_particles,
                rng,
                estimator_cfg=cfg,
                resample_threshold=resample_threshold,
                adaptive_policy=AdaptiveMeshPolicy(big_t, ctx, hints, lams),
            )
        elif mesh_policy == "guided-regular":
            result = gbf(
                child_models,
                leaf_samples,
                None,
                n_particles,
                rng,
                estimator_cfg=cfg,
                resample_threshold=resample_threshold,
                mesh_builder=lambda cloud: regular_mesh(big_t, cloud, ctx, hints, lams),
                big_t=big_t,
            )
        else:
            raise DimensionMismatch(f"unknown mesh policy {mesh_policy!r}")
    hint, est_lam = weighted_mean_cov(result.samples, result.weights)
    lam = est_lam if lambda_policy == "estimate" else None
    base_components = [_leaf_base_model(leaf, models) for leaf in node.leaves()]
    node_model = product_model(base_components, lam=lam)
    if lam is None:
        lam = node_model.lam
    out = NodeOutput(result.samples, result.weights, node_model, lam, hint, result)
    outputs[node.node_id] = out
    return out
