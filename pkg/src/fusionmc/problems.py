"""Synthetic problem builders shared by the CLI, benchmarks, and tests."""

import numpy as np

from .errors import ConfigInvalid
from .models import (
    GaussianModel,
    LogisticRegressionModel,
    NegBinRegressionModel,
    RegressionData,
    RobustTRegressionModel,
)

LOGISTIC_TRUE_BETA = np.array([-3.0, 1.2, -0.5, 0.8, 3.0])
LOGISTIC_ACTIVATION_PROBS = np.array([0.2, 0.3, 0.5, 0.01])
LOGISTIC_M = 1000


def make_logistic_small_data(rng: np.random.Generator, m: int = LOGISTIC_M):
    """Small-data logistic generator: sparse mixture covariates, fixed truth."""
    p = LOGISTIC_ACTIVATION_PROBS
    active = rng.random((m, p.shape[0])) < p
    vals = 1.0 + rng.standard_normal((m, p.shape[0]))
    feats = np.where(active, vals, 0.0)
    design = np.column_stack([np.ones(m), feats])
    logits = design @ LOGISTIC_TRUE_BETA
    y = (rng.random(m) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    return design, y


def shard_indices(n: int, n_shards: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    return np.array_split(perm, n_shards)


def shard_regression_data(
    design, response, n_shards, rng, prior_means=0.0, prior_var_scale=1.0
):
    """Random disjoint split; each shard gets the 1/C-fractionated prior
    (variance scaled by the shard count)."""
    shards = []
    for idx in shard_indices(len(response), n_shards, rng):
        shards.append(
            RegressionData(
                design[idx],
                response[idx],
                prior_means,
                prior_var_scale * n_shards,
            )
        )
    return shards


def logistic_synthetic_problem(n_factors: int, seed: int, m: int = LOGISTIC_M):
    """Sharded small-data logistic problem plus the full-data model."""
    rng = np.random.default_rng(seed)
    design, y = make_logistic_small_data(rng, m)
    shards = shard_regression_data(design, y, n_factors, rng)
    models = [LogisticRegressionModel(s) for s in shards]
    full = LogisticRegressionModel(RegressionData(design, y, 0.0, 1.0))
    return models, full


def gaussian_equal_factors(n_factors: int, dim: int = 1):
    """Factors N(0, C I): their product is the standard Gaussian target."""
    cov = float(n_factors) * np.eye(dim)
    return [GaussianModel(np.zeros(dim), cov) for _ in range(n_factors)]


def gaussian_target_of(models):
    """Analytic pooled Gaussian for a list of Gaussian factors."""
    prec = sum(m.prec for m in models)
    cov = np.linalg.inv(prec)
    mean = cov @ sum(m.prec @ m.mean for m in models)
    return mean, cov


def bivariate_sh_setting(
    n_factors: int = 10,
    data_size: int = 1000,
    rho: float = 0.9,
    means=None,
):
    """Homogeneous bivariate Gaussian factors with variance (C/m) Sigma."""
    sigma = np.array([[1.0, rho], [rho, 1.0]])
    cov = (n_factors / data_size) * sigma
    if means is None:
        means = [np.zeros(2) for _ in range(n_factors)]
    return [GaussianModel(m, cov) for m in means]


def regression_model_from_config(family: str, data: RegressionData, params: dict):
    if family == "logistic":
        return LogisticRegressionModel(data)
    if family == "robust":
        missing = {"nu", "sigma"} - set(params)
        if missing:
            raise ConfigInvalid(f"family_params missing {sorted(missing)}")
        return RobustTRegressionModel(data, params["nu"], params["sigma"])
    if family == "negbin":
        if "r" not in params:
            raise ConfigInvalid("family_params missing ['r']")
        return NegBinRegressionModel(data, params["r"])
    raise ConfigInvalid(f"unknown regression family {family!r}")
