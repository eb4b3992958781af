"""Particle system: composition, propagation, resampling, and the main
sequential fusion loop plus the rejection-sampling mode.

Weights live in log space end to end; normalization happens through
log-sum-exp so that a healthy particle set is preserved even when individual
increments underflow.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import estimators
from .errors import (
    AcceptanceStarvation,
    AllZeroWeights,
    DimensionMismatch,
    EmptyInput,
)
from .estimators import EstimatorConfig, weighted_centers
from .linalg import pooled_precision, psd_sqrt


@dataclass
class TemporalMesh:
    """Ordered times 0 = t_0 < ... < t_n = T."""

    times: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.shape[0] < 2:
            raise DimensionMismatch("mesh needs at least two times")
        if self.times[0] != 0.0:
            raise DimensionMismatch("mesh must start at 0")
        if np.any(np.diff(self.times) <= 0):
            raise DimensionMismatch("mesh times must be strictly increasing")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_intervals(self) -> int:
        return self.times.shape[0] - 1


def regular_times(big_t: float, n: int) -> TemporalMesh:
    return TemporalMesh(np.linspace(0.0, big_t, n + 1))


@dataclass
class ParticleCloud:
    """N particles, each holding one position per factor plus a log-weight."""

    positions: np.ndarray  # (N, C, d)
    log_weights: np.ndarray  # (N,)
    lambdas: list
    centers: np.ndarray = field(default=None)  # (N, d) cached weighted centers

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 3:
            raise DimensionMismatch("positions must be (N, C, d)")
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.log_weights.shape != (self.positions.shape[0],):
            raise DimensionMismatch("one log-weight per particle required")
        if self.centers is None:
            self.refresh_centers()

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def n_factors(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    def refresh_centers(self):
        self.centers = weighted_centers(self.positions, self.lambdas)

    def normalize(self):
        finite = np.isfinite(self.log_weights)
        if not finite.any():
            raise AllZeroWeights("all particle log-weights are -inf")
        self.log_weights = self.log_weights - logsumexp(self.log_weights)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


def ess(cloud: ParticleCloud) -> float:
    """Effective sample size 1 / sum(w^2) of the normalized weights."""
    if not np.any(np.isfinite(cloud.log_weights)):
        raise AllZeroWeights("all particle log-weights are -inf")
    lw = cloud.log_weights - logsumexp(cloud.log_weights)
    return float(np.exp(-logsumexp(2.0 * lw)))


def cess(prev_log_weights: np.ndarray, log_increments: np.ndarray) -> float:
    """Conditional ESS of one iteration's incremental weights.

    N (sum w rho)^2 / sum(w rho^2) with w the previous normalized weights;
    reduces to (sum rho)^2 / sum(rho^2) under uniform weights.
    """
    n = prev_log_weights.shape[0]
    lw = prev_log_weights - logsumexp(prev_log_weights)
    if not np.any(np.isfinite(lw + log_increments)):
        raise AllZeroWeights("all incremental weights vanished")
    num = 2.0 * logsumexp(lw + log_increments)
    den = logsumexp(lw + 2.0 * log_increments)
    return float(n * np.exp(num - den))


def residual_resample(
    cloud: ParticleCloud, rng: np.random.Generator, n_out: int | None = None
) -> ParticleCloud:
    """Deterministic integer copies, systematic draw on the residual mass."""
    n_out = cloud.n_particles if n_out is None else int(n_out)
    w = cloud.weights()
    w = w / w.sum()
    counts = np.floor(n_out * w).astype(int)
    remainder = n_out - counts.sum()
    if remainder > 0:
        resid = n_out * w - counts
        resid_total = resid.sum()
        u = (rng.random() + np.arange(remainder)) / remainder
        cum = np.cumsum(resid / resid_total)
        extra = np.searchsorted(cum, u, side="left")
        counts += np.bincount(extra, minlength=counts.shape[0])
    idx = np.repeat(np.arange(cloud.n_particles), counts)
    return ParticleCloud(
        cloud.positions[idx].copy(),
        np.full(n_out, -math.log(n_out)),
        cloud.lambdas,
        centers=cloud.centers[idx].copy(),
    )


def compose_initial_cloud(
    leaf_samples,
    lambdas,
    big_t: float,
    n_particles: int,
    rng: np.random.Generator,
) -> tuple[ParticleCloud, float]:
    """Pair per-factor draws index-wise and weight by the coalescence factor.

    leaf_samples: per factor, either an (M, d) array (uniform weights) or an
    (array, weights) pair. Counts are subsampled to the common minimum; the
    result is normalized and resampled to n_particles when the counts differ.
    Returns (cloud, cess0).
    """
    if not leaf_samples:
        raise EmptyInput("no factors supplied")
    samples, log_ws = [], []
    for entry in leaf_samples:
        if isinstance(entry, tuple):
            draws, w = entry
            draws = np.atleast_2d(np.asarray(draws, float))
            if w is None:
                lw = np.zeros(draws.shape[0])
            else:
                w = np.asarray(w, dtype=float)
                with np.errstate(divide="ignore"):
                    lw = np.log(w / w.sum())
        else:
            draws = np.atleast_2d(np.asarray(entry, float))
            lw = np.zeros(draws.shape[0])
        samples.append(draws)
        log_ws.append(lw)
    m = min(s.shape[0] for s in samples)
    if m < 1:
        raise EmptyInput("factor supplied no draws")
    for c in range(len(samples)):
        if samples[c].shape[0] > m:
            keep = rng.choice(samples[c].shape[0], size=m, replace=False)
            samples[c] = samples[c][keep]
            log_ws[c] = log_ws[c][keep]
    positions = np.stack(samples, axis=1)  # (M, C, d)
    log_rho0 = estimators.log_rho_zero(positions, lambdas, big_t)
    prior_lw = np.sum(np.stack(log_ws, axis=1), axis=1)
    cess0 = cess(prior_lw, log_rho0)
    cloud = ParticleCloud(positions, prior_lw + log_rho0, list(lambdas))
    cloud.normalize()
    if m != n_particles:
        cloud = residual_resample(cloud, rng, n_out=n_particles)
    return cloud, cess0


def _mean_drift(cloud, t_prev, t_next, big_t):
    """Per-factor proposal means: positions shrunk toward the current center."""
    keep = (big_t - t_next) / (big_t - t_prev)
    pull = (t_next - t_prev) / (big_t - t_prev)
    return keep * cloud.positions + pull * cloud.centers[:, None, :]


def propagate_step(
    cloud: ParticleCloud,
    t_prev: float,
    t_next: float,
    big_t: float,
    rng: np.random.Generator,
) -> ParticleCloud:
    """Joint block-Gaussian transition of all factor slots (one step).

    The terminal step draws a single common value per particle from the
    pooled Gaussian and writes it into every slot.
    """
    if not t_prev < t_next <= big_t:
        raise DimensionMismatch("need t_prev < t_next <= T")
    lams = cloud.lambdas
    _, pooled = pooled_precision(lams)
    n, n_fac, d = cloud.positions.shape
    if t_next == big_t:
        scale = psd_sqrt((big_t - t_prev) * pooled)
        y = cloud.centers + rng.standard_normal((n, d)) @ scale.T
        positions = np.repeat(y[:, None, :], n_fac, axis=1)
        return ParticleCloud(positions, cloud.log_weights.copy(), lams, centers=y.copy())
    delta = t_next - t_prev
    span = big_t - t_prev
    gamma_diag = delta * (big_t - t_next) / span
    gamma_cross = delta**2 / span
    cov = np.zeros((n_fac * d, n_fac * d))
    for i in range(n_fac):
        for j in range(n_fac):
            block = gamma_cross * pooled
            if i == j:
                block = block + gamma_diag * np.asarray(lams[i])
            cov[i * d : (i + 1) * d, j * d : (j + 1) * d] = block
    chol = np.linalg.cholesky(cov + 1e-14 * np.eye(n_fac * d))
    noise = rng.standard_normal((n, n_fac * d)) @ chol.T
    positions = _mean_drift(cloud, t_prev, t_next, big_t) + noise.reshape(n, n_fac, d)
    return ParticleCloud(positions, cloud.log_weights.copy(), lams)


def propagate_decomposed(
    cloud: ParticleCloud,
    t_prev: float,
    t_next: float,
    big_t: float,
    rng: np.random.Generator,
) -> ParticleCloud:
    """Same law as propagate_step via one shared pooled draw plus per-factor
    noise; avoids the (Cd x Cd) Cholesky."""
    if not t_prev < t_next <= big_t:
        raise DimensionMismatch("need t_prev < t_next <= T")
    lams = cloud.lambdas
    _, pooled = pooled_precision(lams)
    n, n_fac, d = cloud.positions.shape
    if t_next == big_t:
        scale = psd_sqrt((big_t - t_prev) * pooled)
        y = cloud.centers + rng.standard_normal((n, d)) @ scale.T
        positions = np.repeat(y[:, None, :], n_fac, axis=1)
        return ParticleCloud(positions, cloud.log_weights.copy(), lams, centers=y.copy())
    delta = t_next - t_prev
    span = big_t - t_prev
    shared_scale = psd_sqrt(pooled) * math.sqrt(delta**2 / span)
    shared = rng.standard_normal((n, d)) @ shared_scale.T
    positions = _mean_drift(cloud, t_prev, t_next, big_t) + shared[:, None, :]
    own_coef = math.sqrt((big_t - t_next) * delta / span)
    for c in range(n_fac):
        own_scale = psd_sqrt(np.asarray(lams[c])) * own_coef
        positions[:, c, :] += rng.standard_normal((n, d)) @ own_scale.T
    return ParticleCloud(positions, cloud.log_weights.copy(), lams)


@dataclass
class IterationRecord:
    iteration: int
    t: float
    delta: float
    cess: float
    ess_before: float
    resampled: bool


@dataclass
class FusionResult:
    samples: np.ndarray  # (N, d) terminal common positions
    weights: np.ndarray  # (N,) normalized
    diagnostics: list
    mesh_used: TemporalMesh
    cess0: float
    acceptance_rate: float | None = None

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples

    def var(self) -> np.ndarray:
        mu = self.mean()
        return self.weights @ (self.samples - mu) ** 2


def gbf(
    models,
    leaf_samples,
    mesh,
    n_particles: int,
    rng: np.random.Generator,
    estimator_cfg: EstimatorConfig | None = None,
    resample_threshold: float = 0.5,
    adaptive_policy=None,
    mesh_builder=None,
    big_t: float | None = None,
    use_block_propagation: bool = False,
) -> FusionResult:
    """Sequential fusion of the factors' weighted samples.

    mesh: a TemporalMesh; or None with either an adaptive_policy callable
    (t_prev, cloud) -> t_next that extends the mesh on the fly, or a
    mesh_builder callable (initial cloud) -> TemporalMesh paired with big_t.
    """
    cfg = estimator_cfg or EstimatorConfig()
    lambdas = [m.lam for m in models]
    if mesh is None and adaptive_policy is None and mesh_builder is None:
        raise DimensionMismatch("need a mesh, an adaptive policy, or a builder")
    if mesh is not None:
        big_t = mesh.horizon
    elif adaptive_policy is not None:
        big_t = adaptive_policy.horizon
    elif big_t is None:
        raise DimensionMismatch("mesh_builder requires an explicit horizon")
    cloud, cess0 = compose_initial_cloud(
        leaf_samples, lambdas, big_t, n_particles, rng
    )
    if mesh is None and mesh_builder is not None:
        mesh = mesh_builder(cloud)
        if mesh.horizon != big_t:
            raise DimensionMismatch("built mesh must end at the stated horizon")
    propagate = propagate_step if use_block_propagation else propagate_decomposed
    diagnostics: list[IterationRecord] = []
    times_used = [0.0]
    t_prev = 0.0
    j = 0
    while t_prev < big_t:
        j += 1
        ess_before = ess(cloud)
        resampled = False
        if ess_before < resample_threshold * cloud.n_particles:
            cloud = residual_resample(cloud, rng)
            resampled = True
        if mesh is not None:
            t_next = float(mesh.times[j])
        else:
            t_next = float(adaptive_policy(t_prev, cloud))
        prev_positions = cloud.positions
        cloud = propagate(cloud, t_prev, t_next, big_t, rng)
        log_incr = estimators.estimate_log_rho_tilde_cloud(
            models, prev_positions, cloud.positions, t_prev, t_next, cfg, rng
        )
        step_cess = cess(cloud.log_weights, log_incr)
        cloud.log_weights = cloud.log_weights + log_incr
        cloud.normalize()
        diagnostics.append(
            IterationRecord(j, t_next, t_next - t_prev, step_cess, ess_before, resampled)
        )
        times_used.append(t_next)
        t_prev = t_next
    return FusionResult(
        samples=cloud.positions[:, 0, :].copy(),
        weights=cloud.weights(),
        diagnostics=diagnostics,
        mesh_used=TemporalMesh(np.asarray(times_used)),
        cess0=cess0,
    )


def mcf_rejection(
    models,
    big_t: float,
    n_accept: int,
    rng: np.random.Generator,
    max_proposals: int = 10_000_000,
    min_rate: float = 1e-6,
    batch: int = 256,
) -> tuple[np.ndarray, float]:
    """Rejection-sampling mode: identity preconditioners, single interval.

    Each proposal draws one point per factor, a pooled terminal value, and is
    accepted with probability rho_0 times the floor-scaled interval weight
    estimator; accepted terminal values are exact independent draws from the
    product density. Requires every factor to expose a finite phi floor.
    """
    d = models[0].dim
    models = [m.with_lambda(np.eye(d)) for m in models]
    if any(not np.isfinite(m.phi_floor) for m in models):
        raise DimensionMismatch(
            "rejection mode needs models with a finite phi floor"
        )
    cfg = EstimatorConfig(kind="gpe1")
    lambdas = [m.lam for m in models]
    floor_sum = sum(m.phi_floor for m in models)
    accepted = []
    proposals = 0
    while len(accepted) < n_accept:
        if proposals >= max_proposals:
            rate = len(accepted) / proposals
            if rate < min_rate:
                raise AcceptanceStarvation(
                    f"acceptance rate {rate:.2e} after {proposals} proposals"
                )
        m = batch
        x0 = np.stack([mod.sample_leaf(m, rng) for mod in models], axis=1)
        cloud = ParticleCloud(x0, np.zeros(m), lambdas)
        log_rho0 = estimators.log_rho_zero(x0, lambdas, big_t)
        terminal = propagate_decomposed(cloud, 0.0, big_t, big_t, rng)
        log_rho1 = estimators.estimate_log_rho_tilde_cloud(
            models, x0, terminal.positions, 0.0, big_t, cfg, rng
        )
        log_alpha = log_rho0 + log_rho1 + floor_sum * big_t
        if np.any(log_alpha > 1e-9):
            raise AcceptanceStarvation(
                "acceptance probability exceeded 1; floor logic violated"
            )
        keep = np.log(rng.random(m)) < log_alpha
        accepted.extend(terminal.positions[keep, 0, :])
        proposals += m
    rate = len(accepted) / proposals
    return np.asarray(accepted[:n_accept]), rate
