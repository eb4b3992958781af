"""Hyperparameter guidance: time horizon, interval sizes, and meshes.

All recommendations target user floors on the conditional effective sample
size: ``zeta`` for the initialisation weight, ``zeta_prime`` for each
iteration's incremental weights. The homogeneous ("sh") regime models factor
disagreement that decays with data size; the heterogeneous ("ssh") regime
models disagreement that does not.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadZeta, DimensionMismatch
from .estimators import weighted_centers
from .linalg import spd_inverse
from .smc import ParticleCloud, TemporalMesh


@dataclass
class GuidanceContext:
    n_factors: int
    dim: int
    data_size: float | None = None
    b: float | None = None
    zeta: float = 0.5
    zeta_prime: float = 0.5
    regime: str = "sh"
    sh_lambda: float = 1.0
    ssh_gamma: float | None = None

    def __post_init__(self):
        if self.data_size is None:
            # with lam set to estimated covariances only b/m = 1/C matters
            self.data_size = float(self.n_factors)
        if self.b is None:
            self.b = self.data_size / self.n_factors
        if not (0.0 < self.zeta < 1.0 and 0.0 < self.zeta_prime < 1.0):
            raise BadZeta("zeta and zeta_prime must lie in (0, 1)")
        if self.b <= 0 or self.data_size <= 0 or self.sh_lambda <= 0:
            raise DimensionMismatch("b, data size, and sh_lambda must be positive")
        if self.regime not in ("sh", "ssh"):
            raise DimensionMismatch(f"unknown regime {self.regime!r}")


def sigma_a_sq(mean_hints, lambdas) -> float:
    """Average precision-weighted squared deviation of the factor means."""
    if len(mean_hints) != len(lambdas):
        raise DimensionMismatch("one mean hint per factor required")
    hints = [np.asarray(h, dtype=float) for h in mean_hints]
    center = weighted_centers(np.stack(hints)[None, :, :], lambdas)[0]
    total = 0.0
    for h, lam in zip(hints, lambdas):
        diff = h - center
        total += float(diff @ spd_inverse(lam) @ diff)
    return total / len(hints)


def k1_value(ctx: GuidanceContext) -> float:
    log_zeta = math.log(ctx.zeta)
    if ctx.regime == "sh":
        return math.sqrt(-(ctx.sh_lambda + ctx.dim / 2.0) / log_zeta)
    if ctx.ssh_gamma is None:
        raise DimensionMismatch("ssh regime needs ssh_gamma (see estimate_ssh_gamma)")
    gm = ctx.ssh_gamma * ctx.data_size / ctx.n_factors
    return math.sqrt(-(gm + ctx.dim / 2.0) / log_zeta)


def estimate_ssh_gamma(sigma2_a: float, ctx: GuidanceContext) -> float:
    """Heterogeneity constant implied by the observed mean disagreement."""
    return (ctx.data_size / ctx.n_factors) * sigma2_a / ctx.b


def recommend_T(ctx: GuidanceContext) -> float:
    """Smallest horizon meeting the initial-CESS floor in the given regime."""
    k1 = k1_value(ctx)
    c, b, m = ctx.n_factors, ctx.b, ctx.data_size
    t_base = b * c**1.5 * k1 / m
    if ctx.regime == "sh":
        return t_base
    k2 = b * c * k1 / m
    return max(t_base, math.sqrt(c) * k2)


def cess0_closed_form(sigma2_a: float, big_t: float, ctx: GuidanceContext) -> float:
    """Large-N limit of the normalized initial CESS for Gaussian factors
    N(a_c, (bC/m) lam_c)."""
    c, b, m, d = ctx.n_factors, ctx.b, ctx.data_size, ctx.dim
    ratio = b / m
    first = math.exp(
        -sigma2_a * ratio / ((big_t / c + ratio) * (big_t / c + 2 * ratio))
    )
    q = c * b / (big_t * m)
    second = (1.0 + q**2 / (1.0 + 2.0 * q)) ** (-(c - 1) * d / 2.0)
    return first * second


def _quad_form_sum(points, mean_hints, lambdas) -> np.ndarray:
    """(1/C) sum_c (x_c - a_c)' lam_c^{-1} (x_c - a_c) per particle."""
    total = np.zeros(points.shape[0])
    for c, (hint, lam) in enumerate(zip(mean_hints, lambdas)):
        diff = points[:, c, :] - np.asarray(hint, dtype=float)
        total += np.einsum("ni,ij,nj->n", diff, spd_inverse(lam), diff)
    return total / len(lambdas)


def nu_hat(cloud: ParticleCloud, mean_hints, lambdas) -> float:
    """Weighted average variation of the trajectories about the factor means."""
    if len(mean_hints) != cloud.n_factors:
        raise DimensionMismatch("one mean hint per factor required")
    vals = _quad_form_sum(cloud.positions, mean_hints, lambdas)
    return float(cloud.weights() @ vals)


def nu_sup_hat(initial_cloud: ParticleCloud, mean_hints, lambdas) -> float:
    """Worst-case variation estimate from the initial particle set: the larger
    of the center-based and leaf-based weighted averages."""
    w = initial_cloud.weights()
    centers = np.repeat(
        initial_cloud.centers[:, None, :], initial_cloud.n_factors, axis=1
    )
    psi1 = float(w @ _quad_form_sum(centers, mean_hints, lambdas))
    psi2 = float(w @ _quad_form_sum(initial_cloud.positions, mean_hints, lambdas))
    return max(psi1, psi2)


def k4_choice(zeta_prime: float, nu_estimate: float, ctx: GuidanceContext) -> float:
    """Largest interval-size constant keeping the per-iteration CESS floor:
    the smaller root of the associated quadratic."""
    if not 0.0 < zeta_prime < 1.0:
        raise BadZeta("zeta_prime must lie in (0, 1)")
    if nu_estimate < 0:
        raise DimensionMismatch("nu estimate must be nonnegative")
    log_zp = math.log(zeta_prime)
    q = (
        nu_estimate**2
        * ctx.data_size**2
        / (2.0 * ctx.b**2 * ctx.n_factors * ctx.dim)
    )
    lin = 2.0 * log_zp - q
    disc = lin**2 - 4.0 * log_zp**2
    return 0.5 * ((q - 2.0 * log_zp) - math.sqrt(max(disc, 0.0)))


def interval_from_k4(k4: float, ctx: GuidanceContext) -> float:
    return math.sqrt(
        ctx.b**2 * ctx.n_factors * k4 / (2.0 * ctx.data_size**2 * ctx.dim)
    )


def regular_mesh(
    big_t: float, initial_cloud: ParticleCloud, ctx: GuidanceContext, mean_hints, lambdas
) -> TemporalMesh:
    """Regular mesh sized for the worst-case trajectory variation."""
    if big_t <= 0:
        raise DimensionMismatch("need T > 0")
    nu_sup = nu_sup_hat(initial_cloud, mean_hints, lambdas)
    delta = interval_from_k4(k4_choice(ctx.zeta_prime, nu_sup, ctx), ctx)
    n = max(1, math.ceil(big_t / delta))
    times = np.minimum(big_t, delta * np.arange(n + 1))
    times[-1] = big_t
    return TemporalMesh(times)


def adaptive_next_interval(
    big_t: float,
    t_prev: float,
    cloud: ParticleCloud,
    ctx: GuidanceContext,
    mean_hints,
    lambdas,
) -> float:
    """Next mesh time from the current cloud's variation estimate."""
    if t_prev >= big_t:
        raise DimensionMismatch("t_prev must lie before the horizon")
    nu = nu_hat(cloud, mean_hints, lambdas)
    delta = interval_from_k4(k4_choice(ctx.zeta_prime, nu, ctx), ctx)
    return min(big_t, t_prev + delta)


@dataclass
class AdaptiveMeshPolicy:
    """Callable mesh policy for the fusion loop: t_next = policy(t_prev, cloud)."""

    horizon: float
    ctx: GuidanceContext
    mean_hints: list
    lambdas: list

    def __call__(self, t_prev: float, cloud: ParticleCloud) -> float:
        return adaptive_next_interval(
            self.horizon, t_prev, cloud, self.ctx, self.mean_hints, self.lambdas
        )
