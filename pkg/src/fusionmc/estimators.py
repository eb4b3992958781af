"""Initial weight rho_0 and the unbiased path-integral weight estimators.

The per-interval weight of a particle is a product over factors of an
unbiased estimator of exp(-integral of phi along a constrained bridge).
Auxiliary counts come either from a Poisson law pinned to the local phi
bounds (GPE-1) or a negative-binomial law whose mean tracks the chord
integral of phi (GPE-2). All accumulation happens in log space.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import bridge
from .errors import DimensionMismatch, FusionError
from .linalg import pooled_precision, spd_inverse


@dataclass
class EstimatorConfig:
    kind: str = "gpe2"  # "gpe1" | "gpe2"
    nb_beta: float = 10.0
    trapezoid_points: int = 2
    gamma_floor: float = 1e-8
    theta_factor: float | None = None  # layer base width, in sqrt(interval) units

    def __post_init__(self):
        if self.kind not in ("gpe1", "gpe2"):
            raise DimensionMismatch(f"unknown estimator kind {self.kind!r}")
        if self.nb_beta <= 0 or self.trapezoid_points < 2 or self.gamma_floor <= 0:
            raise DimensionMismatch("invalid estimator configuration")


def _as_positions(positions) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 2:
        pos = pos[None, :, :]
    if pos.ndim != 3:
        raise DimensionMismatch(f"positions must be (N, C, d), got {pos.shape}")
    return pos


def _lambda_stacks(lambdas):
    lams = [np.asarray(l, dtype=float) for l in lambdas]
    prec, pooled = pooled_precision(lams)
    invs = np.stack([spd_inverse(l) for l in lams])
    return invs, prec, pooled


def weighted_centers(positions, lambdas) -> np.ndarray:
    """Per-particle precision-weighted centers; positions (N, C, d)."""
    pos = _as_positions(positions)
    invs, _, pooled = _lambda_stacks(lambdas)
    if pos.shape[1] != invs.shape[0]:
        raise DimensionMismatch(
            f"{pos.shape[1]} factor slots vs {invs.shape[0]} lambdas"
        )
    acc = np.einsum("cij,ncj->ni", invs, pos)
    return acc @ pooled.T


def log_rho_zero(positions, lambdas, big_t: float) -> np.ndarray:
    """log of the initial coalescence weight (batched over particles)."""
    pos = _as_positions(positions)
    if big_t <= 0:
        raise DimensionMismatch("need T > 0")
    invs, _, _ = _lambda_stacks(lambdas)
    centers = weighted_centers(pos, lambdas)
    diff = centers[:, None, :] - pos
    quad = np.einsum("nci,cij,ncj->n", diff, invs, diff)
    return -quad / (2.0 * big_t)


def rho_zero(positions, lambdas, big_t: float) -> float | np.ndarray:
    out = np.exp(log_rho_zero(positions, lambdas, big_t))
    return float(out[0]) if np.asarray(positions).ndim == 2 else out


def log_rho_zero_centered(positions, lambdas, big_t: float, theta_tilde) -> np.ndarray:
    """log of the centered-initialisation weight; valid only when leaves are
    drawn from the correspondingly reweighted factor densities."""
    pos = _as_positions(positions)
    theta = np.asarray(theta_tilde, dtype=float)
    _, prec, _ = _lambda_stacks(lambdas)
    if theta.shape != (prec.shape[0],):
        raise DimensionMismatch(f"theta shape {theta.shape} vs dim {prec.shape[0]}")
    centers = weighted_centers(pos, lambdas)
    diff = centers - theta
    quad = np.einsum("ni,ij,nj->n", diff, prec, diff)
    return quad / (2.0 * big_t)


def rho_zero_centered(positions, lambdas, big_t, theta_tilde):
    out = np.exp(log_rho_zero_centered(positions, lambdas, big_t, theta_tilde))
    return float(out[0]) if np.asarray(positions).ndim == 2 else out


def _chord_phi_trapezoid(model, x_left, x_right, delta: float, k: int) -> np.ndarray:
    """Trapezoid estimate of the phi integral along the straight chord."""
    frac = np.linspace(0.0, 1.0, k)
    chord = x_left[:, None, :] * (1.0 - frac[None, :, None]) + x_right[
        :, None, :
    ] * frac[None, :, None]
    vals = model.phi(chord)
    return np.trapezoid(vals, dx=delta / (k - 1), axis=1)


def nb_mean_gamma(model, x_left, x_right, t_left, t_right, upper, cfg) -> float:
    """Negative-binomial mean: slack of the bound over the chord integral."""
    delta = t_right - t_left
    integral = _chord_phi_trapezoid(
        model,
        np.atleast_2d(np.asarray(x_left, float)),
        np.atleast_2d(np.asarray(x_right, float)),
        delta,
        cfg.trapezoid_points,
    )[0]
    return max(float(upper * delta - integral), cfg.gamma_floor)


def estimate_log_rho_tilde_cloud(
    models,
    x_prev: np.ndarray,
    x_next: np.ndarray,
    t_prev: float,
    t_next: float,
    cfg: EstimatorConfig,
    rng: np.random.Generator,
    return_kappa: bool = False,
):
    """Per-particle log of the interval weight estimator, all factors.

    positions are (N, C, d); one layered bridge per particle/factor supplies
    the local phi bounds, the auxiliary count law, and the interior skeleton
    points at which phi is evaluated.
    """
    x_prev = _as_positions(x_prev)
    x_next = _as_positions(x_next)
    if x_prev.shape != x_next.shape:
        raise DimensionMismatch("endpoint clouds must share a shape")
    n, n_factors, _ = x_prev.shape
    if n_factors != len(models):
        raise DimensionMismatch(f"{n_factors} slots vs {len(models)} models")
    delta = t_next - t_prev
    if delta <= 0:
        raise DimensionMismatch("need t_prev < t_next")
    total = np.zeros(n)
    kappa_total = np.zeros(n, dtype=int)
    for c, model in enumerate(models):
        z0 = x_prev[:, c, :] @ model.lam_inv_sqrt
        z1 = x_next[:, c, :] @ model.lam_inv_sqrt
        layers = bridge.simulate_layers_batch(
            z0, z1, t_prev, t_next, rng, theta_factor=cfg.theta_factor
        )
        lo, up = model.phi_box_bounds(layers.centers(), layers.radii())
        if cfg.kind == "gpe1":
            kappa = rng.poisson((up - lo) * delta)
            total += -lo * delta
        else:
            gamma = np.maximum(
                up * delta
                - _chord_phi_trapezoid(
                    model,
                    x_prev[:, c, :],
                    x_next[:, c, :],
                    delta,
                    cfg.trapezoid_points,
                ),
                cfg.gamma_floor,
            )
            beta = cfg.nb_beta
            kappa = rng.negative_binomial(beta, beta / (beta + gamma))
            total += (
                -up * delta
                + kappa * np.log(delta)
                + gammaln(beta)
                + (beta + kappa) * np.log(beta + gamma)
                - gammaln(beta + kappa)
                - beta * np.log(beta)
                - kappa * np.log(gamma)
            )
        kappa_total += kappa
        nonzero = np.flatnonzero(kappa)
        if nonzero.size:
            part_list, pts_list = [], []
            for k in np.unique(kappa[kappa > 0]):
                group = nonzero[kappa[nonzero] == k]
                times_k = np.sort(rng.uniform(t_prev, t_next, (group.size, k)), axis=1)
                pts_k = bridge.sample_points_batch(layers, group, times_k, rng)
                pts_list.append(pts_k.reshape(group.size * k, -1))
                part_list.append(np.repeat(group, k))
            part_idx = np.concatenate(part_list)
            z_all = np.vstack(pts_list)
            phi_vals = model.phi(z_all @ model.lam_sqrt)
            slack = up[part_idx] - phi_vals
            if np.any(slack < -1e-9 * np.maximum(1.0, np.abs(up[part_idx]))):
                raise FusionError(
                    "phi exceeded its interval upper bound; bound logic violated"
                )
            with np.errstate(divide="ignore"):
                contrib = np.zeros(n)
                np.add.at(contrib, part_idx, np.log(np.clip(slack, 0.0, None)))
                total += contrib
                if cfg.kind == "gpe1":
                    total[nonzero] -= kappa[nonzero] * np.log(
                        (up - lo)[nonzero]
                    )
    if return_kappa:
        return total, kappa_total
    return total


def estimate_rho_tilde(
    models, x_prev, x_next, t_prev, t_next, cfg, rng
) -> float:
    """Single-particle interval weight estimator (value, not log)."""
    log_val = estimate_log_rho_tilde_cloud(
        models,
        np.asarray(x_prev, float)[None, :, :],
        np.asarray(x_next, float)[None, :, :],
        t_prev,
        t_next,
        cfg,
        rng,
    )
    return float(np.exp(log_val[0]))
