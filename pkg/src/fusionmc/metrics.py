"""Consensus-merge baseline, per-dimension KDE, and the integrated absolute
distance between marginal densities."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import CountMismatch, DimensionMismatch, TooFewSamples
from .linalg import spd_inverse, weighted_mean_cov

KDE_GRID_POINTS = 512
KDE_GRID_PAD_BANDWIDTHS = 3.0
MIN_EFFECTIVE_SAMPLES = 10


def consensus_merge(sub_samples, weights=None) -> np.ndarray:
    """Precision-weighted average of per-factor draws, index-wise.

    weights: per-factor matrices W_c; defaults to the inverse sample
    covariance of each factor's draws.
    """
    draws = [np.atleast_2d(np.asarray(s, dtype=float)) for s in sub_samples]
    if not draws:
        raise CountMismatch("no factors supplied")
    n = draws[0].shape[0]
    if any(s.shape[0] != n for s in draws):
        raise CountMismatch("per-factor draw counts must be equal")
    if weights is None:
        weights = []
        for s in draws:
            _, cov = weighted_mean_cov(s)
            weights.append(spd_inverse(cov + 1e-12 * np.eye(s.shape[1]), "sample cov"))
    total = sum(np.asarray(w, dtype=float) for w in weights)
    pooled = spd_inverse(total, "consensus weight sum")
    acc = sum(s @ np.asarray(w, dtype=float).T for s, w in zip(draws, weights))
    return acc @ pooled.T


@dataclass
class Kde1D:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)


def _weighted_quantile(sorted_x, cum_w, q):
    return float(np.interp(q, cum_w, sorted_x))


def silverman_bandwidth(samples: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(samples)
    x = samples[order]
    w = weights[order]
    cw = np.cumsum(w)
    cw = cw / cw[-1]
    mean = float(w @ x / w.sum())
    sd = math.sqrt(max(float(w @ (x - mean) ** 2 / w.sum()), 1e-300))
    iqr = _weighted_quantile(x, cw, 0.75) - _weighted_quantile(x, cw, 0.25)
    n_eff = float((w.sum() ** 2) / np.sum(w**2))
    scale = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * scale * n_eff ** (-0.2)


def kde_1d(samples, weights=None) -> Kde1D:
    """Gaussian-kernel weighted KDE with Silverman bandwidth."""
    samples = np.asarray(samples, dtype=float).ravel()
    if weights is None:
        weights = np.full(samples.shape[0], 1.0 / max(samples.shape[0], 1))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != samples.shape:
        raise DimensionMismatch("one weight per sample required")
    wsum = weights.sum()
    n_eff = float(wsum**2 / np.sum(weights**2)) if wsum > 0 else 0.0
    if n_eff < MIN_EFFECTIVE_SAMPLES:
        raise TooFewSamples(f"effective sample size {n_eff:.1f} < 10")
    w = weights / wsum
    bw = silverman_bandwidth(samples, w)
    lo = samples.min() - KDE_GRID_PAD_BANDWIDTHS * bw
    hi = samples.max() + KDE_GRID_PAD_BANDWIDTHS * bw
    grid = np.linspace(lo, hi, KDE_GRID_POINTS)
    z = (grid[:, None] - samples[None, :]) / bw
    dens = (np.exp(-0.5 * z**2) @ w) / (bw * math.sqrt(2 * math.pi))
    return Kde1D(grid, dens, bw)


@dataclass
class DensitySide:
    """One side of the distance: marginal pdfs or weighted samples."""

    pdfs: list | None = None  # per-dim callables
    support: tuple | None = None  # (lo, hi) arrays when pdfs given
    samples: np.ndarray | None = None
    weights: np.ndarray | None = None

    @classmethod
    def from_samples(cls, samples, weights=None):
        return cls(samples=np.atleast_2d(np.asarray(samples, float)), weights=weights)

    @classmethod
    def from_pdfs(cls, pdfs, support):
        return cls(pdfs=list(pdfs), support=support)

    def dim(self):
        if self.samples is not None:
            return self.samples.shape[1]
        return len(self.pdfs)

    def marginal(self, j):
        """Return (grid, pdf callable) for dimension j."""
        if self.samples is not None:
            kde = kde_1d(self.samples[:, j], self.weights)
            return kde.grid, kde
        lo, hi = self.support
        grid = np.linspace(float(np.atleast_1d(lo)[j]), float(np.atleast_1d(hi)[j]), KDE_GRID_POINTS)
        return grid, self.pdfs[j]


def iad(side_a: DensitySide, side_b: DensitySide) -> float:
    """Average per-dimension half-L1 distance between marginal densities.

    Sample-based sides are turned into KDEs; the integral runs over the union
    of both sides' grids by trapezoid. Result clamped to [0, 1].
    """
    if side_a.dim() != side_b.dim():
        raise DimensionMismatch("sides must share a dimension")
    d = side_a.dim()
    total = 0.0
    for j in range(d):
        grid_a, f_a = side_a.marginal(j)
        grid_b, f_b = side_b.marginal(j)
        # pad each grid with a just-outside point so disjoint supports do not
        # leak trapezoid area across the empty gap between them
        padded = []
        for g in (grid_a, grid_b):
            step = g[1] - g[0]
            padded.append(np.concatenate([[g[0] - step], g, [g[-1] + step]]))
        grid = np.union1d(padded[0], padded[1])
        diff = np.abs(np.asarray(f_a(grid)) - np.asarray(f_b(grid)))
        total += float(np.trapezoid(diff, grid))
    val = total / (2.0 * d)
    if val > 1.0 + 1e-6:
        raise DimensionMismatch(f"distance {val} escaped [0, 1]; bad densities")
    return min(max(val, 0.0), 1.0)


def iad_samples(samples_a, weights_a, samples_b, weights_b=None) -> float:
    return iad(
        DensitySide.from_samples(samples_a, weights_a),
        DensitySide.from_samples(samples_b, weights_b),
    )


def gaussian_density_side(mean, cov) -> DensitySide:
    """Analytic side with independent-marginal pdfs of a Gaussian."""
    mean = np.atleast_1d(np.asarray(mean, float))
    cov = np.atleast_2d(np.asarray(cov, float))
    sds = np.sqrt(np.diag(cov))

    def make_pdf(mu, sd):
        return lambda x: np.exp(-0.5 * ((x - mu) / sd) ** 2) / (
            sd * math.sqrt(2 * math.pi)
        )

    pdfs = [make_pdf(mean[j], sds[j]) for j in range(mean.shape[0])]
    lo = mean - 8.0 * sds
    hi = mean + 8.0 * sds
    return DensitySide.from_pdfs(pdfs, (lo, hi))
