"""Dense symmetric linear algebra primitives shared by the numeric modules.

Matrices are plain ``numpy`` arrays; the helpers here enforce the symmetry /
definiteness contracts the rest of the package relies on.
"""

import numpy as np

from .errors import DimensionMismatch, NonFinite, NotPSD

SYM_RTOL = 1e-12


def check_symmetric(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFinite(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > SYM_RTOL * scale:
        raise NotPSD(f"{name} is not symmetric to within {SYM_RTOL} relative")
    return 0.5 * (m + m.T)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root S with S @ S = m, via the symmetric Schur
    (eigen) decomposition.

    Eigenvalues in [-1e-10 * ||m||, 0] are clamped to zero; anything more
    negative raises :class:`NotPSD`.
    """
    m = check_symmetric(m, "psd_sqrt input")
    w, v = np.linalg.eigh(m)
    norm = max(float(np.abs(w).max()), np.finfo(float).tiny)
    if w.min() < -1e-10 * norm:
        raise NotPSD(f"smallest eigenvalue {w.min():.3e} below -1e-10*||m||")
    w = np.clip(w, 0.0, None)
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def cholesky_spd(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor; failure means the matrix is not SPD."""
    m = check_symmetric(m, name)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPSD(f"{name} is not positive definite") from exc


def spd_inverse(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    l = cholesky_spd(m, name)
    inv_l = np.linalg.inv(l)
    inv = inv_l.T @ inv_l
    return 0.5 * (inv + inv.T)


def pooled_precision(lambdas: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Pool preconditioners: returns (sum of inverses, its inverse).

    The second return is the pooled matrix for the whole factor collection;
    the first is its precision.
    """
    if not lambdas:
        raise DimensionMismatch("need at least one matrix")
    d = np.asarray(lambdas[0]).shape[0]
    prec = np.zeros((d, d))
    for i, lam in enumerate(lambdas):
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (d, d):
            raise DimensionMismatch(
                f"matrix {i} has shape {lam.shape}, expected {(d, d)}"
            )
        prec += spd_inverse(lam, f"lambda[{i}]")
    pooled = spd_inverse(prec, "pooled precision")
    return prec, pooled


def weighted_center(
    lambdas: list[np.ndarray], points: list[np.ndarray]
) -> np.ndarray:
    """Precision-weighted average of per-factor points."""
    if len(lambdas) != len(points):
        raise DimensionMismatch(
            f"{len(lambdas)} matrices vs {len(points)} points"
        )
    _, pooled = pooled_precision(lambdas)
    d = pooled.shape[0]
    acc = np.zeros(d)
    for lam, p in zip(lambdas, points):
        p = np.asarray(p, dtype=float)
        if p.shape != (d,):
            raise DimensionMismatch(f"point has shape {p.shape}, expected {(d,)}")
        acc += np.linalg.solve(lam, p)
    return pooled @ acc


def operator_norm(m: np.ndarray) -> float:
    """Spectral norm max ||Ax|| / ||x|| via singular values."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise NonFinite("operator_norm input has non-finite entries")
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {m.shape}")
    return float(np.linalg.norm(m, 2))


def operator_norm_batch(ms: np.ndarray) -> np.ndarray:
    """Spectral norms of a (N, d, d) stack of symmetric matrices."""
    ms = np.asarray(ms, dtype=float)
    if ms.ndim == 2:
        return np.array([operator_norm(ms)])
    w = np.linalg.eigvalsh(0.5 * (ms + np.swapaxes(ms, -1, -2)))
    return np.abs(w).max(axis=-1)


def weighted_mean_cov(
    samples: np.ndarray, weights: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted sample mean and covariance (normalized weights)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise DimensionMismatch(f"weights shape {w.shape} vs {n} samples")
        w = w / w.sum()
    mean = w @ samples
    centered = samples - mean
    cov = (centered * w[:, None]).T @ centered
    return mean, 0.5 * (cov + cov.T)
