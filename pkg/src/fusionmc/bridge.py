"""Brownian bridges simulated jointly with almost-sure bounding layers.

All simulation happens in whitened coordinates, where the bridge has unit
covariance and independent coordinates; the multivariate layer is the product
of per-coordinate intervals. A layer is one member of a nested family of
symmetric boxes around the endpoints, indexed by an integer level and sampled
by inversion of the exact containment-probability series. Interior points
conditional on a layer are drawn by rejection against the same series.

The containment probability of a unit-variance bridge within an interval is
an alternating series of image terms; partial sums bracket the true value and
terms below ``SERIES_FLOOR`` are treated as converged.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SeriesNonConvergence

SERIES_FLOOR = 1e-15
SERIES_CAP = 10_000
MAX_LEVEL = 64
# layer base width in sqrt(interval) units; wide enough that the first level
# dominates, keeping the conditional point sampler cheap
DEFAULT_THETA_FACTOR = 2.0


def _safe_exp(e: float) -> float:
    return math.exp(e) if e > -37.0 else 0.0


def bb_interval_prob_scalar(
    a: float, b: float, x: float, y: float, delta: float
) -> float:
    """P(bridge from x to y over time delta stays inside [a, b])."""
    if not (a <= x <= b and a <= y <= b) or b <= a:
        return 0.0
    big_d = b - a
    c = 2.0 / delta
    total = 1.0
    j = 1
    while True:
        jd = j * big_d
        s = _safe_exp(-c * (jd - (b - x)) * (jd - (b - y))) + _safe_exp(
            -c * (jd - (x - a)) * (jd - (y - a))
        )
        p = _safe_exp(-c * jd * (jd - (x - y))) + _safe_exp(
            -c * jd * (jd + (x - y))
        )
        total += p - s
        if s < SERIES_FLOOR and p < SERIES_FLOOR:
            break
        j += 1
        if j > SERIES_CAP:
            raise SeriesNonConvergence(
                f"containment series unresolved after {SERIES_CAP} terms"
            )
    return min(max(total, 0.0), 1.0)


def _bb_prob_flat(a, b, x, y, delta) -> np.ndarray:
    """Series core on same-shape flat arrays; endpoints assumed inside."""
    c = 2.0 / delta
    big_d = b - a
    total = np.ones(a.shape[0])
    idx = np.arange(a.shape[0])
    j = 1
    while idx.size:
        if j > SERIES_CAP:
            raise SeriesNonConvergence(
                f"containment series unresolved after {SERIES_CAP} terms"
            )
        jd = j * big_d[idx]
        aa, bb = a[idx], b[idx]
        xx, yy = x[idx], y[idx]
        cc = c[idx] if isinstance(c, np.ndarray) else c
        with np.errstate(under="ignore"):
            s = np.exp(-cc * (jd - (bb - xx)) * (jd - (bb - yy))) + np.exp(
                -cc * (jd - (xx - aa)) * (jd - (yy - aa))
            )
            p = np.exp(-cc * jd * (jd - (xx - yy))) + np.exp(
                -cc * jd * (jd + (xx - yy))
            )
        total[idx] += p - s
        idx = idx[np.maximum(s, p) >= SERIES_FLOOR]
        j += 1
    return np.clip(total, 0.0, 1.0)


def bb_interval_prob(a, b, x, y, delta) -> np.ndarray:
    """Vectorized containment probability (arrays broadcast elementwise;
    delta may be an array too)."""
    a, b, x, y, delta = np.broadcast_arrays(
        np.asarray(a, float),
        np.asarray(b, float),
        np.asarray(x, float),
        np.asarray(y, float),
        np.asarray(delta, float),
    )
    shape = a.shape
    a, b, x, y, delta = (v.ravel() for v in (a, b, x, y, delta))
    out = np.zeros(a.shape[0])
    inside = (x >= a) & (x <= b) & (y >= a) & (y <= b) & (b > a)
    if inside.any():
        out[inside] = _bb_prob_flat(
            a[inside], b[inside], x[inside], y[inside], delta[inside]
        )
    return out.reshape(shape)


def _boxes_at_level(z0, z1, theta, levels):
    lo = np.minimum(z0, z1) - levels * theta
    hi = np.maximum(z0, z1) + levels * theta
    return lo, hi


@dataclass
class BatchLayers:
    """Per-coordinate layers for a batch of bridges (whitened space)."""

    z_start: np.ndarray  # (n, d)
    z_end: np.ndarray  # (n, d)
    t_start: float
    t_end: float
    theta: float
    levels: np.ndarray  # (n, d) integer layer levels
    lo: np.ndarray  # (n, d) outer box lower edges
    hi: np.ndarray  # (n, d) outer box upper edges

    @property
    def delta(self) -> float:
        return self.t_end - self.t_start

    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def radii(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)


@dataclass
class LayerInfo:
    """Bounding layer of one bridge, in whitened and original coordinates."""

    whitened_box: np.ndarray  # (d, 2) columns [lo, hi]
    original_box: np.ndarray  # (d, 2)
    z_start: np.ndarray
    z_end: np.ndarray
    t_start: float
    t_end: float
    lambda_sqrt: np.ndarray
    levels: np.ndarray
    theta: float

    @property
    def delta(self) -> float:
        return self.t_end - self.t_start


def simulate_layers_batch(
    z_start: np.ndarray,
    z_end: np.ndarray,
    t_start: float,
    t_end: float,
    rng: np.random.Generator,
    theta_factor: float | None = None,
) -> BatchLayers:
    """Sample one layer per coordinate for a batch of whitened bridges.

    The level is the smallest member of the nested box family containing the
    whole path, drawn by inversion: a single uniform per coordinate compared
    against the increasing containment probabilities.
    """
    z0 = np.atleast_2d(np.asarray(z_start, float))
    z1 = np.atleast_2d(np.asarray(z_end, float))
    if z0.shape != z1.shape:
        raise DimensionMismatch(f"endpoint shapes differ: {z0.shape} vs {z1.shape}")
    if not t_end > t_start:
        raise DimensionMismatch("need t_start < t_end")
    if theta_factor is None:
        theta_factor = DEFAULT_THETA_FACTOR
    delta = t_end - t_start
    theta = theta_factor * math.sqrt(delta)
    u = rng.random(z0.shape)
    levels = np.zeros(z0.shape, dtype=int)
    active = np.ones(z0.shape, dtype=bool)
    for ell in range(1, MAX_LEVEL + 1):
        if not active.any():
            break
        lo, hi = _boxes_at_level(z0[active], z1[active], theta, ell)
        gamma = bb_interval_prob(lo, hi, z0[active], z1[active], delta)
        hit = u[active] <= gamma
        idx = np.flatnonzero(active.ravel())
        levels.ravel()[idx[hit]] = ell
        active.ravel()[idx[hit]] = False
    if active.any():
        raise SeriesNonConvergence(f"layer level exceeded cap {MAX_LEVEL}")
    lo, hi = _boxes_at_level(z0, z1, theta, levels)
    return BatchLayers(z0, z1, float(t_start), float(t_end), theta, levels, lo, hi)


def box_image_bounds(lam_sqrt: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Axis-aligned bounding box of a whitened box mapped through lam_sqrt."""
    center = 0.5 * (lo + hi)
    radius = 0.5 * (hi - lo)
    c = lam_sqrt @ center
    r = np.abs(lam_sqrt) @ radius
    return np.stack([c - r, c + r], axis=-1)


def layer_from_batch(batch: BatchLayers, i: int, lam_sqrt: np.ndarray | None = None) -> LayerInfo:
    d = batch.z_start.shape[1]
    if lam_sqrt is None:
        lam_sqrt = np.eye(d)
    wbox = np.stack([batch.lo[i], batch.hi[i]], axis=-1)
    obox = box_image_bounds(lam_sqrt, batch.lo[i], batch.hi[i])
    return LayerInfo(
        whitened_box=wbox,
        original_box=obox,
        z_start=batch.z_start[i],
        z_end=batch.z_end[i],
        t_start=batch.t_start,
        t_end=batch.t_end,
        lambda_sqrt=lam_sqrt,
        levels=batch.levels[i],
        theta=batch.theta,
    )


def simulate_layer(
    z_start,
    z_end,
    t_start: float,
    t_end: float,
    rng: np.random.Generator,
    lambda_sqrt: np.ndarray | None = None,
    theta_factor: float | None = None,
) -> LayerInfo:
    """Sample a layer almost surely containing the whitened bridge path."""
    z0 = np.atleast_1d(np.asarray(z_start, float))
    z1 = np.atleast_1d(np.asarray(z_end, float))
    batch = simulate_layers_batch(
        z0[None, :], z1[None, :], t_start, t_end, rng, theta_factor
    )
    return layer_from_batch(batch, 0, lam_sqrt=lambda_sqrt)


def _propose_skeleton(x, y, t0, t1, times, lo, hi, rng):
    """Sequential unconstrained bridge draws; None if any leaves [lo, hi]."""
    pts = []
    left_t, left_x = t0, x
    for q in times:
        w = (q - left_t) / (t1 - left_t)
        mean = left_x + w * (y - left_x)
        var = (q - left_t) * (t1 - q) / (t1 - left_t)
        v = mean + math.sqrt(var) * rng.standard_normal()
        if v < lo or v > hi:
            return None
        pts.append(v)
        left_t, left_x = q, v
    return pts

def _skeleton_containment(x, y, t0, t1, times, pts, lo, hi, delta_floor=0.0):
    """Product of sub-bridge containment probabilities along a skeleton."""
    prob = 1.0
    knots_t = [t0] + list(times) + [t1]
    knots_x = [x] + list(pts) + [y]
    for k in range(len(knots_t) - 1):
        dt = knots_t[k + 1] - knots_t[k]
        if dt <= delta_floor:
            continue
        prob *= bb_interval_prob_scalar(lo, hi, knots_x[k], knots_x[k + 1], dt)
        if prob == 0.0:
            return 0.0
    return prob


REJECTION_BUDGET = 500
GRID_POINTS = 801


def _grid_sample_coord_points(x, y, t0, t1, times, lo, hi, level, theta, rng):
    """Sequential inverse-CDF sampling of skeleton points given the layer.

    At each step the one-dimensional conditional density of the next point is
    the free-bridge Gaussian times the probability that the remaining path
    stays in the outer box but leaves the next-smaller one; that weight is
    evaluated pointwise on a grid from the containment series and inverted
    numerically. Handles deep layers whose conditional events are far too
    rare for rejection.
    """
    has_inner = level >= 2
    if has_inner:
        lo_in, hi_in = lo + theta, hi - theta
    pts = []
    a_out = 1.0  # containment product over committed sub-bridges, outer box
    b_in = 1.0 if has_inner else 0.0  # same for the next-smaller box
    left_t, left_x = t0, x
    for q in times:
        d1, d2 = q - left_t, t1 - q
        span = t1 - left_t
        mean = left_x + (d1 / span) * (y - left_x)
        var = d1 * d2 / span
        v = np.linspace(lo, hi, GRID_POINTS)
        log_g = -0.5 * (v - mean) ** 2 / var
        w = a_out * bb_interval_prob(lo, hi, left_x, v, d1) * bb_interval_prob(
            lo, hi, v, y, d2
        )
        if b_in > 0.0:
            w = w - b_in * bb_interval_prob(
                lo_in, hi_in, left_x, v, d1
            ) * bb_interval_prob(lo_in, hi_in, v, y, d2)
        dens = np.exp(log_g - log_g.max()) * np.clip(w, 0.0, None)
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(v))]
        )
        if cdf[-1] <= 0.0:
            raise SeriesNonConvergence(
                "layer-conditional density has vanishing mass"
            )
        vr = float(np.interp(rng.random() * cdf[-1], cdf, v))
        a_out *= bb_interval_prob_scalar(lo, hi, left_x, vr, d1)
        if b_in > 0.0:
            b_in *= bb_interval_prob_scalar(lo_in, hi_in, left_x, vr, d1)
        pts.append(vr)
        left_t, left_x = q, vr
    return pts


def _sample_coord_points(x, y, t0, t1, times, lo, hi, level, theta, rng, max_tries):
    has_inner = level >= 2
    if has_inner:
        lo_in, hi_in = lo + theta, hi - theta
    budget = min(REJECTION_BUDGET, max_tries) if level <= 2 else 0
    for _ in range(budget):
        pts = _propose_skeleton(x, y, t0, t1, times, lo, hi, rng)
        if pts is None:
            continue
        p_out = _skeleton_containment(x, y, t0, t1, times, pts, lo, hi)
        if rng.random() > p_out:
            continue
        if has_inner and all(lo_in <= v <= hi_in for v in pts):
            p_in = _skeleton_containment(x, y, t0, t1, times, pts, lo_in, hi_in)
            # path must leave the next box down, or it would carry that level
            if p_out > 0.0 and rng.random() < p_in / p_out:
                continue
        return pts
    # rare or rejection-hostile conditioning: exact grid inversion
    return _grid_sample_coord_points(x, y, t0, t1, times, lo, hi, level, theta, rng)


def sample_bridge_points(
    layer: LayerInfo,
    times,
    rng: np.random.Generator,
    max_tries: int = SERIES_CAP,
) -> np.ndarray:
    """Whitened bridge points at `times`, conditioned to stay in the layer box.

    Coordinates are handled independently; within each coordinate the whole
    skeleton is accepted or rejected against the alternating-series crossing
    probabilities so that, marginally over layers, the unconditional bridge
    law is recovered.
    """
    times = list(times)
    d = layer.z_start.shape[0]
    if not times:
        return np.empty((0, d))
    t0, t1 = layer.t_start, layer.t_end
    if any(not (t0 < q < t1) for q in times):
        raise DimensionMismatch("times must lie strictly inside the interval")
    if any(times[k] >= times[k + 1] for k in range(len(times) - 1)):
        raise DimensionMismatch("times must be strictly increasing")
    out = np.empty((len(times), d))
    for k in range(d):
        out[:, k] = _sample_coord_points(
            layer.z_start[k],
            layer.z_end[k],
            t0,
            t1,
            times,
            float(layer.whitened_box[k, 0]),
            float(layer.whitened_box[k, 1]),
            int(layer.levels[k]),
            layer.theta,
            rng,
            max_tries,
        )
    return out


def _sub_bridge_prob_product(a, b, start_v, pts, end_v, tms, t0, t1):
    """Product over sub-bridges of containment probabilities (flat arrays).

    All k+1 segments are evaluated in one flat series call."""
    m, k = pts.shape
    lefts = np.column_stack([start_v, pts])
    rights = np.column_stack([pts, end_v])
    knots = np.column_stack([np.full(m, t0), tms, np.full(m, t1)])
    deltas = np.diff(knots, axis=1)
    seg = _bb_prob_flat(
        np.repeat(a, k + 1),
        np.repeat(b, k + 1),
        lefts.ravel(),
        rights.ravel(),
        deltas.ravel(),
    )
    return seg.reshape(m, k + 1).prod(axis=1)


def sample_points_batch(
    batch: BatchLayers,
    idx: np.ndarray,
    times: np.ndarray,
    rng: np.random.Generator,
    max_rounds: int = 30,
) -> np.ndarray:
    """Layer-conditional skeletons for selected bridges, vectorized.

    times: (M, k) with sorted rows (one shared time grid per bridge). Whole
    skeletons are accepted or rejected elementwise over (bridge, coordinate);
    deep layers and rejection stragglers use the exact grid sampler instead.
    Returns (M, k, d).
    """
    z0 = batch.z_start[idx]
    z1 = batch.z_end[idx]
    lo, hi = batch.lo[idx], batch.hi[idx]
    lev = batch.levels[idx]
    theta = batch.theta
    t0, t1 = batch.t_start, batch.t_end
    m_all, k = times.shape
    d = z0.shape[1]
    out = np.empty((m_all, k, d))
    # rejection is hopeless for deep layers; those go straight to the grid
    unresolved = lev <= 2
    lo_in, hi_in = lo + theta, hi - theta
    for _ in range(max_rounds):
        rows, cols = np.nonzero(unresolved)
        m = rows.size
        if m == 0:
            break
        a, b = lo[rows, cols], hi[rows, cols]
        zl, zr = z0[rows, cols], z1[rows, cols]
        tms = times[rows]
        pts = np.empty((m, k))
        ok = np.ones(m, dtype=bool)
        left_t = np.full(m, t0)
        left_v = zl
        for j in range(k):
            tj = tms[:, j]
            w = (tj - left_t) / (t1 - left_t)
            var = (tj - left_t) * (t1 - tj) / (t1 - left_t)
            v = left_v + w * (zr - left_v) + np.sqrt(var) * rng.standard_normal(m)
            pts[:, j] = v
            ok &= (v >= a) & (v <= b)
            left_t, left_v = tj, v
        sel = np.flatnonzero(ok)
        if sel.size == 0:
            continue
        p_out = _sub_bridge_prob_product(
            a[sel], b[sel], zl[sel], pts[sel], zr[sel], tms[sel], t0, t1
        )
        acc_sel = rng.random(sel.size) <= p_out
        deep_sel = (lev[rows, cols][sel] >= 2) & acc_sel
        if deep_sel.any():
            sub = np.flatnonzero(deep_sel)
            gsel = sel[sub]
            ai, bi = lo_in[rows, cols][gsel], hi_in[rows, cols][gsel]
            inner_ok = (
                (pts[gsel] >= ai[:, None]) & (pts[gsel] <= bi[:, None])
            ).all(axis=1)
            if inner_ok.any():
                ssub = sub[inner_ok]
                gsub = sel[ssub]
                p_in = _sub_bridge_prob_product(
                    lo_in[rows, cols][gsub],
                    hi_in[rows, cols][gsub],
                    zl[gsub],
                    pts[gsub],
                    zr[gsub],
                    tms[gsub],
                    t0,
                    t1,
                )
                stay = rng.random(gsub.size) < p_in / np.maximum(
                    p_out[ssub], 1e-300
                )
                acc_sel[ssub[stay]] = False
        acc = sel[acc_sel]
        out[rows[acc], :, cols[acc]] = pts[acc]
        unresolved[rows[acc], cols[acc]] = False
    unresolved |= lev >= 3
    rows, cols = np.nonzero(unresolved)
    for r, c in zip(rows, cols):
        out[r, :, c] = _grid_sample_coord_points(
            z0[r, c],
            z1[r, c],
            t0,
            t1,
            list(times[r]),
            float(lo[r, c]),
            float(hi[r, c]),
            int(lev[r, c]),
            theta,
            rng,
        )
    return out


def unwhiten(layer: LayerInfo, z: np.ndarray) -> np.ndarray:
    """Map whitened points back to original coordinates via lambda_sqrt."""
    z = np.asarray(z, float)
    d = layer.lambda_sqrt.shape[0]
    if z.shape[-1] != d:
        raise DimensionMismatch(f"point dim {z.shape[-1]} vs layer dim {d}")
    return z @ layer.lambda_sqrt.T
