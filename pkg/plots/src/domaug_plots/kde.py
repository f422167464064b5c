"""Kernel density estimation and the domain-overlap statistic.

Densities use Gaussian KDE with Scott's rule bandwidth (factor n^(-1/(d+4)),
so n^(-1/6) for the 2-d projections rendered here). The overlap of two
domains is the integral over a shared grid of the pointwise minimum of their
densities: 1 for identical samples, 0 for disjoint supports.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import gaussian_kde

from .io import PlotsError

GRID_SIZE = 200
PAD_SIGMAS = 4.0  # grid margin beyond the data range, in KDE bandwidths


def scott_factor(n: int, d: int = 2) -> float:
    """Scott's rule bandwidth factor for n points in d dimensions."""
    return float(n) ** (-1.0 / (d + 4))


def _fit_kde(points: np.ndarray) -> gaussian_kde:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise PlotsError(f"kde expects an (n, 2) point cloud, got shape {points.shape}")
    if points.shape[0] < 3:
        raise PlotsError(f"kde needs at least 3 points, got {points.shape[0]}")
    try:
        return gaussian_kde(points.T)  # scipy's default bw_method is Scott's rule
    except np.linalg.LinAlgError as exc:
        raise PlotsError(f"degenerate point cloud for kde: {exc}") from exc


def _shared_grid(kdes: list[gaussian_kde], clouds: list[np.ndarray], gridsize: int):
    stacked = np.vstack(clouds)
    pad = PAD_SIGMAS * max(float(np.sqrt(np.diag(k.covariance)).max()) for k in kdes)
    lo = stacked.min(axis=0) - pad
    hi = stacked.max(axis=0) + pad
    xs = np.linspace(lo[0], hi[0], gridsize)
    ys = np.linspace(lo[1], hi[1], gridsize)
    return xs, ys


def _evaluate(kde: gaussian_kde, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    grid_x, grid_y = np.meshgrid(xs, ys)
    values = kde(np.vstack([grid_x.ravel(), grid_y.ravel()]))
    return values.reshape(grid_y.shape)


def _integrate(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> float:
    return float(np.trapezoid(np.trapezoid(values, xs, axis=1), ys))


def overlap_statistic(a: np.ndarray, b: np.ndarray, gridsize: int = GRID_SIZE) -> float:
    """Integrated pointwise minimum of the two KDE densities, in [0, 1]."""
    kde_a = _fit_kde(a)
    kde_b = _fit_kde(b)
    xs, ys = _shared_grid([kde_a, kde_b], [np.asarray(a), np.asarray(b)], gridsize)
    dens_a = _evaluate(kde_a, xs, ys)
    dens_b = _evaluate(kde_b, xs, ys)
    return _integrate(np.minimum(dens_a, dens_b), xs, ys)


def mean_pairwise_overlap(groups: dict[int, np.ndarray], gridsize: int = GRID_SIZE) -> float:
    """Mean overlap over all unordered domain pairs; the pairwise value for 2."""
    ids = sorted(groups)
    if len(ids) < 2:
        raise PlotsError("overlap needs at least two domains")
    values = []
    for i, e in enumerate(ids):
        for f in ids[i + 1 :]:
            values.append(overlap_statistic(groups[e], groups[f], gridsize))
    return float(np.mean(values))


def density_contours(
    groups: dict[int, np.ndarray], gridsize: int = GRID_SIZE
) -> tuple[np.ndarray, np.ndarray, dict[int, np.ndarray]]:
    """Per-domain densities on one shared grid, for contour plotting."""
    ids = sorted(groups)
    kdes = {e: _fit_kde(groups[e]) for e in ids}
    xs, ys = _shared_grid(
        [kdes[e] for e in ids], [np.asarray(groups[e]) for e in ids], gridsize
    )
    return xs, ys, {e: _evaluate(kdes[e], xs, ys) for e in ids}
