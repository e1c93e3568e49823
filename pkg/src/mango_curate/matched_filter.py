"""Background statistics and the covariance-whitened matched filter.

For a background with mean ``mu`` and covariance ``G`` and a target
spectrum ``s`` the response at pixel ``x`` is::

    D(x) = s' G^-1 (x - mu) / sqrt(s' G^-1 s)

which has unit variance over the background the statistics came from.
``G`` is factorised once (Cholesky) and never inverted explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, ndimage

from .errors import BackgroundError, SignatureError
from .raster import UNDEFINED, AnnualMask, DetectionMap, Method, Scene, class_masks

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True, eq=False)
class BackgroundStats:
    mean: np.ndarray
    covariance: np.ndarray  # regularised
    sample_count: int
    regularization_epsilon: float
    factor: tuple  # scipy cho_factor output for ``covariance``

    @property
    def bands(self) -> int:
        return self.mean.size

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.factor, rhs)


def estimate_background(samples: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> BackgroundStats:
    """Mean and population covariance of ``samples`` (n x B), ridge-regularised.

    The ridge is ``epsilon * trace(G) / B`` on the diagonal so that it
    scales with the data.
    """
    X = np.asarray(samples, dtype=np.float64)
    n, b = X.shape
    if n <= b:
        raise BackgroundError(f"insufficient background: {n} pixels for {b} bands")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    mu = X.mean(axis=0)
    Xc = X - mu
    cov = (Xc.T @ Xc) / n
    cov = 0.5 * (cov + cov.T)
    tr = float(np.trace(cov))
    if not tr > 0.0:
        raise BackgroundError("degenerate background: zero variance in every band")
    if epsilon:
        cov = cov + (epsilon * tr / b) * np.eye(b)
    try:
        factor = linalg.cho_factor(cov, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise BackgroundError("degenerate background: covariance not positive definite") from exc
    return BackgroundStats(mu, cov, n, float(epsilon), factor)


def background_set(mask: AnnualMask, valid: np.ndarray, exclusion_radius: int = 0) -> np.ndarray:
    """Valid non-mangrove pixels, optionally minus a buffer around the mask."""
    _, bg = class_masks(mask, valid)
    if exclusion_radius > 0:
        side = 2 * exclusion_radius + 1
        grown = ndimage.binary_dilation(mask.grid, structure=np.ones((side, side), bool))
        bg &= ~grown
    return bg


def background_stats(
    scene: Scene,
    mask: AnnualMask,
    valid: np.ndarray | None = None,
    epsilon: float = DEFAULT_EPSILON,
    exclusion_radius: int = 0,
) -> BackgroundStats:
    valid = scene.valid if valid is None else valid
    bg = background_set(mask, valid, exclusion_radius)
    return estimate_background(scene.pixels[bg], epsilon)


def filter_weights(stats: BackgroundStats, target: np.ndarray) -> np.ndarray:
    """Weight vector ``G^-1 s / sqrt(s' G^-1 s)``."""
    s = np.asarray(target, dtype=np.float64)
    if s.shape != stats.mean.shape:
        raise SignatureError(f"signature has {s.size} bands, background has {stats.bands}")
    if not np.all(np.isfinite(s)):
        raise SignatureError("degenerate signature: non-finite values")
    g = stats.solve(s)
    energy = float(s @ g)
    if not energy > 0.0 or not np.isfinite(energy):
        raise SignatureError("degenerate signature: zero whitened norm")
    return g / np.sqrt(energy)


def detect(scene: Scene, stats: BackgroundStats, target: np.ndarray) -> DetectionMap:
    w = filter_weights(stats, target)
    out = np.full(scene.shape, UNDEFINED, dtype=np.float64)
    X = np.asarray(scene.pixels[scene.valid], dtype=np.float64)
    out[scene.valid] = (X - stats.mean) @ w
    return DetectionMap(out, Method.MATCHED_FILTER)
