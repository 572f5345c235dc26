"""Reconstruction-based similarity metrics.

Pixel-space RMSE and the Frechet distance between Gaussian fits of two
feature sets. The Frechet computation consumes generic feature vectors;
flattened raw pixels are a legitimate degenerate choice ("pixel-FID") when
no embedding network is in play.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ImageDataset
from .errors import DimensionMismatch, NotPSD, TooFewSamples
from .linalg import psd_sqrt

#: Ridge fraction (of the mean covariance diagonal) applied when a summary
#: was estimated from fewer samples than dimensions.
RIDGE_SCALE = 1e-6

#: Results above this negative floor are treated as numerical zero.
NEGATIVE_FLOOR = -1e-6


@dataclass
class GaussianSummary:
    """Mean and unbiased covariance of one feature set."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int | None = None  # sample count when known; drives the n < d ridge rule

    def __post_init__(self) -> None:
        self.mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        self.sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        d = self.mu.shape[0]
        if self.mu.ndim != 1 or self.sigma.shape != (d, d):
            raise DimensionMismatch(
                f"mu shape {self.mu.shape} incompatible with sigma shape {self.sigma.shape}"
            )
        scale = np.abs(self.sigma).max()
        if scale > 0 and np.abs(self.sigma - self.sigma.T).max() > 1e-10 * scale:
            raise DimensionMismatch("sigma must be symmetric within 1e-10 relative")
        if np.any(np.diag(self.sigma) < 0):
            raise DimensionMismatch("sigma diagonal must be non-negative")

    @property
    def d(self) -> int:
        return self.mu.shape[0]


def _rows(a) -> np.ndarray:
    pixels = a.pixels if isinstance(a, ImageDataset) else np.asarray(a)
    out = np.asarray(pixels, dtype=np.float64)
    return out.reshape(1, -1) if out.ndim == 1 else out


def pixel_rmse(a, b) -> float:
    """Root mean squared pixel difference over all samples and channels."""
    x = _rows(a)
    y = _rows(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def summarize(features) -> GaussianSummary:
    """Column means and unbiased (n-1 divisor) covariance of a feature set."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise DimensionMismatch(f"features must be 2-D, got shape {f.shape}")
    n = f.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples for a covariance, got {n}")
    mu = f.mean(axis=0)
    centered = f - mu
    sigma = centered.T @ centered / (n - 1)
    sigma = (sigma + sigma.T) / 2.0
    return GaussianSummary(mu=mu, sigma=sigma, n=n)


def fid(p: GaussianSummary, q: GaussianSummary) -> float:
    """Frechet distance between two Gaussian summaries.

    ||mu_p - mu_q||^2 + tr(S_p + S_q - 2 (S_p^{1/2} S_q S_p^{1/2})^{1/2}),
    with the trace term kept symmetric so only symmetric eigensolves are
    needed. When either summary comes from fewer samples than dimensions a
    small ridge is added to both covariances.
    """
    if p.d != q.d:
        raise DimensionMismatch(f"dimension mismatch: {p.d} vs {q.d}")
    sp = p.sigma
    sq = q.sigma
    rank_deficient = (p.n is not None and p.n < p.d) or (q.n is not None and q.n < q.d)
    if rank_deficient:
        eye = np.eye(p.d)
        sp = sp + (RIDGE_SCALE * np.trace(sp) / p.d) * eye
        sq = sq + (RIDGE_SCALE * np.trace(sq) / q.d) * eye
    root_p = psd_sqrt(sp)
    inner = root_p @ sq @ root_p
    inner = (inner + inner.T) / 2.0
    cross = psd_sqrt(inner)
    diff = p.mu - q.mu
    value = float(diff @ diff + np.trace(sp) + np.trace(sq) - 2.0 * np.trace(cross))
    scale = max(1.0, abs(np.trace(sp)) + abs(np.trace(sq)) + float(diff @ diff))
    if value < NEGATIVE_FLOOR * scale:
        raise NotPSD(f"Frechet distance came out at {value:.6e}, beyond the numerical floor")
    return max(value, 0.0)
