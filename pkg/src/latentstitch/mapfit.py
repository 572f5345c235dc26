"""Affine stitching maps between latent spaces.

Closed-form OLS and ridge fits via centered normal equations, map
application, latent-space MSE, the default ridge strengths for the standard
model roster, and the LMAP binary serialization.

The ridge objective is ``||Y - X W^T - 1 b^T||_F^2 + alpha ||W||_F^2`` with
an unpenalized intercept and no 1/n factor, solved on column-centered data;
one factorization of (Xc^T Xc + alpha I) is shared across all output
columns.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptySet,
    NotSPD,
    TruncatedFile,
    VersionUnsupported,
)

LMAP_MAGIC = b"LMAP"
LMAP_VERSION = 1


@dataclass
class LinearMap:
    """Affine map x -> W x + b from one latent space to another."""

    source_model: str
    target_model: str
    W: np.ndarray
    b: np.ndarray
    alpha: float = 0.0

    def __post_init__(self) -> None:
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionMismatch(
                f"W shape {self.W.shape} incompatible with b shape {self.b.shape}"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise DimensionMismatch("map parameters must be finite")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @property
    def d_in(self) -> int:
        return self.W.shape[1]

    @property
    def d_out(self) -> int:
        return self.W.shape[0]


@dataclass
class AlphaRegistry:
    """Ridge strength per ordered (source, target) pair; unlisted pairs are 0."""

    entries: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for pair, alpha in self.entries.items():
            if alpha < 0:
                raise ValueError(f"alpha for {pair} must be >= 0")

    def lookup(self, source_model: str, target_model: str) -> float:
        return self.entries.get((source_model, target_model), 0.0)


def default_alphas() -> AlphaRegistry:
    """Ridge strengths for the standard roster; maps from the NF and DM
    latent spaces are regularized, everything else is unregularized."""
    return AlphaRegistry(
        entries={
            ("DM", "GAN"): 2000.0,
            ("DM", "VAE"): 100.0,
            ("DM", "VQVAE"): 5000.0,
            ("DM", "NF"): 5000.0,
            ("NF", "GAN"): 50000.0,
            ("NF", "VAE"): 5000.0,
            ("NF", "VQVAE"): 50000.0,
            ("NF", "DM"): 50000.0,
        }
    )


def _fit_affine(X, Y, alpha: float, svd_fallback: bool) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise DimensionMismatch("X and Y must be 2-D")
    if X.shape[0] != Y.shape[0] or X.shape[0] < 1:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean
    gram = Xc.T @ Xc
    if alpha > 0:
        gram[np.diag_indices_from(gram)] += alpha
    rhs = Xc.T @ Yc
    try:
        wt = linalg.spd_solve(gram, rhs)
    except NotSPD:
        if alpha == 0.0 and svd_fallback:
            wt, *_ = np.linalg.lstsq(Xc, Yc, rcond=None)
        else:
            raise
    W = np.ascontiguousarray(wt.T)
    b = y_mean - W @ x_mean
    return W, b


def fit_ols(
    X, Y, source_model: str = "", target_model: str = "", svd_fallback: bool = False
) -> LinearMap:
    """Least-squares affine fit of Y from X via centered normal equations.

    Raises NotSPD on a rank-deficient design; pass svd_fallback=True to fall
    back to the minimum-norm SVD solution instead (the pipeline does this
    for unregularized fits).
    """
    W, b = _fit_affine(X, Y, alpha=0.0, svd_fallback=svd_fallback)
    return LinearMap(source_model=source_model, target_model=target_model, W=W, b=b, alpha=0.0)


def fit_ridge(X, Y, alpha: float, source_model: str = "", target_model: str = "") -> LinearMap:
    """Ridge affine fit; alpha=0 reproduces fit_ols exactly."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    W, b = _fit_affine(X, Y, alpha=float(alpha), svd_fallback=False)
    return LinearMap(
        source_model=source_model, target_model=target_model, W=W, b=b, alpha=float(alpha)
    )


def apply_map(m: LinearMap, X) -> np.ndarray:
    """Map rows of X through the affine map: X W^T + 1 b^T."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.d_in:
        raise DimensionMismatch(f"X shape {X.shape} incompatible with map d_in={m.d_in}")
    return X @ m.W.T + m.b


def latent_mse(predicted, target) -> float:
    """Mean over all n*d entries of the squared difference."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionMismatch(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise EmptySet("no entries to average")
    return float(np.mean((p - t) ** 2))


# --- LMAP serialization -----------------------------------------------------


def save_map(m: LinearMap, path) -> None:
    with open(path, "wb") as f:
        f.write(LMAP_MAGIC)
        f.write(struct.pack("<I", LMAP_VERSION))
        for s in (m.source_model, m.target_model):
            raw = s.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        f.write(struct.pack("<dII", m.alpha, m.d_in, m.d_out))
        f.write(m.b.astype("<f8").tobytes())
        f.write(np.ascontiguousarray(m.W, dtype="<f8").tobytes())


def load_map(path) -> LinearMap:
    def read_exact(f, size):
        out = f.read(size)
        if len(out) != size:
            raise TruncatedFile(f"{path}: expected {size} bytes, got {len(out)}")
        return out

    with open(path, "rb") as f:
        magic = read_exact(f, 4)
        if magic != LMAP_MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", read_exact(f, 4))
        if version != LMAP_VERSION:
            raise VersionUnsupported(f"{path}: LMAP version {version} not supported")
        names = []
        for _ in range(2):
            (length,) = struct.unpack("<H", read_exact(f, 2))
            names.append(read_exact(f, length).decode("utf-8"))
        alpha, d_in, d_out = struct.unpack("<dII", read_exact(f, 16))
        b = np.frombuffer(read_exact(f, 8 * d_out), dtype="<f8")
        W = np.frombuffer(read_exact(f, 8 * d_out * d_in), dtype="<f8").reshape(d_out, d_in)
    return LinearMap(source_model=names[0], target_model=names[1], W=W, b=b, alpha=alpha)
