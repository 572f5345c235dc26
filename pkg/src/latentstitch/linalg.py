"""Dense symmetric linear-algebra kernels: SPD solves, symmetric
eigendecomposition and PSD matrix square roots.

All routines compute in float64 regardless of input dtype and are pure
functions of their inputs. Failures surface as NotSPD / NotPSD /
NoConvergence instead of raw LAPACK errors, so callers can react (typically
by adding a ridge term).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NoConvergence, NotPSD, NotSPD

# Inputs are required to be symmetric to this relative (max-abs) tolerance.
SYMMETRY_RTOL = 1e-9

# Eigenvalues of a nominally-PSD matrix may be negative up to this fraction
# of the largest eigenvalue; such values are clamped to zero, anything more
# negative raises NotPSD.
NEG_EIG_RTOL = 1e-6


@dataclass
class SymEig:
    """Eigendecomposition of a symmetric matrix.

    eigenvalues are ascending; eigenvectors are orthonormal columns, so
    ``V @ diag(w) @ V.T`` reconstructs the input.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _as_square(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be square and non-empty, got shape {a.shape}")
    return a


def _require_symmetric(a: np.ndarray, name: str) -> None:
    scale = np.abs(a).max()
    if scale == 0.0:
        return
    skew = np.abs(a - a.T).max()
    if skew > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric: relative skew {skew / scale:.3e}")


def spd_solve(a, b) -> np.ndarray:
    """Solve ``A @ X = B`` for symmetric positive-definite A via Cholesky.

    Raises NotSPD when factorization hits a non-positive pivot (the signal
    that the caller should regularize and retry).
    """
    a = _as_square(a, "A")
    _require_symmetric(a, "A")
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"A is {a.shape[0]}x{a.shape[0]} but B has {b.shape[0]} rows")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotSPD(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def sym_eig(s) -> SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    s = _as_square(s, "S")
    _require_symmetric(s, "S")
    try:
        w, v = np.linalg.eigh(s)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return SymEig(eigenvalues=w, eigenvectors=v)


def psd_sqrt(s) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Small negative eigenvalues (within NEG_EIG_RTOL of the top eigenvalue)
    are clamped to zero: empirical covariance products are only numerically
    PSD. Larger negative eigenvalues raise NotPSD.
    """
    eig = sym_eig(s)
    w = eig.eigenvalues
    lam_max = max(float(w[-1]), 0.0)
    if w[0] < -NEG_EIG_RTOL * lam_max:
        raise NotPSD(
            f"eigenvalue {w[0]:.6e} is below -{NEG_EIG_RTOL:.0e} * max eigenvalue {lam_max:.6e}"
        )
    v = eig.eigenvectors
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return (root + root.T) / 2.0
