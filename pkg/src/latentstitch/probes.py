"""Lasso linear probes for binary attributes on latent spaces.

Probes are lasso *regressors* on {0,1}-coded labels, thresholded at 0.5
(ties classify as 1). Training sets are class-balanced by the
80%-of-minimum rule; evaluation uses balanced holdouts. Cross-space
agreement is measured as a match percentage and a signed accuracy delta.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import AttributeTable, stable_id_hash
from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptySet,
    NoConvergence,
    SingleClassPool,
    TruncatedFile,
    VersionUnsupported,
    ZeroBaseline,
)

LPRB_MAGIC = b"LPRB"
LPRB_VERSION = 1

#: Default lasso strength per latent space of the standard roster.
DEFAULT_PROBE_ALPHAS = {"VAE": 0.005, "VQVAE": 0.005, "DM": 0.02, "NF": 0.1}

#: Fallback strength for latent spaces not in the roster.
FALLBACK_PROBE_ALPHA = 0.01


@dataclass
class Probe:
    """Sparse linear classifier for one binary attribute on one latent space."""

    attribute: str
    model_id: str
    w: np.ndarray
    b: float
    alpha: float
    threshold: float = 0.5

    def __post_init__(self) -> None:
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.b = float(self.b)
        if self.w.ndim != 1:
            raise DimensionMismatch(f"w must be 1-D, got shape {self.w.shape}")
        if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
            raise DimensionMismatch("probe parameters must be finite")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @property
    def d(self) -> int:
        return self.w.shape[0]


@dataclass
class BalancedSubset:
    """Equal-sized positive/negative id lists drawn from one pool."""

    pos_ids: list[str]
    neg_ids: list[str]
    per_class: int

    def __post_init__(self) -> None:
        if len(self.pos_ids) != self.per_class or len(self.neg_ids) != self.per_class:
            raise DimensionMismatch("pos/neg id lists must both have per_class entries")
        if set(self.pos_ids) & set(self.neg_ids):
            raise DimensionMismatch("positive and negative ids must be disjoint")

    @property
    def ids(self) -> list[str]:
        return self.pos_ids + self.neg_ids

    def labels(self) -> np.ndarray:
        """{0,1} labels aligned with `ids` (positives first)."""
        return np.concatenate(
            [np.ones(self.per_class, dtype=np.int8), np.zeros(self.per_class, dtype=np.int8)]
        )


def balanced_subset(
    table: AttributeTable,
    attribute: str,
    pool_ids: Sequence[str],
    seed: int,
    per_class: int | None = None,
) -> BalancedSubset:
    """Draw a class-balanced id subset for one attribute.

    By default per_class is floor(0.8 * min(#pos, #neg)) within the pool;
    an explicit per_class is capped at the available minimum. Sampling is
    uniform without replacement, deterministic given the seed, and invariant
    to the order of pool_ids.
    """
    value_by_id = dict(zip(table.ids, table.column(attribute)))
    pool = [sid for sid in pool_ids if sid in value_by_id]
    pos = sorted(sid for sid in pool if value_by_id[sid] == 1)
    neg = sorted(sid for sid in pool if value_by_id[sid] == -1)
    if not pos or not neg:
        raise SingleClassPool(
            f"attribute {attribute!r}: pool has {len(pos)} positive / {len(neg)} negative"
        )
    smaller = min(len(pos), len(neg))
    if per_class is None:
        per_class = 4 * smaller // 5
        if per_class < 1:
            raise SingleClassPool(
                f"attribute {attribute!r}: 80% rule leaves no training examples"
            )
    else:
        per_class = min(per_class, smaller)
    rng = np.random.default_rng([seed, stable_id_hash(attribute)])
    pos_pick = sorted(rng.choice(len(pos), size=per_class, replace=False).tolist())
    neg_pick = sorted(rng.choice(len(neg), size=per_class, replace=False).tolist())
    return BalancedSubset(
        pos_ids=[pos[i] for i in pos_pick],
        neg_ids=[neg[i] for i in neg_pick],
        per_class=per_class,
    )


def _soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def _kkt_violation(Xc: np.ndarray, r: np.ndarray, w: np.ndarray, alpha: float) -> float:
    """Max violation of the lasso stationarity conditions at (w, residual r)."""
    n = Xc.shape[0]
    corr = Xc.T @ r / n
    active = w != 0.0
    viol_active = np.abs(corr[active] - alpha * np.sign(w[active]))
    viol_zero = np.abs(corr[~active]) - alpha
    worst = 0.0
    if viol_active.size:
        worst = float(viol_active.max())
    if viol_zero.size:
        worst = max(worst, float(viol_zero.max()))
    return max(worst, 0.0)


def _duality_gap(Xc: np.ndarray, yc: np.ndarray, w: np.ndarray, alpha: float) -> float:
    n = len(yc)
    r = yc - Xc @ w
    primal = 0.5 * (r @ r) / n + alpha * np.abs(w).sum()
    if alpha == 0.0:
        return primal
    dual_inf = np.abs(Xc.T @ r).max() / n
    scale = 1.0 if dual_inf <= alpha else alpha / dual_inf
    theta = scale * r / n
    dual = yc @ theta - 0.5 * n * (theta @ theta)
    return float(primal - dual)


def lasso_cd(
    X,
    y,
    alpha: float,
    tol: float = 1e-6,
    max_iter: int = 10000,
    record_objective: bool = False,
):
    """Cyclic coordinate descent for (1/2n)||y - Xw - b1||^2 + alpha ||w||_1.

    The intercept is unpenalized and handled by centering. Zero-variance
    features are skipped (their weight stays 0). Terminates once the KKT
    subgradient conditions hold within 10*tol (checked once per sweep, and
    comparable in scale to a max-coordinate-update test of tol on
    well-conditioned data); raises NoConvergence after max_iter sweeps.

    Returns (w, b, n_sweeps, objectives) where objectives is the per-sweep
    objective trace when record_objective is set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise DimensionMismatch(f"X shape {X.shape} incompatible with y length {y.shape}")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    n, d = X.shape
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = np.asfortranarray(X - x_mean)  # column slices must be contiguous
    yc = y - y_mean
    col_ms = np.einsum("ij,ij->j", Xc, Xc) / n
    cols = np.nonzero(col_ms > 0.0)[0]
    w = np.zeros(d)
    r = yc.copy()
    max_step = math.inf
    objectives: list[float] = []
    for sweep in range(1, max_iter + 1):
        max_step = 0.0
        for j in cols:
            wj = w[j]
            rho = Xc[:, j] @ r / n + col_ms[j] * wj
            wj_new = _soft_threshold(rho, alpha) / col_ms[j]
            if wj_new != wj:
                r += Xc[:, j] * (wj - wj_new)
                w[j] = wj_new
                step = abs(wj_new - wj)
                if step > max_step:
                    max_step = step
        if record_objective:
            objectives.append(0.5 * (r @ r) / n + alpha * float(np.abs(w).sum()))
        # KKT is the binding exit condition: on ill-conditioned designs the
        # fit settles long before the weights stop sloshing between
        # near-collinear columns, so a small max_step neither implies nor is
        # implied by optimality.
        if _kkt_violation(Xc, r, w, alpha) <= 10.0 * tol:
            return w, float(y_mean - x_mean @ w), sweep, objectives
    gap = _duality_gap(Xc, yc, w, alpha)
    raise NoConvergence(
        f"lasso did not converge in {max_iter} sweeps "
        f"(duality gap {gap:.6e}, last max step {max_step:.3e})"
    )


def fit_lasso(
    X,
    y,
    alpha: float,
    tol: float = 1e-6,
    max_iter: int = 10000,
    attribute: str = "",
    model_id: str = "",
    standardize: bool = False,
) -> Probe:
    """Fit a lasso probe; y is the regression target ({0,1} labels in probe use).

    With standardize=True the fit runs on unit-variance columns and the
    weights are mapped back to raw feature scale, so predict() always
    consumes raw latents; the stored alpha then refers to the standardized
    design.
    """
    X = np.asarray(X, dtype=np.float64)
    if standardize:
        sd = X.std(axis=0)
        sd[sd == 0.0] = 1.0
        w_s, b, _, _ = lasso_cd(X / sd, y, alpha, tol=tol, max_iter=max_iter)
        w = w_s / sd
    else:
        w, b, _, _ = lasso_cd(X, y, alpha, tol=tol, max_iter=max_iter)
    return Probe(attribute=attribute, model_id=model_id, w=w, b=b, alpha=float(alpha))


def predict(probe: Probe, X) -> np.ndarray:
    """{0,1} labels; 1 iff the probe score reaches the threshold."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != probe.d:
        raise DimensionMismatch(f"X shape {X.shape} incompatible with probe d={probe.d}")
    scores = X @ probe.w + probe.b
    return (scores >= probe.threshold).astype(np.int8)


def accuracy(probe: Probe, X, y) -> float:
    y = np.asarray(y).ravel()
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if y.size == 0:
        raise EmptySet("no samples to score")
    return float(np.mean(predict(probe, X) == y))


def match_percent(probe: Probe, X_native, X_mapped) -> float:
    """Percentage of row-aligned samples where the probe predicts the same
    label on native and mapped latents."""
    a = predict(probe, X_native)
    b = predict(probe, X_mapped)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape[0]} native rows vs {b.shape[0]} mapped rows")
    if a.size == 0:
        raise EmptySet("no samples to compare")
    return float(100.0 * np.mean(a == b))


def accuracy_delta(acc_native: float, acc_mapped: float) -> float:
    """Signed percent change in accuracy relative to the native baseline."""
    if acc_native <= 0.0:
        raise ZeroBaseline("native accuracy must be positive")
    return float(100.0 * (acc_mapped - acc_native) / acc_native)


# --- serialization and reports ----------------------------------------------


def save_probe(probe: Probe, path) -> None:
    with open(path, "wb") as f:
        f.write(LPRB_MAGIC)
        f.write(struct.pack("<I", LPRB_VERSION))
        for s in (probe.attribute, probe.model_id):
            raw = s.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        f.write(struct.pack("<ddI", probe.alpha, probe.threshold, probe.d))
        f.write(struct.pack("<d", probe.b))
        f.write(probe.w.astype("<f8").tobytes())


def load_probe(path) -> Probe:
    def read_exact(f, size):
        out = f.read(size)
        if len(out) != size:
            raise TruncatedFile(f"{path}: expected {size} bytes, got {len(out)}")
        return out

    with open(path, "rb") as f:
        magic = read_exact(f, 4)
        if magic != LPRB_MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", read_exact(f, 4))
        if version != LPRB_VERSION:
            raise VersionUnsupported(f"{path}: LPRB version {version} not supported")
        names = []
        for _ in range(2):
            (length,) = struct.unpack("<H", read_exact(f, 2))
            names.append(read_exact(f, length).decode("utf-8"))
        alpha, threshold, d = struct.unpack("<ddI", read_exact(f, 20))
        (b,) = struct.unpack("<d", read_exact(f, 8))
        w = np.frombuffer(read_exact(f, 8 * d), dtype="<f8")
    return Probe(attribute=names[0], model_id=names[1], w=w, b=b, alpha=alpha, threshold=threshold)


def write_probe_report(rows: Sequence[dict], path) -> None:
    """CSV report: one row per (model, attribute) probe."""
    fields = ["model", "attribute", "alpha", "train_n_per_class", "holdout_accuracy"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            out["alpha"] = format(float(row["alpha"]), ".9g")
            out["holdout_accuracy"] = format(float(row["holdout_accuracy"]), ".9g")
            writer.writerow(out)
