"""Feature preprocessing and class-conditional Gaussian statistics.

Global centering uses the training mean only; test features are centered
with the same vector, never their own. The shared covariance is a
Ledoit-Wolf shrinkage estimate toward the scaled identity, fitted on
per-class residuals in normalized space.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .checkpoint import read_checkpoint, write_checkpoint

ZERO_NORM_TOL = 1e-12
PRECISION_FLOOR = 1e-6


@dataclass
class Preprocessor:
    """Holds the global training mean used for centering."""

    mu_global: np.ndarray

    def __post_init__(self):
        self.mu_global = np.asarray(self.mu_global, dtype=np.float64)
        if not np.all(np.isfinite(self.mu_global)):
            raise ValueError("non-finite mean")


@dataclass
class ClassStats:
    """Per-class means plus the shared shrinkage covariance and its inverse."""

    class_means: np.ndarray
    counts: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    shrinkage_lambda: float

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]


def fit_center(train_features: np.ndarray) -> Preprocessor:
    """Arithmetic mean over rows, accumulated in float64 in row order."""
    x = np.asarray(train_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need at least one training row")
    return Preprocessor(mu_global=x.mean(axis=0))


def center_normalize(features: np.ndarray, prep: Preprocessor) -> np.ndarray:
    """Center with the training mean, then scale each row to unit length.

    A row whose centered norm falls below 1e-12 becomes the zero vector
    rather than an error: out-of-distribution inputs may coincide with the
    mean and still need a score.
    """
    x = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite features")
    centered = x - prep.mu_global
    norms = np.linalg.norm(centered, axis=1, keepdims=True)
    safe = np.where(norms < ZERO_NORM_TOL, 1.0, norms)
    out = centered / safe
    out[norms[:, 0] < ZERO_NORM_TOL] = 0.0
    return out


def class_means(normalized: np.ndarray, labels: np.ndarray, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class arithmetic means in normalized space, plus class counts."""
    x = np.asarray(normalized, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.min(initial=0) < 0 or y.max(initial=-1) >= num_classes:
        raise ValueError(f"labels must lie in 0..{num_classes - 1}")
    counts = np.bincount(y, minlength=num_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"class {int(empty[0])} has no samples")
    means = np.zeros((num_classes, x.shape[1]))
    np.add.at(means, y, x)
    return means / counts[:, None], counts


def ledoit_wolf(residuals: np.ndarray) -> tuple[np.ndarray, float]:
    """Shrinkage covariance of residual rows toward the scaled identity.

    With S = R^T R / N (residuals are already class-centered, so no further
    mean removal) and target m*I for m = tr(S)/d:

        delta2 = ||S - m*I||_F^2
        beta2  = min(delta2, (1/N^2) * sum_i ||r_i r_i^T - S||_F^2)
        lam    = beta2 / delta2, clamped to [0, 1]
        Sigma  = (1 - lam) * S + lam * m * I

    The per-row sum collapses algebraically to sum_i ||r_i||^4 - N*||S||_F^2,
    which is what gets computed here; the test oracle evaluates the literal
    outer-product form. All-zero residuals degenerate to (1e-6 * I, lam=1);
    delta2 = 0 means S already equals its target, so lam = 0 and Sigma = S.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] < 2:
        raise ValueError("need at least 2 residual rows")
    n, d = r.shape

    if not r.any():
        return PRECISION_FLOOR * np.eye(d), 1.0

    s = r.T @ r / n
    s = (s + s.T) / 2.0
    m = np.trace(s) / d
    delta2 = float(np.sum((s - m * np.eye(d)) ** 2))
    if delta2 <= 0.0:
        return s, 0.0

    sq_norms = np.einsum("ij,ij->i", r, r)
    beta2_raw = (np.sum(sq_norms**2) - n * float(np.sum(s**2))) / n**2
    lam = min(1.0, max(0.0, min(delta2, beta2_raw) / delta2))

    sigma = (1.0 - lam) * s + lam * m * np.eye(d)
    return (sigma + sigma.T) / 2.0, lam


def precision(sigma: np.ndarray, floor: float = PRECISION_FLOOR) -> np.ndarray:
    """Inverse of a symmetric covariance via Cholesky, floored to stay PD.

    If the smallest eigenvalue is below ``floor``, floor * I is added first.
    The result is symmetrized so P == P^T within 1e-8.
    """
    s = np.asarray(sigma, dtype=np.float64)
    s = (s + s.T) / 2.0
    if np.linalg.eigvalsh(s).min() < floor:
        s = s + floor * np.eye(s.shape[0])
    c, low = linalg.cho_factor(s)
    p = linalg.cho_solve((c, low), np.eye(s.shape[0]))
    return (p + p.T) / 2.0


def fit_class_stats(normalized: np.ndarray, labels: np.ndarray, num_classes: int) -> ClassStats:
    """Fit means, shared shrinkage covariance, and precision in one pass."""
    means, counts = class_means(normalized, labels, num_classes)
    residuals = np.asarray(normalized, dtype=np.float64) - means[np.asarray(labels, dtype=np.int64)]
    cov, lam = ledoit_wolf(residuals)
    return ClassStats(
        class_means=means,
        counts=counts,
        covariance=cov,
        precision=precision(cov),
        shrinkage_lambda=lam,
    )


def save_preprocessor(path: str | os.PathLike, prep: Preprocessor) -> None:
    write_checkpoint(path, {"kind": "preprocessor", "dim": prep.mu_global.shape[0]},
                     {"mu_global": prep.mu_global})


def load_preprocessor(path: str | os.PathLike) -> Preprocessor:
    header, arrays = read_checkpoint(path)
    if header.get("kind") != "preprocessor":
        raise ValueError(f"{path}: not a preprocessor checkpoint")
    return Preprocessor(mu_global=arrays["mu_global"])


def save_class_stats(path: str | os.PathLike, stats: ClassStats) -> None:
    header = {
        "kind": "class_stats",
        "num_classes": stats.num_classes,
        "dim": stats.dim,
        "shrinkage_lambda": stats.shrinkage_lambda,
        "counts": [int(c) for c in stats.counts],
    }
    write_checkpoint(path, header, {
        "class_means": stats.class_means,
        "covariance": stats.covariance,
        "precision": stats.precision,
    })


def load_class_stats(path: str | os.PathLike) -> ClassStats:
    header, arrays = read_checkpoint(path)
    if header.get("kind") != "class_stats":
        raise ValueError(f"{path}: not a class-stats checkpoint")
    return ClassStats(
        class_means=arrays["class_means"],
        counts=np.asarray(header["counts"], dtype=np.int64),
        covariance=arrays["covariance"],
        precision=arrays["precision"],
        shrinkage_lambda=float(header["shrinkage_lambda"]),
    )
