"""Linear classification head on frozen features.

Forward pass, stable softmax / cross-entropy, SGD-with-momentum training,
and argmax prediction. Training is fully deterministic for a fixed seed:
zero init, seeded shuffle order, fixed batch traversal.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .checkpoint import read_checkpoint, write_checkpoint
from .featstore import FeatureSet


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class ProbeModel:
    """Class logits are z(x) = W x + b with W of shape (K, d)."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError("W must be K x d and b length K")
        if self.W.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite parameters")

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]


@dataclass
class TrainResult:
    model: ProbeModel
    loss_history: list[float] = field(default_factory=list)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; rows sum to 1 within 1e-12."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: ProbeModel, features: np.ndarray) -> np.ndarray:
    """Logits for a batch: row i is W @ x_i + b."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"expected N x {model.dim} features, got {x.shape}")
    return x @ model.W.T + model.b


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood in nats, via log-sum-exp."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    k = z.shape[1]
    if y.min(initial=0) < 0 or y.max(initial=0) >= k:
        raise ValueError(f"labels must lie in 0..{k - 1}")
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    return float(np.mean(lse - z[np.arange(z.shape[0]), y]))


def ce_gradients(model: ProbeModel, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic cross-entropy gradients for one batch.

    dW = (softmax - onehot)^T X / B, db = column means of (softmax - onehot).
    """
    logits = forward(model, x)
    g = softmax(logits)
    g[np.arange(x.shape[0]), y] -= 1.0
    g /= x.shape[0]
    return g.T @ np.asarray(x, dtype=np.float64), g.sum(axis=0)


def train_probe(
    train: FeatureSet, config: TrainConfig, num_classes: int | None = None
) -> TrainResult:
    """Fit W, b with SGD + momentum on remapped labels in {0..K-1}.

    Parameters start at zero (the objective is convex, so init only affects
    reproducibility). Velocity update is v <- momentum * v + grad,
    theta <- theta - lr * v. The last partial batch is kept; the per-epoch
    loss is the mean of per-batch losses. A class with no training rows is
    reported as a warning and training proceeds.
    """
    x = np.asarray(train.features, dtype=np.float64)
    y = np.asarray(train.labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    if y.min() < 0:
        raise ValueError("labels must be remapped to 0..K-1 before training")
    k = int(y.max()) + 1 if num_classes is None else int(num_classes)
    if k < 2:
        raise ValueError("need at least 2 classes")
    missing = sorted(set(range(k)) - set(np.unique(y).tolist()))
    if missing:
        warnings.warn(f"classes absent from training data: {missing}", stacklevel=2)

    n, d = x.shape
    w = np.zeros((k, d))
    b = np.zeros(k)
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    rng = np.random.default_rng(config.seed)

    history: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            bx, by = x[idx], y[idx]

            logits = bx @ w.T + b
            zmax = logits.max(axis=1)
            lse = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
            batch_losses.append(float(np.mean(lse - logits[np.arange(len(by)), by])))

            g = np.exp(logits - lse[:, None])
            g[np.arange(len(by)), by] -= 1.0
            g /= len(by)
            vw = config.momentum * vw + g.T @ bx
            vb = config.momentum * vb + g.sum(axis=0)
            w -= config.learning_rate * vw
            b -= config.learning_rate * vb
        history.append(float(np.mean(batch_losses)))

    return TrainResult(model=ProbeModel(W=w, b=b), loss_history=history)


def predict(model: ProbeModel, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    return np.argmax(forward(model, features), axis=1)


def save_probe(path: str | os.PathLike, model: ProbeModel, config: TrainConfig | None = None) -> None:
    header = {
        "kind": "probe",
        "num_classes": model.num_classes,
        "dim": model.dim,
        "config": asdict(config) if config is not None else None,
    }
    write_checkpoint(path, header, {"W": model.W, "b": model.b})


def load_probe(path: str | os.PathLike) -> ProbeModel:
    header, arrays = read_checkpoint(path)
    if header.get("kind") != "probe":
        raise ValueError(f"{path}: not a probe checkpoint")
    return ProbeModel(W=arrays["W"], b=arrays["b"])
