"""Post-hoc open-set scores. Larger always means more OOD-like.

Sign convention: the energy score is the *negated* temperature-scaled
log-sum-exp of the logits. Some texts write energy without the negation;
negating keeps every score kind under the single threshold rule
"flag as unknown when score > tau".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .featstore import FeatureSet
from .prep import ClassStats, Preprocessor, center_normalize
from .probe import ProbeModel, forward, softmax

SCORE_KINDS = ("msp", "energy", "mahalanobis", "knn")

# floats per distance chunk; sized so the (chunk, M, d) temporary stays
# cache-resident, which is several times faster than larger chunks
_KNN_CHUNK_BUDGET = 2 * 1024 * 1024


@dataclass
class ScoreVector:
    """Per-sample scores with the kind tag and its parameters."""

    scores: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"kind must be one of {SCORE_KINDS}, got {self.kind!r}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("non-finite scores")
        if self.kind == "knn" and self.params.get("k", 1) < 1:
            raise ValueError("knn requires k >= 1")


def msp_score(logits: np.ndarray) -> ScoreVector:
    """Negated maximum softmax probability; range [-1, -1/K]."""
    p = softmax(logits)
    return ScoreVector(scores=-p.max(axis=1), kind="msp")


def energy_score(logits: np.ndarray, temperature: float = 1.0) -> ScoreVector:
    """Negated log-sum-exp of logits / T, computed with max subtraction."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    z = np.asarray(logits, dtype=np.float64) / temperature
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    return ScoreVector(scores=-temperature * lse, kind="energy",
                       params={"temperature": temperature})


def mahalanobis_score(features_normalized: np.ndarray, stats: ClassStats) -> ScoreVector:
    """Minimum class-conditional quadratic form under the shared precision.

    Inputs must already be centered and normalized with the training
    preprocessor.
    """
    x = np.asarray(features_normalized, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != stats.dim:
        raise ValueError(f"expected N x {stats.dim} features, got {x.shape}")
    dists = np.empty((stats.num_classes, x.shape[0]))
    for c in range(stats.num_classes):
        diff = x - stats.class_means[c]
        dists[c] = np.einsum("ij,ij->i", diff @ stats.precision, diff)
    return ScoreVector(scores=dists.min(axis=0), kind="mahalanobis")


def knn_score(query_normalized: np.ndarray, train_normalized: np.ndarray, k: int = 5) -> ScoreVector:
    """Mean Euclidean distance to the k nearest training rows.

    Ties at the k-th distance go to the lowest training-row index. A query
    equal to a training row keeps that zero distance; queries are test
    points, never members of the bank, so there is no self-exclusion.
    Distances use the explicit difference form so results are independent
    of the query chunking.
    """
    q = np.asarray(query_normalized, dtype=np.float64)
    t = np.asarray(train_normalized, dtype=np.float64)
    if q.ndim != 2 or t.ndim != 2 or q.shape[1] != t.shape[1]:
        raise ValueError("query and train must be 2-D with equal width")
    m = t.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= {m} training rows, got k={k}")

    out = np.empty(q.shape[0])
    chunk = max(1, _KNN_CHUNK_BUDGET // max(1, m * t.shape[1]))
    for start in range(0, q.shape[0], chunk):
        block = q[start : start + chunk]
        d2 = ((block[:, None, :] - t[None, :, :]) ** 2).sum(axis=2)
        dist = np.sqrt(d2)
        order = np.argsort(dist, axis=1, kind="stable")
        nearest = np.take_along_axis(dist, order[:, :k], axis=1)
        out[start : start + chunk] = nearest.mean(axis=1)
    return ScoreVector(scores=out, kind="knn", params={"k": k})


def score_pipeline(
    kind: str,
    id_test: FeatureSet,
    ood_test: FeatureSet,
    *,
    probe: ProbeModel | None = None,
    prep: Preprocessor | None = None,
    stats: ClassStats | None = None,
    train_normalized: np.ndarray | None = None,
    temperature: float = 1.0,
    k: int = 5,
) -> tuple[ScoreVector, ScoreVector]:
    """Score both test splits with one kind, routing features appropriately.

    Logit-based kinds (msp, energy) run the probe on raw features; the
    distance-based kinds (mahalanobis, knn) consume features centered and
    normalized with the training preprocessor. Raises if the artifact a
    kind needs was not supplied.
    """
    if kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind {kind!r}")

    if kind in ("msp", "energy"):
        if probe is None:
            raise ValueError(f"{kind} scoring requires a trained probe")
        pair = []
        for split in (id_test, ood_test):
            logits = forward(probe, split.features)
            pair.append(msp_score(logits) if kind == "msp"
                        else energy_score(logits, temperature))
        return pair[0], pair[1]

    if prep is None:
        raise ValueError(f"{kind} scoring requires the fitted preprocessor")
    id_norm = center_normalize(id_test.features, prep)
    ood_norm = center_normalize(ood_test.features, prep)
    if kind == "mahalanobis":
        if stats is None:
            raise ValueError("mahalanobis scoring requires class statistics")
        return mahalanobis_score(id_norm, stats), mahalanobis_score(ood_norm, stats)
    if train_normalized is None:
        raise ValueError("knn scoring requires the normalized training matrix")
    return knn_score(id_norm, train_normalized, k), knn_score(ood_norm, train_normalized, k)
