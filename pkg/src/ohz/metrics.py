"""Threshold-sweep evaluation: ROC, AUROC, AUPR, FPR@95, OSCR, decision stats.

Every metric derives from one decision convention: a sample is flagged
unknown when score > tau, with OOD as the positive class. Sweeps are exact
over the observed score multiset (plus +/- infinity endpoints); there is no
binning. Area computations accumulate integer counts and divide once at the
end, so the trapezoidal AUROC equals the pairwise Mann-Whitney statistic to
the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RocCurve:
    """Sweep from strictest (+inf) to loosest (-inf) threshold."""

    thresholds: np.ndarray  # descending, endpoints +/- inf
    tpr: np.ndarray  # fraction of OOD flagged unknown at each threshold
    fpr: np.ndarray  # fraction of ID flagged unknown at each threshold


@dataclass
class OscrCurve:
    points: list[tuple[float, float]]  # (fpr_ood, ccr), ascending fpr_ood


@dataclass
class EvalReport:
    backbone_id: str
    kind: str
    auroc: float  # percent
    aupr: float  # percent
    fpr_at_95: float  # percent
    oscr_area: float  # fraction in [0, 1]


@dataclass
class DecisionStats:
    threshold: float
    fpr_id: float  # fraction of ID with score > threshold
    id_kept: int
    id_total: int
    retention_rate: float  # defined as 1 - fpr_id
    ood_rejection_rate: float


def _as_scores(arr, name: str) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _sweep_counts(id_scores: np.ndarray, ood_scores: np.ndarray):
    """Counts of samples strictly above each threshold in the exact sweep.

    Thresholds run descending from +inf to -inf over all distinct observed
    scores. Returns (thresholds, id_above, ood_above) with integer counts.
    """
    values = np.unique(np.concatenate([id_scores, ood_scores]))[::-1]
    thresholds = np.concatenate(([np.inf], values, [-np.inf]))
    id_sorted = np.sort(id_scores)
    ood_sorted = np.sort(ood_scores)
    id_above = id_sorted.size - np.searchsorted(id_sorted, thresholds, side="right")
    ood_above = ood_sorted.size - np.searchsorted(ood_sorted, thresholds, side="right")
    return thresholds, id_above, ood_above


def roc(id_scores, ood_scores) -> RocCurve:
    """Exact ROC over the observed scores; OOD positive, flagged when s > tau."""
    ids = _as_scores(id_scores, "id_scores")
    oods = _as_scores(ood_scores, "ood_scores")
    thresholds, id_above, ood_above = _sweep_counts(ids, oods)
    return RocCurve(
        thresholds=thresholds,
        tpr=ood_above / oods.size,
        fpr=id_above / ids.size,
    )


def auroc(id_scores, ood_scores) -> float:
    """Area under the ROC as a percentage, via integer trapezoids.

    Equals the Mann-Whitney statistic (pair fraction with s_ood > s_id,
    ties counted half) because the sweep visits every distinct score.
    """
    ids = _as_scores(id_scores, "id_scores")
    oods = _as_scores(ood_scores, "ood_scores")
    _, id_above, ood_above = _sweep_counts(ids, oods)
    twice_area = int(np.sum(np.diff(id_above) * (ood_above[1:] + ood_above[:-1])))
    return twice_area / (2 * ids.size * oods.size) * 100.0


def aupr(id_scores, ood_scores) -> float:
    """Average precision (step-wise, no interpolation), OOD positive, percent."""
    ids = _as_scores(id_scores, "id_scores")
    oods = _as_scores(ood_scores, "ood_scores")
    values = np.unique(np.concatenate([ids, oods]))[::-1]
    id_sorted = np.sort(ids)
    ood_sorted = np.sort(oods)
    # predicted positive at step j: score >= values[j]
    tp = oods.size - np.searchsorted(ood_sorted, values, side="left")
    fp = ids.size - np.searchsorted(id_sorted, values, side="left")
    recall = tp / oods.size
    precision = tp / np.maximum(tp + fp, 1)
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * precision)) * 100.0


def _rejection_threshold(id_scores: np.ndarray, ood_scores: np.ndarray, target: float):
    """Largest threshold rejecting at least ``target`` of the OOD scores.

    Candidates are the observed scores plus -inf (where tpr = 1), so a
    threshold always exists. Returns (tau, id_above, ood_above) counts at tau.
    """
    if not 0 < target <= 1:
        raise ValueError("target must be in (0, 1]")
    thresholds, id_above, ood_above = _sweep_counts(id_scores, ood_scores)
    ok = np.flatnonzero(ood_above >= target * ood_scores.size)
    pick = int(ok[0])
    return float(thresholds[pick]), int(id_above[pick]), int(ood_above[pick])


def fpr_at_tpr(id_scores, ood_scores, target: float = 0.95) -> tuple[float, float]:
    """FPR (percent) on ID at the loosest threshold with OOD tpr >= target.

    Returns (fpr_percent, threshold). With n OOD samples the achievable tpr
    is quantized to multiples of 1/n, so the realized rejection rate can
    exceed the target.
    """
    ids = _as_scores(id_scores, "id_scores")
    oods = _as_scores(ood_scores, "ood_scores")
    tau, id_above, _ = _rejection_threshold(ids, oods, target)
    return (id_above / ids.size) * 100.0, tau


def decision_stats(id_scores, ood_scores, target_rejection: float = 0.95) -> DecisionStats:
    """Operating-point report at a fixed OOD rejection rate.

    Uses the same threshold rule as ``fpr_at_tpr`` so the two agree exactly;
    retention_rate is defined as 1 - fpr_id (the two formulas id_kept/|ID|
    and 1 - fpr_id coincide up to float rounding; the identity wins).
    """
    ids = _as_scores(id_scores, "id_scores")
    oods = _as_scores(ood_scores, "ood_scores")
    tau, id_above, ood_above = _rejection_threshold(ids, oods, target_rejection)
    fpr_id = id_above / ids.size
    return DecisionStats(
        threshold=tau,
        fpr_id=fpr_id,
        id_kept=ids.size - id_above,
        id_total=ids.size,
        retention_rate=1.0 - fpr_id,
        ood_rejection_rate=ood_above / oods.size,
    )


def oscr(id_scores, id_predictions, id_labels, ood_scores) -> tuple[OscrCurve, float]:
    """Correct-classification rate versus OOD false acceptance, with area.

    For each threshold tau in the combined sweep, a sample is accepted as
    known when its score is <= tau:

        ccr(tau)     = |{ID: prediction == label and s <= tau}| / |ID|
        fpr_ood(tau) = |{OOD: s <= tau}| / |OOD|

    The area is the trapezoidal integral of ccr over fpr_ood in [0, 1],
    accumulated in integer counts.
    """
    ids = _as_scores(id_scores, "id_scores")
    oods = _as_scores(ood_scores, "ood_scores")
    preds = np.asarray(id_predictions).ravel()
    labels = np.asarray(id_labels).ravel()
    if not (preds.size == labels.size == ids.size):
        raise ValueError("id_scores, id_predictions, id_labels must align")

    correct_scores = np.sort(ids[preds == labels])
    ood_sorted = np.sort(oods)
    # ascending sweep so fpr_ood runs 0 -> 1
    thresholds = np.concatenate(([-np.inf], np.unique(np.concatenate([ids, oods])), [np.inf]))
    ccr_cnt = np.searchsorted(correct_scores, thresholds, side="right")
    fpr_cnt = np.searchsorted(ood_sorted, thresholds, side="right")

    twice_area = int(np.sum(np.diff(fpr_cnt) * (ccr_cnt[1:] + ccr_cnt[:-1])))
    area = twice_area / (2 * oods.size * ids.size)

    curve = OscrCurve(points=list(zip((fpr_cnt / oods.size).tolist(),
                                      (ccr_cnt / ids.size).tolist())))
    return curve, area
