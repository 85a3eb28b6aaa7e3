"""Few-shot class-incremental learning over frozen features.

A base session builds class-mean prototypes; later sessions each add one
(or more) novel class from a handful of shots. Every method shares the
nearest-class-mean readout (cosine similarity against unit-norm
prototypes), so accuracy differences isolate how the novel prototype is
constructed:

  baseline  never updates the bank; novel classes cannot be predicted.
  sppr      single-pass relation-weighted refinement of the shot mean.
  orco      gradient descent on all prototypes with anchor attraction and
            an orthogonality penalty (the one method that moves old rows).
  concm     cross-attention calibration against base prototypes plus
            Gaussian pseudo-feature augmentation.

All randomness is derived from the protocol seed, so identical configs
reproduce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .featstore import FeatureSet
from .prep import center_normalize, fit_center
from .seeding import derive_seed

METHODS = ("baseline", "sppr", "orco", "concm")

UNIT_NORM_TOL = 1e-9
_COLLAPSE_TOL = 1e-12


@dataclass
class SessionConfig:
    base_class_count: int = 7
    sessions: tuple[tuple[int, ...], ...] = ((7,), (8,), (9,))
    shots: int = 5
    method: str = "baseline"
    seed: int = 0
    test_sample_count: int = 1000
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        self.sessions = tuple(tuple(int(c) for c in s) for s in self.sessions)
        flat = [c for s in self.sessions for c in s]
        if len(flat) != len(set(flat)):
            raise ValueError("session class ids must be disjoint")


@dataclass
class PrototypeBank:
    """Unit-norm prototype per class, with per-class session provenance."""

    prototypes: np.ndarray  # C x d
    class_ids: np.ndarray  # length C
    session_of: np.ndarray  # length C

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.session_of = np.asarray(self.session_of, dtype=np.int64)
        if len(set(self.class_ids.tolist())) != self.class_ids.size:
            raise ValueError("duplicate class ids in bank")
        norms = np.linalg.norm(self.prototypes, axis=1)
        if self.prototypes.size and np.abs(norms - 1.0).max() > UNIT_NORM_TOL:
            raise ValueError("prototype rows must be unit norm")

    @property
    def num_classes(self) -> int:
        return self.class_ids.size

    def appended(self, prototype: np.ndarray, class_id: int, session: int) -> "PrototypeBank":
        """New bank with one extra row; existing rows are untouched."""
        if int(class_id) in self.class_ids:
            raise ValueError(f"class {class_id} already in bank")
        return PrototypeBank(
            prototypes=np.vstack([self.prototypes, prototype[None, :]]),
            class_ids=np.concatenate([self.class_ids, [int(class_id)]]),
            session_of=np.concatenate([self.session_of, [int(session)]]),
        )


@dataclass
class SessionResult:
    session_index: int
    overall_accuracy: float  # percent over classes seen so far
    per_class_recall: np.ndarray
    confusion: np.ndarray  # rows true, cols predicted, ascending class id
    class_ids: np.ndarray


@dataclass
class ProtocolResult:
    method: str
    shots: int
    session_results: list[SessionResult]
    base_accuracy: float
    overall_accuracy: float
    test_indices: np.ndarray


def _normalize(v: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm < _COLLAPSE_TOL:
        raise ValueError(f"{what} collapsed to the zero vector")
    return v / norm


def base_prototypes(base_features: np.ndarray, labels: np.ndarray) -> PrototypeBank:
    """Class-mean prototypes from normalized base-session features.

    Each prototype is the renormalized mean of its class rows. A class whose
    mean vanishes (antipodal members) is reported by id as a collapse.
    """
    x = np.asarray(base_features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    ids = np.unique(y)
    protos = np.empty((ids.size, x.shape[1]))
    for i, c in enumerate(ids):
        rows = x[y == c]
        if rows.shape[0] == 0:
            raise ValueError(f"class {c} has no samples")
        mean = rows.mean(axis=0)
        if np.linalg.norm(mean) < _COLLAPSE_TOL:
            raise ValueError(f"class {c} mean collapsed to zero")
        protos[i] = mean / np.linalg.norm(mean)
    return PrototypeBank(prototypes=protos, class_ids=ids,
                         session_of=np.zeros(ids.size, dtype=np.int64))


def _predict_many(bank: PrototypeBank, queries: np.ndarray) -> np.ndarray:
    """Cosine argmax per row; ties resolve to the lowest class id."""
    order = np.argsort(bank.class_ids, kind="stable")
    sims = queries @ bank.prototypes[order].T
    return bank.class_ids[order][np.argmax(sims, axis=1)]


def ncm_predict(bank: PrototypeBank, query: np.ndarray) -> int:
    """Nearest-class-mean label for one unit-norm query vector."""
    if bank.num_classes == 0:
        raise ValueError("empty prototype bank")
    q = np.asarray(query, dtype=np.float64).ravel()
    return int(_predict_many(bank, q[None, :])[0])


def sppr_refine(
    bank: PrototypeBank,
    shots_normalized: np.ndarray,
    class_id: int,
    session: int,
    gamma: float = 0.5,
    temperature: float = 0.1,
) -> PrototypeBank:
    """Append a relation-refined prototype for one novel class.

    The shot mean is blended with a softmax-weighted combination of the
    existing prototypes (weights from cosine similarity / temperature), then
    renormalized. gamma = 0 keeps the shot mean untouched. Existing rows
    never change.
    """
    shots = np.asarray(shots_normalized, dtype=np.float64)
    if shots.shape[0] < 1:
        raise ValueError("need at least one shot")
    m = _normalize(shots.mean(axis=0), f"class {class_id} shot mean")
    logits = (bank.prototypes @ m) / temperature
    w = np.exp(logits - logits.max())
    w /= w.sum()
    refined = _normalize((1.0 - gamma) * m + gamma * (w @ bank.prototypes),
                         f"class {class_id} refined prototype")
    return bank.appended(refined, class_id, session)


def orco_loss(prototypes: np.ndarray, anchors: np.ndarray, lambda_orth: float) -> float:
    """Anchor attraction plus pairwise squared-cosine orthogonality penalty."""
    attract = float(np.sum((prototypes - anchors) ** 2))
    gram = prototypes @ prototypes.T
    off = gram - np.diag(np.diag(gram))
    return attract + lambda_orth * float(np.sum(off**2))


def orco_update(
    bank: PrototypeBank,
    shots_normalized: np.ndarray,
    class_id: int,
    session: int,
    steps: int = 200,
    step_size: float = 0.05,
    lambda_orth: float = 0.1,
    perturb_sigma: float = 0.05,
    seed: int = 0,
) -> tuple[PrototypeBank, np.ndarray]:
    """Append a novel prototype and descend the joint loss over all rows.

    The novel row starts at the perturbed, renormalized shot mean. Anchors
    are the renormalized data means: the current bank rows for old classes
    (their means are not available here) and the shot mean for the novel
    class. Each step applies the exact gradient then renormalizes rows.
    Returns the new bank and the loss trace (length steps + 1, evaluated on
    the normalized iterate). Aborts if the loss goes non-finite.
    """
    shots = np.asarray(shots_normalized, dtype=np.float64)
    if shots.shape[0] < 1:
        raise ValueError("need at least one shot")
    rng = np.random.default_rng(seed)
    shot_mean = _normalize(shots.mean(axis=0), f"class {class_id} shot mean")
    init = shot_mean + perturb_sigma * rng.standard_normal(shot_mean.shape)
    novel = _normalize(init, f"class {class_id} initial prototype")

    p = np.vstack([bank.prototypes, novel[None, :]])
    anchors = np.vstack([bank.prototypes, shot_mean[None, :]])

    trace = np.empty(steps + 1)
    trace[0] = orco_loss(p, anchors, lambda_orth)
    for it in range(steps):
        gram = p @ p.T
        np.fill_diagonal(gram, 0.0)
        grad = 2.0 * (p - anchors) + 4.0 * lambda_orth * (gram @ p)
        with np.errstate(invalid="ignore", over="ignore"):
            p = p - step_size * grad
            norms = np.linalg.norm(p, axis=1, keepdims=True)
            p = p / np.where(norms < _COLLAPSE_TOL, 1.0, norms)
            trace[it + 1] = orco_loss(p, anchors, lambda_orth)
        if not np.isfinite(trace[it + 1]):
            raise ArithmeticError(
                f"optimizer diverged at step {it + 1}; reduce step_size ({step_size})"
            )

    new_bank = PrototypeBank(
        prototypes=p,
        class_ids=np.concatenate([bank.class_ids, [int(class_id)]]),
        session_of=np.concatenate([bank.session_of, [int(session)]]),
    )
    return new_bank, trace


def concm_calibrate(
    bank: PrototypeBank,
    shots_normalized: np.ndarray,
    class_id: int,
    session: int,
    alpha: float = 0.6,
    aug_count: int = 50,
    aug_sigma: float = 0.05,
    seed: int = 0,
) -> PrototypeBank:
    """Append a cross-attention calibrated, augmentation-averaged prototype.

    Attention runs over base-session prototypes only, with scaled dot
    products (divide by sqrt(d)). The calibrated vector is blended
    alpha * query + (1 - alpha) * context, then averaged with aug_count
    Gaussian pseudo-features around it. Existing rows never change.
    """
    shots = np.asarray(shots_normalized, dtype=np.float64)
    if shots.shape[0] < 1:
        raise ValueError("need at least one shot")
    base_rows = bank.prototypes[bank.session_of == 0]
    if base_rows.shape[0] == 0:
        raise ValueError("bank has no base-session prototypes to attend over")

    q = _normalize(shots.mean(axis=0), f"class {class_id} shot mean")
    logits = (base_rows @ q) / np.sqrt(q.shape[0])
    a = np.exp(logits - logits.max())
    a /= a.sum()
    context = a @ base_rows
    calibrated = _normalize(alpha * q + (1.0 - alpha) * context,
                            f"class {class_id} calibrated prototype")

    rng = np.random.default_rng(seed)
    pseudo = calibrated + aug_sigma * rng.standard_normal((aug_count, q.shape[0]))
    pooled = np.vstack([calibrated[None, :], pseudo]).mean(axis=0)
    final = _normalize(pooled, f"class {class_id} augmented prototype")
    return bank.appended(final, class_id, session)


def evaluate(bank: PrototypeBank, test_normalized: np.ndarray, test_labels: np.ndarray,
             session_index: int = 0, seen_class_ids=None) -> SessionResult:
    """NCM accuracy and confusion over the classes seen so far.

    ``seen_class_ids`` may exceed the bank's classes (the no-update baseline
    has seen novel classes it cannot predict); test rows from classes not
    yet seen are excluded. The confusion matrix is ordered by ascending
    class id; row c sums to that class's test count. A seen class with no
    prototype necessarily has recall 0.
    """
    x = np.asarray(test_normalized, dtype=np.float64)
    y = np.asarray(test_labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty test set")
    ids = np.sort(bank.class_ids if seen_class_ids is None
                  else np.unique(np.asarray(seen_class_ids, dtype=np.int64)))
    keep = np.isin(y, ids)
    x, y = x[keep], y[keep]
    if x.shape[0] == 0:
        raise ValueError("no test rows belong to the classes seen so far")

    preds = _predict_many(bank, x)
    index_of = {int(c): i for i, c in enumerate(ids)}
    confusion = np.zeros((ids.size, ids.size), dtype=np.int64)
    for true, pred in zip(y, preds):
        confusion[index_of[int(true)], index_of[int(pred)]] += 1

    row_totals = confusion.sum(axis=1)
    recall = np.divide(np.diag(confusion), row_totals,
                       out=np.zeros(ids.size), where=row_totals > 0)
    overall = np.trace(confusion) / confusion.sum() * 100.0
    return SessionResult(
        session_index=session_index,
        overall_accuracy=float(overall),
        per_class_recall=recall,
        confusion=confusion,
        class_ids=ids,
    )


def select_shots(features: np.ndarray, labels: np.ndarray, class_id: int,
                 shots: int, seed: int) -> np.ndarray:
    """Row indices of the class's shot examples: seeded shuffle, first S, sorted.

    The same seed gives nested selections across shot counts (the 1-shot
    pick is always contained in the 5- and 10-shot picks).
    """
    pool = np.flatnonzero(np.asarray(labels) == class_id)
    if pool.size < shots:
        raise ValueError(f"class {class_id} has {pool.size} rows, need {shots}")
    rng = np.random.default_rng(derive_seed(seed, f"shots-class{class_id}"))
    return np.sort(rng.permutation(pool)[:shots])


def run_baseline(config: SessionConfig, bank: PrototypeBank,
                 test_normalized: np.ndarray, test_labels: np.ndarray) -> list[SessionResult]:
    """Evaluate a frozen base bank through every session without updates.

    Novel-class recall is structurally zero: those prototypes never exist,
    so every novel test row is predicted as some base class.
    """
    results = [evaluate(bank, test_normalized, test_labels, session_index=0)]
    seen = list(bank.class_ids)
    for s, class_ids in enumerate(config.sessions, start=1):
        seen.extend(class_ids)
        results.append(evaluate(bank, test_normalized, test_labels,
                                session_index=s, seen_class_ids=seen))
    return results


def run_protocol(config: SessionConfig, train: FeatureSet, test: FeatureSet) -> ProtocolResult:
    """Execute the base session plus every incremental session.

    Features are centered with the base-session training mean and
    l2-normalized before any prototype work. The evaluation subset
    (``test_sample_count`` rows) is drawn once from the full test set with
    the protocol seed and reused by every session; its indices are returned
    so runs can be audited.
    """
    train_labels = np.asarray(train.labels, dtype=np.int64)
    test_labels_full = np.asarray(test.labels, dtype=np.int64)

    all_ids = np.unique(train_labels)
    session_ids = {c for s in config.sessions for c in s}
    base_ids = np.asarray([c for c in all_ids if c not in session_ids])[: config.base_class_count]
    if base_ids.size != config.base_class_count:
        raise ValueError(
            f"need {config.base_class_count} base classes, found {base_ids.size}"
        )

    base_mask = np.isin(train_labels, base_ids)
    prep = fit_center(train.features[base_mask])
    train_norm = center_normalize(train.features, prep)
    test_norm_full = center_normalize(test.features, prep)

    rng = np.random.default_rng(derive_seed(config.seed, "test-subset"))
    count = min(config.test_sample_count, test_norm_full.shape[0])
    test_indices = np.sort(rng.permutation(test_norm_full.shape[0])[:count])
    test_norm = test_norm_full[test_indices]
    test_labels = test_labels_full[test_indices]

    bank = base_prototypes(train_norm[base_mask], train_labels[base_mask])

    if config.method == "baseline":
        results = run_baseline(config, bank, test_norm, test_labels)
        return _summarize(config, results, test_indices)

    results = [evaluate(bank, test_norm, test_labels, session_index=0)]
    for s, class_ids in enumerate(config.sessions, start=1):
        for class_id in class_ids:
            idx = select_shots(train_norm, train_labels, class_id, config.shots, config.seed)
            shots = train_norm[idx]
            if config.method == "sppr":
                bank = sppr_refine(bank, shots, class_id, s, **config.method_params)
            elif config.method == "orco":
                bank, _ = orco_update(
                    bank, shots, class_id, s,
                    seed=derive_seed(config.seed, f"orco-class{class_id}"),
                    **config.method_params,
                )
            else:
                bank = concm_calibrate(
                    bank, shots, class_id, s,
                    seed=derive_seed(config.seed, f"concm-class{class_id}"),
                    **config.method_params,
                )
        results.append(evaluate(bank, test_norm, test_labels, session_index=s))
    return _summarize(config, results, test_indices)


def _summarize(config: SessionConfig, results: list[SessionResult],
               test_indices: np.ndarray) -> ProtocolResult:
    return ProtocolResult(
        method=config.method,
        shots=config.shots,
        session_results=results,
        base_accuracy=results[0].overall_accuracy,
        overall_accuracy=results[-1].overall_accuracy,
        test_indices=test_indices,
    )
