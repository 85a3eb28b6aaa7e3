"""Binary feature files (OHFS), dataset manifests, and open-set splits.

The OHFS layout is little-endian:

    magic "OHFS" | version u16 = 1 | dtype u8 = 1 (f32) | reserved u8 |
    N u64 | d u64 | features N*d f32 row-major | labels N i64

A manifest sidecar lives next to the feature file at ``<path>.manifest.json``.
Features are stored as float32; numerical work downstream runs in float64.
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

MAGIC = b"OHFS"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHBBQQ")

SPLIT_ROLES = ("id_train", "id_test", "ood_test", "raw")
OOD_LABEL = -1


class FeatureFileError(Exception):
    """Base error for malformed or unreadable feature files."""


class BadMagicError(FeatureFileError):
    """File does not start with the OHFS magic."""


class VersionMismatchError(FeatureFileError):
    """File declares an unsupported format version or payload dtype."""


class TruncatedPayloadError(FeatureFileError):
    """File ends before the feature matrix announced in the header."""


class CountMismatchError(FeatureFileError):
    """Label count or feature dimension disagrees with the header/manifest."""


@dataclass
class Manifest:
    """Provenance record written alongside every feature file."""

    backbone_id: str = "unknown"
    split_role: str = "raw"
    feature_dim: int = 0
    source_dataset: str = "unknown"
    extraction_seed: int = 0
    class_names: list[str] | None = None

    def __post_init__(self):
        if self.split_role not in SPLIT_ROLES:
            raise ValueError(f"split_role must be one of {SPLIT_ROLES}, got {self.split_role!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        raw = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})


@dataclass
class FeatureSet:
    """An N x d block of embeddings with integer labels and a manifest.

    Labels carry original dataset class ids; -1 marks rows whose label is
    deliberately withheld (the out-of-distribution convention).
    """

    features: np.ndarray
    labels: np.ndarray
    manifest: Manifest = field(default_factory=Manifest)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError("labels must be 1-D")
        validate_feature_set(self)
        if self.manifest.feature_dim == 0:
            self.manifest.feature_dim = self.features.shape[1]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def validate_feature_set(fs: FeatureSet) -> None:
    n, d = fs.features.shape
    if d < 1:
        raise ValueError("feature dimension must be >= 1")
    if fs.labels.shape[0] != n:
        raise ValueError(f"labels length {fs.labels.shape[0]} != row count {n}")
    if not np.all(np.isfinite(fs.features)):
        raise FeatureFileError("features contain NaN or infinity")
    if fs.manifest.feature_dim not in (0, d):
        raise CountMismatchError(
            f"manifest feature_dim {fs.manifest.feature_dim} != matrix width {d}"
        )


def write_feature_file(fs: FeatureSet, path: str | os.PathLike) -> None:
    """Write ``fs`` to ``path`` in OHFS format plus its manifest sidecar.

    The byte stream is a pure function of the input, so two writes of the
    same set produce identical files. Nothing is written if validation
    fails; the payload lands via a temp file + rename so interrupted writes
    leave no partial file behind.
    """
    validate_feature_set(fs)
    n, d = fs.features.shape
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_F32, 0, n, d)
    payload = fs.features.astype("<f4", copy=False).tobytes(order="C")
    labels = fs.labels.astype("<i8", copy=False).tobytes(order="C")

    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(labels)
    os.replace(tmp, path)

    manifest = Manifest(**{**asdict(fs.manifest), "feature_dim": d})
    with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())


def read_feature_file(path: str | os.PathLike) -> FeatureSet:
    """Read an OHFS file, validating header, payload length, and manifest."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an OHFS file")
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header cut short")
    _, version, dtype, _, n, d = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if dtype != DTYPE_F32:
        raise VersionMismatchError(f"{path}: unsupported dtype code {dtype}")
    if d < 1:
        raise CountMismatchError(f"{path}: header dimension {d} < 1")

    body = len(data) - _HEADER.size
    need_feat = n * d * 4
    if body < need_feat:
        raise TruncatedPayloadError(
            f"{path}: feature payload needs {need_feat} bytes, {body} present"
        )
    if body - need_feat != n * 8:
        raise CountMismatchError(
            f"{path}: label payload is {body - need_feat} bytes, expected {n * 8}"
        )

    features = np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size)
    features = features.reshape(n, d).copy()
    labels = np.frombuffer(data, dtype="<i8", count=n, offset=_HEADER.size + need_feat).copy()

    manifest_path = path + ".manifest.json"
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = Manifest.from_json(fh.read())
        if manifest.feature_dim != d:
            raise CountMismatchError(
                f"{path}: manifest feature_dim {manifest.feature_dim} != header {d}"
            )
    else:
        manifest = Manifest(feature_dim=d)
    return FeatureSet(features=features, labels=labels, manifest=manifest)


@dataclass(frozen=True)
class SplitSpec:
    """Known/unknown class partition with the deterministic label remap.

    ``remap`` sends known original ids onto contiguous ids 0..K-1 in
    ascending original-id order; everything else is the unknown pool.
    """

    known_original_ids: tuple[int, ...]
    remap: dict[int, int]
    unknown_original_ids: frozenset[int]

    @property
    def num_known(self) -> int:
        return len(self.known_original_ids)

    def to_json(self) -> str:
        return json.dumps(
            {
                "known_original_ids": list(self.known_original_ids),
                "remap": {str(k): v for k, v in self.remap.items()},
                "unknown_original_ids": sorted(self.unknown_original_ids),
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        raw = json.loads(text)
        return cls(
            known_original_ids=tuple(raw["known_original_ids"]),
            remap={int(k): v for k, v in raw["remap"].items()},
            unknown_original_ids=frozenset(raw["unknown_original_ids"]),
        )


def build_open_split(all_class_ids, known_ids) -> SplitSpec:
    """Partition class ids into known (remapped to 0..K-1) and unknown.

    The remap is assigned in ascending original-id order, so equal inputs
    always give equal splits.
    """
    all_ids = {int(c) for c in all_class_ids}
    known = sorted({int(c) for c in known_ids})
    if not known:
        raise ValueError("known_ids must be nonempty")
    extra = set(known) - all_ids
    if extra:
        raise ValueError(f"known_ids not a subset of all_class_ids: {sorted(extra)}")
    remap = {orig: new for new, orig in enumerate(known)}
    return SplitSpec(
        known_original_ids=tuple(known),
        remap=remap,
        unknown_original_ids=frozenset(all_ids - set(known)),
    )


def select(fs: FeatureSet, split: SplitSpec, role: str) -> FeatureSet:
    """Filter ``fs`` (original labels) down to the rows a split role keeps.

    id_train / id_test keep known-class rows and remap their labels to
    0..K-1; ood_test keeps unknown-class rows with labels set to -1. Row
    order of the source is preserved. An empty result is a warning, not an
    error (e.g. ood_test when the split covers every class).
    """
    if role not in ("id_train", "id_test", "ood_test"):
        raise ValueError(f"role must be id_train, id_test, or ood_test, got {role!r}")

    known = np.isin(fs.labels, np.fromiter(split.known_original_ids, dtype=np.int64))
    mask = ~known if role == "ood_test" else known
    if not mask.any():
        warnings.warn(f"select produced an empty {role} set", stacklevel=2)

    features = fs.features[mask]
    if role == "ood_test":
        labels = np.full(features.shape[0], OOD_LABEL, dtype=np.int64)
    else:
        lut = np.full(max(split.known_original_ids) + 1, -1, dtype=np.int64)
        for orig, new in split.remap.items():
            lut[orig] = new
        labels = lut[fs.labels[mask]]

    manifest = Manifest(**{**asdict(fs.manifest), "split_role": role, "feature_dim": fs.dim})
    return FeatureSet(features=features, labels=labels, manifest=manifest)
