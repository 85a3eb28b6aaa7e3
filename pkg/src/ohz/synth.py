"""Synthetic Gaussian-cluster benchmarks for exercising the pipeline."""

from __future__ import annotations

import numpy as np

from .featstore import FeatureSet, Manifest


def gaussian_clusters(
    num_classes: int,
    per_class: int,
    dim: int,
    separation: float = 10.0,
    sigma: float = 1.0,
    seed: int = 0,
    backbone_id: str = "synthetic",
) -> FeatureSet:
    """Spherical Gaussian clusters with pairwise mean distance = separation * sigma.

    Means sit on scaled coordinate axes (requires dim >= num_classes), so
    every pair of means is exactly ``separation * sigma`` apart. Labels are
    0..num_classes-1 in block order.
    """
    if dim < num_classes:
        raise ValueError(f"dim {dim} must be >= num_classes {num_classes}")
    rng = np.random.default_rng(seed)
    scale = separation * sigma / np.sqrt(2.0)
    features = []
    labels = []
    for c in range(num_classes):
        mean = np.zeros(dim)
        mean[c] = scale
        features.append(mean + sigma * rng.standard_normal((per_class, dim)))
        labels.append(np.full(per_class, c, dtype=np.int64))
    return FeatureSet(
        features=np.vstack(features).astype(np.float32),
        labels=np.concatenate(labels),
        manifest=Manifest(backbone_id=backbone_id, split_role="raw",
                          feature_dim=dim, source_dataset="gaussian_clusters",
                          extraction_seed=seed),
    )
