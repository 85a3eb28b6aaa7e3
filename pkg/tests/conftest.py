import numpy as np
import pytest

from ohz.featstore import FeatureSet, Manifest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_set(features, labels, role="raw", backbone="toy"):
    return FeatureSet(
        features=np.asarray(features, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        manifest=Manifest(backbone_id=backbone, split_role=role,
                          feature_dim=np.asarray(features).shape[1],
                          source_dataset="fixture", extraction_seed=0),
    )
