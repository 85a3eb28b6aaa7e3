import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ohz.featstore import (
    BadMagicError,
    CountMismatchError,
    FeatureFileError,
    FeatureSet,
    Manifest,
    TruncatedPayloadError,
    VersionMismatchError,
    build_open_split,
    read_feature_file,
    select,
    write_feature_file,
)

from conftest import make_set


def _roundtrip(tmp_path, fs):
    path = tmp_path / "feat.ohfs"
    write_feature_file(fs, path)
    return read_feature_file(path)


class TestRoundTrip:
    def test_empty_set(self, tmp_path):
        fs = make_set(np.zeros((0, 4), dtype=np.float32), np.zeros(0, dtype=np.int64))
        back = _roundtrip(tmp_path, fs)
        assert back.n == 0 and back.dim == 4

    def test_bit_exact(self, tmp_path, rng):
        fs = make_set(rng.standard_normal((17, 5)).astype(np.float32),
                      rng.integers(0, 9, 17))
        back = _roundtrip(tmp_path, fs)
        assert np.array_equal(back.features, fs.features)
        assert np.array_equal(back.labels, fs.labels)
        assert back.manifest == fs.manifest

    def test_two_writes_identical_bytes(self, tmp_path, rng):
        fs = make_set(rng.standard_normal((8, 3)).astype(np.float32),
                      rng.integers(0, 3, 8))
        a, b = tmp_path / "a.ohfs", tmp_path / "b.ohfs"
        write_feature_file(fs, a)
        write_feature_file(fs, b)
        assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()

    @settings(max_examples=50, deadline=None)
    @given(
        data=st.data(),
        n=st.integers(min_value=0, max_value=20),
        d=st.integers(min_value=1, max_value=8),
    )
    def test_roundtrip_property(self, tmp_path_factory, data, n, d):
        feats = data.draw(arrays(np.float32, (n, d),
                                 elements=st.floats(-1e6, 1e6, width=32)))
        labels = data.draw(arrays(np.int64, (n,),
                                  elements=st.integers(-1, 100)))
        fs = FeatureSet(features=feats, labels=labels)
        path = tmp_path_factory.mktemp("rt") / "x.ohfs"
        write_feature_file(fs, path)
        back = read_feature_file(path)
        assert np.array_equal(back.features, fs.features)
        assert np.array_equal(back.labels, fs.labels)


class TestReadErrors:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.ohfs"
        p.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(BadMagicError):
            read_feature_file(p)

    def test_version_mismatch(self, tmp_path, rng):
        fs = make_set(rng.standard_normal((2, 2)).astype(np.float32), [0, 1])
        p = tmp_path / "v.ohfs"
        write_feature_file(fs, p)
        raw = bytearray(p.read_bytes())
        raw[4] = 9  # version low byte
        p.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatchError):
            read_feature_file(p)

    def test_truncated_matrix(self, tmp_path, rng):
        fs = make_set(rng.standard_normal((4, 4)).astype(np.float32), [0, 1, 2, 3])
        p = tmp_path / "t.ohfs"
        write_feature_file(fs, p)
        raw = p.read_bytes()
        p.write_bytes(raw[: 24 + 4 * 4 * 4 - 3])  # cut mid-matrix
        with pytest.raises(TruncatedPayloadError):
            read_feature_file(p)

    def test_label_count_mismatch(self, tmp_path, rng):
        fs = make_set(rng.standard_normal((4, 4)).astype(np.float32), [0, 1, 2, 3])
        p = tmp_path / "m.ohfs"
        write_feature_file(fs, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-8])  # drop one label, matrix intact
        with pytest.raises(CountMismatchError):
            read_feature_file(p)

    def test_manifest_dim_mismatch(self, tmp_path, rng):
        fs = make_set(rng.standard_normal((2, 3)).astype(np.float32), [0, 1])
        p = tmp_path / "d.ohfs"
        write_feature_file(fs, p)
        sidecar = tmp_path / "d.ohfs.manifest.json"
        bad = Manifest(feature_dim=7)
        sidecar.write_text(bad.to_json())
        with pytest.raises(CountMismatchError):
            read_feature_file(p)


class TestWriteErrors:
    def test_nan_rejected_nothing_written(self, tmp_path):
        fs = make_set(np.ones((1, 2), dtype=np.float32), [0])
        fs.features[0, 0] = np.nan  # corrupt after construction
        p = tmp_path / "nan.ohfs"
        with pytest.raises(FeatureFileError):
            write_feature_file(fs, p)
        assert not p.exists()

    def test_constructor_rejects_nan(self):
        with pytest.raises(FeatureFileError):
            FeatureSet(features=np.array([[np.inf]], dtype=np.float32),
                       labels=np.array([0]))


class TestOpenSplit:
    def test_first_six_known(self):
        split = build_open_split(range(10), range(6))
        assert split.remap == {i: i for i in range(6)}
        assert split.unknown_original_ids == frozenset({6, 7, 8, 9})

    def test_fully_closed_world(self):
        split = build_open_split(range(10), range(10))
        assert split.unknown_original_ids == frozenset()

    def test_ascending_remap(self):
        split = build_open_split(range(10), [9, 3, 7])
        assert split.remap == {3: 0, 7: 1, 9: 2}

    def test_deterministic(self):
        a = build_open_split(range(10), [4, 1])
        b = build_open_split(range(10), [1, 4])
        assert a == b

    def test_empty_known_rejected(self):
        with pytest.raises(ValueError):
            build_open_split(range(10), [])

    def test_not_subset_rejected(self):
        with pytest.raises(ValueError):
            build_open_split(range(5), [7])


class TestSelect:
    def _tenclass(self, rng):
        labels = np.repeat(np.arange(10), 3)
        feats = rng.standard_normal((30, 4)).astype(np.float32)
        return make_set(feats, labels)

    def test_ood_rows_only_unknown(self, rng):
        fs = self._tenclass(rng)
        split = build_open_split(range(10), range(6))
        ood = select(fs, split, "ood_test")
        assert ood.n == 12
        assert np.all(ood.labels == -1)
        # the selected rows really come from classes 6..9
        assert np.array_equal(ood.features, fs.features[fs.labels >= 6])

    def test_closed_world_empty_ood(self, rng):
        fs = self._tenclass(rng)
        split = build_open_split(range(10), range(10))
        with pytest.warns(UserWarning):
            ood = select(fs, split, "ood_test")
        assert ood.n == 0

    def test_toy_remap(self):
        fs = make_set(np.eye(3, dtype=np.float32), [0, 6, 1])
        split = build_open_split(range(10), range(6))
        idset = select(fs, split, "id_test")
        assert np.array_equal(idset.labels, [0, 1])
        assert np.array_equal(idset.features, fs.features[[0, 2]])

    def test_id_labels_below_k(self, rng):
        fs = self._tenclass(rng)
        split = build_open_split(range(10), [2, 5, 8])
        for role in ("id_train", "id_test"):
            out = select(fs, split, role)
            assert out.labels.max() < split.num_known
            assert out.labels.min() >= 0
            assert out.manifest.split_role == role

    def test_row_order_preserved(self, rng):
        fs = self._tenclass(rng)
        split = build_open_split(range(10), range(6))
        idset = select(fs, split, "id_train")
        mask = fs.labels < 6
        assert np.array_equal(idset.features, fs.features[mask])
