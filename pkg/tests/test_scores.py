import math

import mpmath
import numpy as np
import pytest

from ohz.featstore import FeatureSet
from ohz.prep import ClassStats, center_normalize, fit_center, fit_class_stats
from ohz.probe import TrainConfig, train_probe
from ohz.scores import energy_score, knn_score, mahalanobis_score, msp_score, score_pipeline
from ohz.synth import gaussian_clusters


def knn_oracle(queries, train, k):
    """Full-sort brute force with the lowest-index tie rule."""
    out = np.empty(len(queries))
    for i, q in enumerate(queries):
        dists = np.array([np.sqrt(np.sum((q - t) ** 2)) for t in train])
        order = np.argsort(dists, kind="stable")
        out[i] = np.mean(dists[order[:k]])
    return out


def maha_oracle(x, means, prec):
    """Explicit per-class quadratic forms, scanning for the minimum."""
    out = np.empty(len(x))
    for i in range(len(x)):
        best = np.inf
        for c in range(len(means)):
            diff = x[i] - means[c]
            best = min(best, float(diff @ prec @ diff))
        out[i] = best
    return out


def identity_stats(means):
    means = np.asarray(means, dtype=np.float64)
    d = means.shape[1]
    return ClassStats(class_means=means, counts=np.ones(len(means), dtype=np.int64),
                      covariance=np.eye(d), precision=np.eye(d), shrinkage_lambda=0.0)


class TestMsp:
    def test_uniform_logits(self):
        sv = msp_score(np.zeros((3, 6)))
        assert np.allclose(sv.scores, -1 / 6, atol=1e-15)

    def test_confident_row(self):
        sv = msp_score(np.array([[10.0, 0, 0, 0, 0, 0]]))
        with mpmath.workdps(50):
            exps = [mpmath.exp(v) for v in [10.0, 0, 0, 0, 0, 0]]
            expected = -float(max(exps) / mpmath.fsum(exps))
        assert abs(sv.scores[0] - expected) < 1e-12
        assert abs(sv.scores[0] - (-0.99977)) < 1e-5

    def test_bounds(self, rng):
        k = 5
        sv = msp_score(rng.standard_normal((200, k)) * 20)
        assert np.all(sv.scores >= -1.0) and np.all(sv.scores <= -1.0 / k)


class TestEnergy:
    def test_zero_logits(self):
        sv = energy_score(np.zeros((2, 6)))
        assert np.allclose(sv.scores, -math.log(6), atol=1e-12)

    def test_shift_covariance(self, rng):
        z = rng.standard_normal((50, 4)) * 8
        for c in (-13.5, 0.25, 400.0):
            lhs = energy_score(z + c).scores
            rhs = energy_score(z).scores - c
            assert np.abs(lhs - rhs).max() < 1e-10

    def test_matches_mp_oracle(self, rng):
        z = rng.standard_normal((30, 5)) * 10
        for t in (0.5, 1.0, 2.0):
            sv = energy_score(z, temperature=t)
            with mpmath.workdps(50):
                expected = np.array([
                    -t * float(mpmath.log(mpmath.fsum(
                        mpmath.exp(mpmath.mpf(float(v)) / t) for v in row)))
                    for row in z
                ])
            assert np.abs(sv.scores - expected).max() < 1e-10

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            energy_score(np.zeros((1, 2)), temperature=0.0)

    def test_params_echoed(self):
        assert energy_score(np.zeros((1, 3)), temperature=2.0).params == {"temperature": 2.0}


class TestMahalanobis:
    def test_zero_at_class_mean(self, rng):
        means = rng.standard_normal((3, 4))
        sv = mahalanobis_score(means.copy(), identity_stats(means))
        assert np.abs(sv.scores).max() < 1e-12

    def test_identity_reduces_to_sq_distance(self, rng):
        means = rng.standard_normal((3, 4))
        x = rng.standard_normal((50, 4))
        sv = mahalanobis_score(x, identity_stats(means))
        sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(-1).min(1)
        assert np.abs(sv.scores - sq).max() < 1e-9

    def test_matches_double_loop_oracle(self, rng):
        means = rng.standard_normal((3, 4))
        a = rng.standard_normal((4, 4))
        prec = a @ a.T + np.eye(4)
        stats = ClassStats(class_means=means, counts=np.ones(3, dtype=np.int64),
                           covariance=np.linalg.inv(prec), precision=prec,
                           shrinkage_lambda=0.1)
        x = rng.standard_normal((40, 4))
        assert np.abs(mahalanobis_score(x, stats).scores
                      - maha_oracle(x, means, prec)).max() < 1e-9

    def test_scaled_identity_proportional(self, rng):
        means = rng.standard_normal((4, 6))
        x = rng.standard_normal((30, 6))
        sigma2 = 2.5
        stats = ClassStats(class_means=means, counts=np.ones(4, dtype=np.int64),
                           covariance=sigma2 * np.eye(6),
                           precision=np.eye(6) / sigma2, shrinkage_lambda=0.0)
        sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(-1)
        assert np.abs(mahalanobis_score(x, stats).scores - sq.min(1) / sigma2).max() < 1e-9
        # nearest class unchanged by the scaling
        got_arg = sq.argmin(1)
        scaled = np.einsum("ncd,ncd->nc",
                           (x[:, None, :] - means[None, :, :]) / sigma2,
                           x[:, None, :] - means[None, :, :])
        assert np.array_equal(scaled.argmin(1), got_arg)

    def test_dim_mismatch(self, rng):
        stats = identity_stats(rng.standard_normal((2, 3)))
        with pytest.raises(ValueError):
            mahalanobis_score(rng.standard_normal((5, 4)), stats)


class TestKnn:
    def test_query_equals_train_row(self, rng):
        train = rng.standard_normal((10, 4))
        sv = knn_score(train[[3]], train, k=1)
        assert sv.scores[0] == 0.0

    def test_equidistant_mean_is_r(self):
        # queries at the center of a scaled simplex: distance 1 to every row
        train = np.eye(6)
        q = np.full((1, 6), 1 / 6)
        r = float(np.sqrt(np.sum((q[0] - train[0]) ** 2)))
        sv = knn_score(q, train, k=5)
        assert abs(sv.scores[0] - r) < 1e-12

    def test_matches_full_sort_oracle_exactly(self, rng):
        train = rng.standard_normal((400, 32))
        # inject exact duplicates so the tie rule is exercised
        train[100] = train[7]
        train[250] = train[7]
        queries = rng.standard_normal((50, 32))
        queries[0] = train[7]
        got = knn_score(queries, train, k=5).scores
        expected = knn_oracle(queries, train, 5)
        assert np.array_equal(got, expected)

    def test_m_less_than_k(self, rng):
        with pytest.raises(ValueError):
            knn_score(rng.standard_normal((2, 3)), rng.standard_normal((3, 3)), k=4)

    def test_chunking_invariance(self, rng, monkeypatch):
        import ohz.scores as sc
        train = rng.standard_normal((60, 5))
        q = rng.standard_normal((23, 5))
        full = knn_score(q, train, k=3).scores
        monkeypatch.setattr(sc, "_KNN_CHUNK_BUDGET", 5 * 60 * 4)
        chunked = knn_score(q, train, k=3).scores
        assert np.array_equal(full, chunked)


class TestRankAgreement:
    def test_orderings_match_oracles(self, rng):
        n, k, d = 200, 4, 8
        logits = rng.standard_normal((n, k)) * 5
        logits[10] = logits[20]  # ties
        msp = msp_score(logits).scores
        with mpmath.workdps(40):
            msp_ref = np.array([
                -float(max(mpmath.exp(v) for v in row)
                       / mpmath.fsum(mpmath.exp(v) for v in row)) for row in logits
            ])
        assert np.array_equal(np.argsort(msp, kind="stable"),
                              np.argsort(msp_ref, kind="stable"))

        energy = energy_score(logits).scores
        with mpmath.workdps(40):
            energy_ref = np.array([
                -float(mpmath.log(mpmath.fsum(mpmath.exp(v) for v in row)))
                for row in logits
            ])
        assert np.array_equal(np.argsort(energy, kind="stable"),
                              np.argsort(energy_ref, kind="stable"))

        train = rng.standard_normal((100, d))
        queries = rng.standard_normal((n, d))
        queries[5] = queries[50]
        got = knn_score(queries, train, k=5).scores
        ref = knn_oracle(queries, train, 5)
        assert np.array_equal(np.argsort(got, kind="stable"),
                              np.argsort(ref, kind="stable"))

        means = rng.standard_normal((4, d))
        a = rng.standard_normal((d, d))
        prec = a @ a.T + np.eye(d)
        stats = ClassStats(class_means=means, counts=np.ones(4, dtype=np.int64),
                           covariance=np.linalg.inv(prec), precision=prec,
                           shrinkage_lambda=0.0)
        maha = mahalanobis_score(queries, stats).scores
        maha_ref = maha_oracle(queries, means, prec)
        assert np.array_equal(np.argsort(maha, kind="stable"),
                              np.argsort(maha_ref, kind="stable"))


class TestScoreBounds:
    def test_nonnegative_distance_scores(self, rng):
        means = rng.standard_normal((3, 6))
        stats = identity_stats(means)
        x = np.vstack([rng.standard_normal((100, 6)), means])  # includes exact hits
        assert mahalanobis_score(x, stats).scores.min() >= -1e-10
        train = rng.standard_normal((50, 6))
        assert knn_score(np.vstack([x, train[:3]]), train, k=4).scores.min() >= 0.0


class TestScorePipeline:
    def _toy_world(self, rng):
        train = gaussian_clusters(6, 80, 16, separation=10.0, seed=1)
        id_test = gaussian_clusters(6, 20, 16, separation=10.0, seed=2)
        ood = gaussian_clusters(10, 20, 16, separation=10.0, seed=3)
        keep = ood.labels >= 6
        ood_test = FeatureSet(features=ood.features[keep],
                              labels=np.full(int(keep.sum()), -1))
        return train, id_test, ood_test

    def test_energy_shapes(self, rng):
        train, id_test, ood_test = self._toy_world(rng)
        model = train_probe(train, TrainConfig(epochs=3, seed=0)).model
        sv_id, sv_ood = score_pipeline("energy", id_test, ood_test, probe=model)
        assert sv_id.scores.shape == (id_test.n,)
        assert sv_ood.scores.shape == (ood_test.n,)
        assert np.all(np.isfinite(sv_id.scores)) and np.all(np.isfinite(sv_ood.scores))

    def test_mahalanobis_identity_toy(self, rng):
        train, id_test, ood_test = self._toy_world(rng)
        prep = fit_center(train.features)
        means = np.asarray(
            [center_normalize(train.features, prep)[train.labels == c].mean(0)
             for c in range(6)])
        stats = identity_stats(means)
        sv_id, _ = score_pipeline("mahalanobis", id_test, ood_test,
                                  prep=prep, stats=stats)
        norm = center_normalize(id_test.features, prep)
        sq = ((norm[:, None, :] - means[None, :, :]) ** 2).sum(-1).min(1)
        assert np.abs(sv_id.scores - sq).max() < 1e-9

    def test_far_ood_scores_higher_all_kinds(self):
        gaps = {k: [] for k in ("msp", "energy", "mahalanobis", "knn")}
        for seed in range(3):
            train = gaussian_clusters(6, 100, 16, separation=10.0, seed=seed)
            id_test = gaussian_clusters(6, 30, 16, separation=10.0, seed=seed + 50)
            far = gaussian_clusters(10, 30, 16, separation=10.0, seed=seed + 100)
            keep = far.labels >= 6
            ood_test = FeatureSet(features=far.features[keep],
                                  labels=np.full(int(keep.sum()), -1))
            model = train_probe(train, TrainConfig(epochs=10, seed=seed)).model
            prep = fit_center(train.features)
            train_norm = center_normalize(train.features, prep)
            stats = fit_class_stats(train_norm, train.labels, 6)
            for kind in gaps:
                sv_id, sv_ood = score_pipeline(
                    kind, id_test, ood_test, probe=model, prep=prep,
                    stats=stats, train_normalized=train_norm)
                gaps[kind].append(sv_ood.scores.mean() - sv_id.scores.mean())
        for kind, vals in gaps.items():
            assert np.mean(vals) > 0, kind

    def test_missing_artifact_errors(self, rng):
        train, id_test, ood_test = self._toy_world(rng)
        with pytest.raises(ValueError, match="probe"):
            score_pipeline("msp", id_test, ood_test)
        with pytest.raises(ValueError, match="preprocessor"):
            score_pipeline("knn", id_test, ood_test)
        prep = fit_center(train.features)
        with pytest.raises(ValueError, match="statistics"):
            score_pipeline("mahalanobis", id_test, ood_test, prep=prep)
        with pytest.raises(ValueError, match="training matrix"):
            score_pipeline("knn", id_test, ood_test, prep=prep)

    def test_zero_vector_queries_finite(self):
        stats = identity_stats(np.eye(4)[:2])
        x = np.zeros((3, 4))
        assert np.all(np.isfinite(mahalanobis_score(x, stats).scores))
        assert np.all(np.isfinite(knn_score(x, np.eye(4), k=2).scores))
