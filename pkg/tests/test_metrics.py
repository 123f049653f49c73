"""Metric oracles: IS closed forms, FID Gaussian law, retrieval AP."""

import numpy as np
import pytest

from speech2image.errors import ProtocolError
from speech2image.evaluation.metrics import (
    average_precision,
    fid,
    inception_score_from_probs,
    retrieval_map_from_features,
)


def test_is_constant_predictions_equal_one():
    probs = np.tile([0.2, 0.5, 0.3], (40, 1))
    mean, std = inception_score_from_probs(probs, splits=10)
    assert mean == pytest.approx(1.0, abs=1e-6)
    assert std == pytest.approx(0.0, abs=1e-6)


def test_is_uniform_one_hot_equals_class_count():
    k = 5
    probs = np.eye(k)[np.arange(100) % k]  # every chunk of 10 sees all classes twice
    mean, std = inception_score_from_probs(probs, splits=10)
    assert mean == pytest.approx(k, abs=1e-6)
    assert std == pytest.approx(0.0, abs=1e-6)


def test_is_bounds():
    rng = np.random.default_rng(0)
    raw = rng.uniform(0.05, 1.0, size=(60, 7))
    probs = raw / raw.sum(axis=1, keepdims=True)
    mean, _ = inception_score_from_probs(probs, splits=6)
    assert 1.0 <= mean <= 7.0


def test_is_rejects_insufficient_samples():
    with pytest.raises(ValueError):
        inception_score_from_probs(np.full((5, 3), 1 / 3), splits=10)


def test_is_rejects_non_finite():
    probs = np.full((20, 3), 1 / 3)
    probs[4, 1] = np.nan
    with pytest.raises(ValueError):
        inception_score_from_probs(probs, splits=2)


def test_fid_set_against_itself():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 16))
    assert fid(x, x) <= 1e-6


def test_fid_gaussian_mean_gap_oracle():
    rng = np.random.default_rng(2)
    d = np.zeros(8)
    d[0], d[3] = 1.5, -0.8
    real = rng.normal(size=(10_000, 8))
    fake = rng.normal(size=(10_000, 8)) + d
    got = fid(real, fake)
    expected = float((d**2).sum())
    assert abs(got - expected) / expected < 0.05


def test_fid_symmetry():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(300, 6))
    y = 0.5 * rng.normal(size=(400, 6)) + 1.0
    assert fid(x, y) == pytest.approx(fid(y, x), abs=1e-6)


def test_fid_orthogonal_transform_invariance():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(500, 5))
    y = rng.normal(size=(500, 5)) * 1.3 + 0.7
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    assert fid(x @ q, y @ q) == pytest.approx(fid(x, y), abs=1e-4)


def test_fid_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        fid(np.zeros((5, 3)), np.zeros((5, 4)))


def test_fid_rejects_tiny_sets():
    with pytest.raises(ValueError):
        fid(np.zeros((1, 3)), np.zeros((5, 3)))


def test_fid_rejects_non_finite():
    x = np.random.default_rng(5).normal(size=(10, 3))
    y = x.copy()
    y[0, 0] = np.inf
    with pytest.raises(ValueError):
        fid(x, y)


def test_average_precision_hand_case():
    # ranking (correct, wrong, correct, wrong): AP = (1/1 + 2/3) / 2
    assert average_precision(np.array([1, 0, 1, 0])) == pytest.approx(5 / 6)


def test_average_precision_perfect_and_worst():
    assert average_precision(np.array([1, 1, 0, 0])) == pytest.approx(1.0)
    assert average_precision(np.array([0, 0, 1])) == pytest.approx(1 / 3)


def test_average_precision_no_relevant_items():
    with pytest.raises(ProtocolError):
        average_precision(np.zeros(4))


def _clustered_features(rng, ids, spread=0.01):
    centers = np.eye(int(ids.max()) + 1)
    return centers[ids] + rng.normal(0, spread, size=(ids.size, centers.shape[1]))


def test_map_perfect_clusters():
    rng = np.random.default_rng(6)
    real_ids = np.repeat(np.arange(3), 4)
    fake_ids = np.repeat(np.arange(3), 5)
    real = _clustered_features(rng, real_ids)
    fake = _clustered_features(rng, fake_ids)
    got = retrieval_map_from_features(real, real_ids, fake, fake_ids, seed=0)
    assert got == pytest.approx(1.0)


def test_map_random_features_near_class_frequency():
    # gallery is class-balanced: chance-level mAP concentrates a little
    # above the 1/num_classes class frequency for finite galleries
    num_classes, per_class = 4, 6
    fake_ids = np.repeat(np.arange(num_classes), per_class)
    real_ids = np.repeat(np.arange(num_classes), 3)
    values = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        real = rng.normal(size=(real_ids.size, 8))
        fake = rng.normal(size=(fake_ids.size, 8))
        values.append(
            retrieval_map_from_features(real, real_ids, fake, fake_ids, seed=seed)
        )
    mean = float(np.mean(values))
    assert 0.25 < mean < 0.40, mean


def test_map_rank_invariance_under_feature_scaling():
    rng = np.random.default_rng(7)
    real_ids = np.repeat(np.arange(3), 3)
    fake_ids = np.repeat(np.arange(3), 4)
    real = rng.normal(size=(real_ids.size, 6))
    fake = rng.normal(size=(fake_ids.size, 6))
    a = retrieval_map_from_features(real, real_ids, fake, fake_ids, seed=1)
    b = retrieval_map_from_features(7.3 * real, real_ids, 7.3 * fake, fake_ids, seed=1)
    assert a == pytest.approx(b, abs=1e-12)


def test_map_deterministic_given_seed():
    rng = np.random.default_rng(8)
    real_ids = np.repeat(np.arange(3), 4)
    fake_ids = np.repeat(np.arange(3), 4)
    real = rng.normal(size=(real_ids.size, 5))
    fake = rng.normal(size=(fake_ids.size, 5))
    a = retrieval_map_from_features(real, real_ids, fake, fake_ids, seed=3)
    b = retrieval_map_from_features(real, real_ids, fake, fake_ids, seed=3)
    assert a == b


def test_map_query_pool_needs_enough_reals():
    real_ids = np.array([0, 1, 1])
    fake_ids = np.array([0, 1])
    feats = np.eye(3)
    with pytest.raises(ProtocolError, match="query pool"):
        retrieval_map_from_features(
            feats, real_ids, feats[:2], fake_ids, queries_per_class=2
        )


def test_map_every_class_needs_fakes():
    real_ids = np.array([0, 0, 1, 1])
    fake_ids = np.array([0, 0])
    rng = np.random.default_rng(9)
    with pytest.raises(ProtocolError, match="no fake images"):
        retrieval_map_from_features(
            rng.normal(size=(4, 4)), real_ids, rng.normal(size=(2, 4)), fake_ids
        )
