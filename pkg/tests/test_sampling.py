"""Relation-triple sampling: mismatch law, determinism, uniformity."""

import numpy as np
import pytest

from speech2image.manifest import load_manifest
from speech2image.sampling import sample_relation_batch, sample_relation_indices
from speech2image.synthetic import make_synthetic_corpus


def test_mismatch_never_shares_class(tiny_entries):
    rng = np.random.default_rng(0)
    gt = list(range(len(tiny_entries)))
    for _ in range(50):
        same, mis = sample_relation_indices(tiny_entries, gt, rng)
        for anchor, s, m in zip(gt, same, mis):
            assert tiny_entries[s].class_id == tiny_entries[anchor].class_id
            assert tiny_entries[m].class_id != tiny_entries[anchor].class_id
            assert s != anchor  # every class here has >= 2 members


def test_two_classes_forces_the_other(tiny_entries):
    two = [e for e in tiny_entries if e.class_id < 2]
    rng = np.random.default_rng(1)
    anchors = [i for i, e in enumerate(two) if e.class_id == 0]
    _, mis = sample_relation_indices(two, anchors, rng)
    assert all(two[m].class_id == 1 for m in mis)


def test_seeded_runs_identical(tiny_entries):
    gt = list(range(0, len(tiny_entries), 2))
    a = sample_relation_indices(tiny_entries, gt, np.random.default_rng(42))
    b = sample_relation_indices(tiny_entries, gt, np.random.default_rng(42))
    assert a == b


def test_mismatch_histogram_uniform_within_5_percent(tmp_path):
    # unequal class sizes on purpose: uniformity must come from the sampler
    manifest = make_synthetic_corpus(
        seed=3, num_classes=5, images_per_class=4, out_dir=tmp_path
    )
    entries = load_manifest(manifest)
    entries = entries + [e for e in entries if e.class_id == 2]  # skew class 2

    anchors = [i for i, e in enumerate(entries) if e.class_id == 0]
    rng = np.random.default_rng(9)
    counts = np.zeros(5)
    draws = 10_000
    per_call = max(1, draws // len(anchors))
    total = 0
    while total < draws:
        _, mis = sample_relation_indices(entries, anchors, rng)
        for m in mis:
            counts[entries[m].class_id] += 1
        total += len(mis)
    assert counts[0] == 0
    expected = total / 4
    rel_dev = np.abs(counts[1:] - expected) / expected
    assert np.all(rel_dev < 0.05), rel_dev


def test_singleton_class_falls_back_to_anchor(tiny_entries, caplog):
    pruned = [e for e in tiny_entries if e.class_id != 0] + [
        e for e in tiny_entries if e.class_id == 0
    ][:1]
    anchor = len(pruned) - 1
    with caplog.at_level("WARNING"):
        same, mis = sample_relation_indices(pruned, [anchor], np.random.default_rng(0))
    assert same == [anchor]
    assert pruned[mis[0]].class_id != 0
    assert "single member" in caplog.text


def test_single_class_rejected(tiny_entries):
    only = [e for e in tiny_entries if e.class_id == 3]
    with pytest.raises(ValueError):
        sample_relation_indices(only, [0], np.random.default_rng(0))


def test_entry_level_wrapper_consistent(tiny_entries):
    gt = [0, 7, 13]
    batch = sample_relation_batch(tiny_entries, gt, np.random.default_rng(5))
    assert batch.gt_class_ids == [tiny_entries[i].class_id for i in gt]
    assert batch.same_class_ids == batch.gt_class_ids
    assert all(
        m != g for m, g in zip(batch.mismatched_class_ids, batch.gt_class_ids)
    )
