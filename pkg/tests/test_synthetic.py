"""Synthetic corpus: determinism, class-attribute coding, preconditions."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from speech2image.synthetic import (
    class_attributes,
    make_synthetic_corpus,
    render_class_audio,
    render_class_image,
)


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_regeneration_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    make_synthetic_corpus(seed=11, num_classes=3, images_per_class=3, out_dir=a)
    make_synthetic_corpus(seed=11, num_classes=3, images_per_class=3, out_dir=b)
    assert _tree_digest(a) == _tree_digest(b)


def test_seed_changes_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    make_synthetic_corpus(seed=1, num_classes=2, images_per_class=2, out_dir=a)
    make_synthetic_corpus(seed=2, num_classes=2, images_per_class=2, out_dir=b)
    assert _tree_digest(a) != _tree_digest(b)


def test_class_attribute_bijection():
    seen = set()
    for cid in range(8):
        spec = class_attributes(cid, 8)
        key = (spec.shape, spec.color, spec.tones_hz)
        assert key not in seen
        seen.add(key)


def test_same_class_same_attributes_distinct_noise():
    spec = class_attributes(2, 8)
    a = render_class_audio(spec, np.random.default_rng(0))
    b = render_class_audio(spec, np.random.default_rng(1))
    assert a.shape != b.shape or not np.allclose(a, b)

    img_a = render_class_image(spec, np.random.default_rng(0))
    img_b = render_class_image(spec, np.random.default_rng(1))
    assert not np.array_equal(img_a, img_b)


def test_paired_classes_share_tone_set_not_order():
    even = class_attributes(2, 8)
    odd = class_attributes(3, 8)
    assert sorted(even.tones_hz) == sorted(odd.tones_hz)
    assert even.tones_hz != odd.tones_hz


def test_single_class_rejected(tmp_path):
    with pytest.raises(ValueError):
        make_synthetic_corpus(seed=0, num_classes=1, images_per_class=4, out_dir=tmp_path)


def test_single_image_per_class_rejected(tmp_path):
    with pytest.raises(ValueError):
        make_synthetic_corpus(seed=0, num_classes=2, images_per_class=1, out_dir=tmp_path)


def test_record_counts_and_splits(tiny_entries):
    # 4 classes x 6 images; one test record per 5 train images
    assert len(tiny_entries) == 24
    per_class_test = {}
    for e in tiny_entries:
        if e.split == "test":
            per_class_test[e.class_id] = per_class_test.get(e.class_id, 0) + 1
    assert per_class_test == {0: 1, 1: 1, 2: 1, 3: 1}
