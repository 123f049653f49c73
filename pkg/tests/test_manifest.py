"""Manifest grammar, validation errors, and the corpus fingerprint."""

import pytest

from speech2image.errors import ManifestError
from speech2image.manifest import (
    corpus_fingerprint,
    load_manifest,
    num_classes_of,
    split_entries,
)


def test_loads_in_file_order(tiny_manifest):
    entries = load_manifest(tiny_manifest)
    assert len(entries) == 4 * 6
    assert [e.class_id for e in entries] == sorted(e.class_id for e in entries)
    assert all(e.image_path.is_file() and e.audio_path.is_file() for e in entries)


def test_every_class_has_two_train_images(tiny_entries):
    train = split_entries(tiny_entries, "train")
    counts = {}
    for e in train:
        counts[e.class_id] = counts.get(e.class_id, 0) + 1
    assert set(counts) == set(range(4))
    assert all(n >= 2 for n in counts.values())


def test_num_classes_inferred(tiny_entries):
    assert num_classes_of(tiny_entries) == 4


def test_split_filter_rejects_unknown(tiny_entries):
    with pytest.raises(ManifestError):
        split_entries(tiny_entries, "validation")


def _write(tmp_path, lines):
    p = tmp_path / "m.tsv"
    p.write_text("\n".join(lines) + "\n")
    return p


def _touch_pair(tmp_path):
    (tmp_path / "a.png").write_bytes(b"x")
    (tmp_path / "a.wav").write_bytes(b"x")


def test_malformed_line_reports_lineno(tmp_path):
    _touch_pair(tmp_path)
    p = _write(tmp_path, ["a.png\ta.wav\t0\t0\ttrain", "only-three\tfields\there"])
    with pytest.raises(ManifestError, match=":2:"):
        load_manifest(p)


def test_class_id_at_bound_rejected(tmp_path):
    _touch_pair(tmp_path)
    p = _write(tmp_path, ["a.png\ta.wav\t2\t0\ttrain"])
    with pytest.raises(ManifestError, match="class_id 2 outside"):
        load_manifest(p, num_classes=2)


def test_missing_files_listed(tmp_path):
    p = _write(tmp_path, ["gone.png\tgone.wav\t0\t0\ttrain"])
    with pytest.raises(ManifestError, match="gone.png"):
        load_manifest(p)


def test_bad_split_rejected(tmp_path):
    _touch_pair(tmp_path)
    p = _write(tmp_path, ["a.png\ta.wav\t0\t0\tdev"])
    with pytest.raises(ManifestError, match="split"):
        load_manifest(p)


def test_caption_index_bounds(tmp_path):
    _touch_pair(tmp_path)
    p = _write(tmp_path, ["a.png\ta.wav\t0\t10\ttrain"])
    with pytest.raises(ManifestError, match="caption_index"):
        load_manifest(p)


def test_comments_and_blanks_skipped(tmp_path):
    _touch_pair(tmp_path)
    p = _write(tmp_path, ["# header", "", "a.png\ta.wav\t0\t0\ttrain"])
    assert len(load_manifest(p)) == 1


def test_empty_manifest_rejected(tmp_path):
    p = _write(tmp_path, ["# nothing here"])
    with pytest.raises(ManifestError, match="no records"):
        load_manifest(p)


def test_fingerprint_stable_and_content_sensitive(tiny_manifest, tmp_path):
    h1 = corpus_fingerprint(tiny_manifest)
    h2 = corpus_fingerprint(tiny_manifest)
    assert h1 == h2 and len(h1) == 64

    _touch_pair(tmp_path)
    p = _write(tmp_path, ["a.png\ta.wav\t0\t0\ttrain"])
    h3 = corpus_fingerprint(p)
    (tmp_path / "a.wav").write_bytes(b"different")
    assert corpus_fingerprint(p) != h3
