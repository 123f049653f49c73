"""Paired audio/image corpus manifests.

A manifest is UTF-8 text with one record per line:

    image_path<TAB>audio_path<TAB>class_id<TAB>caption_index<TAB>split

Paths are resolved relative to the manifest's directory.  Lines starting
with ``#`` are comments.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError

log = logging.getLogger(__name__)

_SPLITS = ("train", "test")


@dataclass(frozen=True)
class ManifestEntry:
    image_path: Path
    audio_path: Path
    class_id: int
    caption_index: int
    split: str


def load_manifest(path: str | Path, num_classes: int | None = None) -> list[ManifestEntry]:
    """Parse and validate a manifest, preserving file order.

    ``num_classes`` bounds class ids when the caller knows the label space;
    otherwise the bound is inferred as ``max(class_id) + 1``.  Raises
    :class:`ManifestError` with the offending line number on parse errors,
    and with the full offender list when referenced files are missing.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    root = path.parent

    entries: list[ManifestEntry] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ManifestError(
                f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}"
            )
        image_field, audio_field, class_field, caption_field, split = fields
        try:
            class_id = int(class_field)
            caption_index = int(caption_field)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: class_id and caption_index must be integers")
        if class_id < 0:
            raise ManifestError(f"{path}:{lineno}: class_id must be >= 0, got {class_id}")
        if not 0 <= caption_index < 10:
            raise ManifestError(
                f"{path}:{lineno}: caption_index must be in [0, 10), got {caption_index}"
            )
        if split not in _SPLITS:
            raise ManifestError(f"{path}:{lineno}: split must be one of {_SPLITS}, got {split!r}")
        entries.append(
            ManifestEntry(
                image_path=root / image_field,
                audio_path=root / audio_field,
                class_id=class_id,
                caption_index=caption_index,
                split=split,
            )
        )

    if not entries:
        raise ManifestError(f"{path}: manifest holds no records")

    bound = num_classes if num_classes is not None else max(e.class_id for e in entries) + 1
    for i, entry in enumerate(entries):
        if entry.class_id >= bound:
            raise ManifestError(
                f"{path}: entry {i + 1} ({entry.image_path.name}) has class_id "
                f"{entry.class_id} outside [0, {bound})"
            )

    missing = [
        str(p)
        for e in entries
        for p in (e.image_path, e.audio_path)
        if not p.is_file()
    ]
    if missing:
        raise ManifestError(
            f"{path}: {len(missing)} referenced files missing:\n" + "\n".join(missing)
        )

    # Classes with a lone train member survive loading: the relation sampler
    # degrades gracefully, so only warn here.
    train_counts: dict[int, int] = {}
    for e in entries:
        if e.split == "train":
            train_counts[e.class_id] = train_counts.get(e.class_id, 0) + 1
    singletons = sorted(c for c, n in train_counts.items() if n < 2)
    if singletons:
        log.warning(
            "manifest %s: train classes with fewer than 2 images: %s "
            "(same-class sampling will fall back to the anchor)",
            path,
            singletons,
        )
    return entries


def split_entries(entries: list[ManifestEntry], split: str) -> list[ManifestEntry]:
    if split not in _SPLITS:
        raise ManifestError(f"unknown split {split!r}")
    return [e for e in entries if e.split == split]


def num_classes_of(entries: list[ManifestEntry]) -> int:
    return max(e.class_id for e in entries) + 1


def corpus_fingerprint(manifest_path: str | Path) -> str:
    """Content hash of the manifest plus every file it references.

    Stable across machines: per-file sha256 digests are folded in manifest
    order together with the manifest bytes themselves.
    """
    manifest_path = Path(manifest_path)
    outer = hashlib.sha256()
    outer.update(manifest_path.read_bytes())
    for entry in load_manifest(manifest_path):
        for p in (entry.image_path, entry.audio_path):
            outer.update(hashlib.sha256(p.read_bytes()).digest())
    return outer.hexdigest()
