"""Class-aware sampling for relation supervision.

For each anchor (ground-truth) record we draw a same-class companion and a
record from a uniformly chosen different class.  Classes with a single
member fall back to the anchor itself rather than aborting training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .manifest import ManifestEntry

log = logging.getLogger(__name__)


@dataclass
class RelationSamplingBatch:
    gt_entries: list[ManifestEntry]
    same_class_entries: list[ManifestEntry]
    mismatched_entries: list[ManifestEntry]

    @property
    def gt_class_ids(self) -> list[int]:
        return [e.class_id for e in self.gt_entries]

    @property
    def same_class_ids(self) -> list[int]:
        return [e.class_id for e in self.same_class_entries]

    @property
    def mismatched_class_ids(self) -> list[int]:
        return [e.class_id for e in self.mismatched_entries]


def _index_by_class(entries: list[ManifestEntry]) -> dict[int, list[int]]:
    by_class: dict[int, list[int]] = {}
    for i, entry in enumerate(entries):
        by_class.setdefault(entry.class_id, []).append(i)
    return by_class


def sample_relation_indices(
    entries: list[ManifestEntry],
    gt_indices: list[int],
    rng: np.random.Generator,
) -> tuple[list[int], list[int]]:
    """Draw (same-class, mismatched) companion indices for each anchor.

    The mismatch class is sampled uniformly over the other classes, then a
    member of it uniformly; this keeps the mismatch-class histogram flat
    regardless of class sizes.
    """
    by_class = _index_by_class(entries)
    classes = sorted(by_class)
    if len(classes) < 2:
        raise ValueError("relation sampling needs at least 2 classes")

    same, mismatched = [], []
    warned_singleton = False
    for idx in gt_indices:
        anchor = entries[idx]

        peers = [i for i in by_class[anchor.class_id] if i != idx]
        if peers:
            same.append(peers[int(rng.integers(0, len(peers)))])
        else:
            if not warned_singleton:
                log.warning(
                    "class %d has a single member; using the anchor as its "
                    "same-class companion",
                    anchor.class_id,
                )
                warned_singleton = True
            same.append(idx)

        other_classes = [c for c in classes if c != anchor.class_id]
        chosen = other_classes[int(rng.integers(0, len(other_classes)))]
        members = by_class[chosen]
        mismatched.append(members[int(rng.integers(0, len(members)))])

    return same, mismatched


def sample_relation_batch(
    entries: list[ManifestEntry],
    gt_indices: list[int],
    rng: np.random.Generator,
) -> RelationSamplingBatch:
    """Entry-level view of sample_relation_indices."""
    same, mismatched = sample_relation_indices(entries, gt_indices, rng)
    return RelationSamplingBatch(
        gt_entries=[entries[i] for i in gt_indices],
        same_class_entries=[entries[i] for i in same],
        mismatched_entries=[entries[i] for i in mismatched],
    )
