"""Versioned checkpoint containers with lineage hashes.

Every checkpoint records a format version, its kind, the full config echo
and content hashes of its inputs (corpus fingerprint, upstream checkpoint
hashes), so an artifact's provenance can always be verified.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch

from .errors import CompatibilityError

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, kind: str, state: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format_version": FORMAT_VERSION, "kind": kind, **state}
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path, kind: str | None = None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CompatibilityError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CompatibilityError(
            f"{path}: checkpoint format {version} unsupported (expected {FORMAT_VERSION})"
        )
    if kind is not None and payload.get("kind") != kind:
        raise CompatibilityError(
            f"{path}: expected a {kind!r} checkpoint, found {payload.get('kind')!r}"
        )
    return payload


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
