"""Image loading, multi-scale pyramids and sample-grid output.

Pixels live in [-1, 1] channels-last float32 everywhere in the data layer;
the model layer converts to channels-first tensors at batch time.  All
lower scales are resized views of the single source-scale image, never
independent crops.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass
class AugmentConfig:
    resize_px: int = 304
    crop_px: int = 256
    horizontal_flip: bool = True


def to_unit_range(arr: np.ndarray) -> np.ndarray:
    """uint8 [0, 255] -> float32 [-1, 1]."""
    return (arr.astype(np.float32) / 127.5) - 1.0


def to_uint8(arr: np.ndarray) -> np.ndarray:
    """float [-1, 1] -> uint8 [0, 255], clipping out-of-range values."""
    return np.clip((np.asarray(arr) + 1.0) * 127.5, 0.0, 255.0).round().astype(np.uint8)


def _resize(image: Image.Image, size: int) -> Image.Image:
    return image.resize((size, size), Image.BILINEAR)


def load_image(path: str | Path, size: int | None = None) -> np.ndarray:
    """Load an RGB image as float32 [-1, 1] HWC, optionally resized square."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        if size is not None:
            rgb = _resize(rgb, size)
        return to_unit_range(np.asarray(rgb))


def image_pyramid(
    source: np.ndarray, scales: tuple[int, ...] = (64, 128, 256)
) -> dict[int, np.ndarray]:
    """Downsample one source image to every requested scale.

    ``source`` is HWC float32 in [-1, 1] at least as large as max(scales).
    """
    base = Image.fromarray(to_uint8(source))
    pyramid: dict[int, np.ndarray] = {}
    for scale in sorted(scales, reverse=True):
        if base.size != (scale, scale):
            base = _resize(base, scale)
        pyramid[scale] = to_unit_range(np.asarray(base))
    return pyramid


def load_pyramid(
    path: str | Path,
    scales: tuple[int, ...] = (64, 128, 256),
    augment: AugmentConfig | None = None,
    rng: np.random.Generator | None = None,
) -> dict[int, np.ndarray]:
    """Load an image and build its scale pyramid, optionally augmented.

    Augmentation resizes the image up, takes a random crop at the source
    scale and flips horizontally with probability 0.5; the smaller scales
    are then derived from that one augmented source.
    """
    top = max(scales)
    if augment is None:
        return image_pyramid(load_image(path, size=top), scales)
    if rng is None:
        raise ValueError("augmentation requires an rng")
    big = load_image(path, size=augment.resize_px)
    margin = augment.resize_px - augment.crop_px
    y = int(rng.integers(0, margin + 1))
    x = int(rng.integers(0, margin + 1))
    crop = big[y : y + augment.crop_px, x : x + augment.crop_px]
    if augment.horizontal_flip and rng.random() < 0.5:
        crop = crop[:, ::-1]
    if augment.crop_px != top:
        crop = np.asarray(
            _resize(Image.fromarray(to_uint8(crop)), top), dtype=np.uint8
        )
        crop = to_unit_range(crop)
    return image_pyramid(np.ascontiguousarray(crop), scales)


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Save a float [-1, 1] HWC array as PNG."""
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def save_grid(path: str | Path, images: list[np.ndarray], columns: int = 8) -> None:
    """Tile [-1, 1] HWC images into a single PNG mosaic."""
    if not images:
        raise ValueError("no images to tile")
    h, w = images[0].shape[:2]
    columns = min(columns, len(images))
    rows = (len(images) + columns - 1) // columns
    canvas = np.full((rows * h, columns * w, 3), 255, dtype=np.uint8)
    for i, img in enumerate(images):
        r, c = divmod(i, columns)
        canvas[r * h : (r + 1) * h, c * w : (c + 1) * w] = to_uint8(img)
    Image.fromarray(canvas).save(path, format="PNG")
