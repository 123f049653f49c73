"""Paired (spectrogram, image pyramid, class) samples and batching.

Spectrograms and un-augmented pyramids are cached per entry, so epochs
after the first touch no disk.  Variable-length spectrograms are padded
with the log-floor value and carry a true-length vector; encoders mask
everything beyond the true length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import FrontendConfig, Spectrogram, load_log_mel
from .config import DataConfig
from .imaging import AugmentConfig, load_pyramid
from .manifest import ManifestEntry

SCALES = (64, 128, 256)


def frontend_from_config(data: DataConfig) -> FrontendConfig:
    return FrontendConfig(
        sample_rate_hz=data.sample_rate_hz,
        frame_length_ms=data.frame_length_ms,
        frame_shift_ms=data.frame_shift_ms,
        num_mel=data.num_mel,
        log_floor=data.log_floor,
        normalize=data.normalize_spectrogram,
    )


def augment_from_config(data: DataConfig) -> AugmentConfig | None:
    if not data.augment:
        return None
    return AugmentConfig(resize_px=data.augment_resize_px, crop_px=data.image_px)


@dataclass
class PairedSample:
    spectrogram: Spectrogram
    images: dict[int, np.ndarray]  # scale -> HWC float32 in [-1, 1]
    class_id: int


class PairedCorpus:
    """Lazily-cached view of a manifest's records."""

    def __init__(
        self,
        entries: list[ManifestEntry],
        frontend: FrontendConfig | None = None,
        augment: AugmentConfig | None = None,
        scales: tuple[int, ...] = SCALES,
    ):
        self.entries = entries
        self.frontend = frontend or FrontendConfig()
        self.augment = augment
        self.scales = tuple(sorted(set(scales) | {max(scales)}))
        self._spec_cache: dict[int, Spectrogram] = {}
        self._pyramid_cache: dict[int, dict[int, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def class_ids(self) -> np.ndarray:
        return np.array([e.class_id for e in self.entries], dtype=np.int64)

    def spectrogram(self, index: int) -> Spectrogram:
        if index not in self._spec_cache:
            self._spec_cache[index] = load_log_mel(
                self.entries[index].audio_path, self.frontend
            )
        return self._spec_cache[index]

    def pyramid(self, index: int, rng: np.random.Generator | None = None) -> dict[int, np.ndarray]:
        if self.augment is not None and rng is not None:
            return load_pyramid(
                self.entries[index].image_path, self.scales, self.augment, rng
            )
        if index not in self._pyramid_cache:
            self._pyramid_cache[index] = load_pyramid(
                self.entries[index].image_path, self.scales
            )
        return self._pyramid_cache[index]

    def sample(self, index: int, rng: np.random.Generator | None = None) -> PairedSample:
        entry = self.entries[index]
        return PairedSample(
            spectrogram=self.spectrogram(index),
            images=self.pyramid(index, rng),
            class_id=entry.class_id,
        )

    def pad_value(self) -> float:
        return float(math.log(self.frontend.log_floor))


def pad_spectrograms(
    specs: list[Spectrogram], pad_value: float
) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length spectrograms into [B, T_max, M] plus lengths."""
    lengths = np.array([s.num_frames for s in specs], dtype=np.int64)
    t_max = int(lengths.max())
    num_mel = specs[0].num_mel
    out = np.full((len(specs), t_max, num_mel), pad_value, dtype=np.float32)
    for i, s in enumerate(specs):
        out[i, : s.num_frames] = s.frames
    return out, lengths


def stack_images(samples: list[PairedSample], scale: int) -> np.ndarray:
    """Stack one scale of a batch as NCHW float32."""
    hwc = np.stack([s.images[scale] for s in samples])
    return np.ascontiguousarray(hwc.transpose(0, 3, 1, 2))


def batch_indices(
    count: int, batch_size: int, rng: np.random.Generator, drop_last: bool = False
) -> list[np.ndarray]:
    """Shuffled index batches for one epoch."""
    order = rng.permutation(count)
    batches = [order[i : i + batch_size] for i in range(0, count, batch_size)]
    if drop_last and batches and len(batches[-1]) < batch_size:
        batches.pop()
    return batches
