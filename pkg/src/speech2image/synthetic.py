"""Deterministic desk-scale synthetic corpus.

Each class is a unique (shape, color, tone pattern) triple: images show a
colored geometric shape with jittered geometry, and utterances play the
class's tone sequence with jittered amplitude, duration and noise.  Paired
classes (2k, 2k+1) share the same two tone frequencies in opposite order,
so time-averaged spectra confuse them while the temporal order does not;
their images sit on opposite sides of the hue wheel, so any conditioning
signal that cannot read tone order straddles two contrasting image modes
and pays for it in distribution distance.

Regenerating with the same seed is byte-identical: every record derives
its own RNG from (seed, class, index), and neither PNG nor WAV output
embeds timestamps.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .audio import write_wav

SHAPES = ("circle", "square", "triangle", "diamond")

_IMAGE_PX = 256
_SEGMENTS = 4
_TEST_FRACTION = 5  # one test record per 5 images in a class


@dataclass(frozen=True)
class SyntheticClassSpec:
    class_id: int
    shape: str
    color: tuple[int, int, int]
    tones_hz: tuple[float, ...]


def class_attributes(class_id: int, num_classes: int) -> SyntheticClassSpec:
    """The (shape, color, tone-pattern) triple encoding one class."""
    if not 0 <= class_id < num_classes:
        raise ValueError(f"class_id {class_id} outside [0, {num_classes})")
    shape = SHAPES[class_id % len(SHAPES)]
    # members of a tone-sharing pair get complementary hues (see module
    # docstring); even members cover [0, 0.5), odd members [0.5, 1.0)
    hue = (class_id // 2) / num_classes + (0.5 if class_id % 2 else 0.0)
    rgb = colorsys.hsv_to_rgb(hue, 0.85, 0.92)
    color = tuple(int(round(255 * v)) for v in rgb)

    pair = class_id // 2
    low = 500.0 + 280.0 * pair
    high = low + 160.0
    if class_id % 2 == 0:
        tones = (low, high, low, high)
    else:
        tones = (high, low, high, low)
    return SyntheticClassSpec(class_id, shape, color, tones)


def _record_rng(seed: int, class_id: int, index: int, stream: int) -> np.random.Generator:
    # SeedSequence entropy lists are platform-stable, so generation order
    # never affects the corpus bytes.
    return np.random.default_rng(np.random.SeedSequence([seed, class_id, index, stream]))


def render_class_image(
    spec: SyntheticClassSpec, rng: np.random.Generator, size: int = _IMAGE_PX
) -> np.ndarray:
    """Draw one jittered sample of the class's shape as uint8 RGB."""
    background = np.clip(
        rng.normal(232.0, 4.0, size=(size, size, 3)), 210, 250
    ).astype(np.uint8)
    img = Image.fromarray(background)
    draw = ImageDraw.Draw(img)

    cx = size / 2 + rng.uniform(-12, 12)
    cy = size / 2 + rng.uniform(-12, 12)
    r = size * 0.34 + rng.uniform(-12, 12)

    if spec.shape == "circle":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=spec.color)
    elif spec.shape == "square":
        draw.rectangle([cx - r, cy - r, cx + r, cy + r], fill=spec.color)
    elif spec.shape == "triangle":
        pts = [(cx, cy - r), (cx - r, cy + r * 0.8), (cx + r, cy + r * 0.8)]
        draw.polygon(pts, fill=spec.color)
    else:  # diamond
        pts = [(cx, cy - r), (cx + r, cy), (cx, cy + r), (cx - r, cy)]
        draw.polygon(pts, fill=spec.color)
    return np.asarray(img)


def render_class_audio(
    spec: SyntheticClassSpec, rng: np.random.Generator, sample_rate_hz: int = 16000
) -> np.ndarray:
    """Synthesize one jittered utterance of the class's tone sequence."""
    nyquist_guard = 0.45 * sample_rate_hz
    if max(spec.tones_hz) >= nyquist_guard:
        raise ValueError(
            f"class {spec.class_id}: tone {max(spec.tones_hz):.0f} Hz too close to Nyquist"
        )
    segment_s = 0.225 + rng.uniform(0.0, 0.05)  # total utterance 0.9 .. 1.1 s
    seg_len = int(round(segment_s * sample_rate_hz))
    ramp_len = int(0.005 * sample_rate_hz)
    ramp = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, ramp_len)))

    pieces = []
    for freq in spec.tones_hz:
        amp = rng.uniform(0.55, 0.85)
        t = np.arange(seg_len) / sample_rate_hz
        tone = amp * np.sin(2.0 * np.pi * freq * t)
        tone[:ramp_len] *= ramp
        tone[-ramp_len:] *= ramp[::-1]
        pieces.append(tone)
    waveform = np.concatenate(pieces)
    waveform = waveform + rng.normal(0.0, 0.008, size=waveform.size)
    return np.clip(waveform, -1.0, 1.0)


def make_synthetic_corpus(
    seed: int,
    num_classes: int,
    images_per_class: int,
    out_dir: str | Path,
    sample_rate_hz: int = 16000,
) -> Path:
    """Write images, audio and a manifest; return the manifest path."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2 (mismatch sampling needs another class)")
    if images_per_class < 2:
        raise ValueError("images_per_class must be >= 2")

    out_dir = Path(out_dir)
    image_root = out_dir / "images"
    audio_root = out_dir / "audio"
    num_test = images_per_class // _TEST_FRACTION

    lines = [
        f"# synthetic corpus: seed={seed} classes={num_classes} per_class={images_per_class}"
    ]
    for class_id in range(num_classes):
        spec = class_attributes(class_id, num_classes)
        class_tag = f"class_{class_id:03d}"
        (image_root / class_tag).mkdir(parents=True, exist_ok=True)
        (audio_root / class_tag).mkdir(parents=True, exist_ok=True)
        for index in range(images_per_class):
            image = render_class_image(spec, _record_rng(seed, class_id, index, 0))
            audio = render_class_audio(
                spec, _record_rng(seed, class_id, index, 1), sample_rate_hz
            )
            rel_image = f"images/{class_tag}/img_{index:03d}.png"
            rel_audio = f"audio/{class_tag}/utt_{index:03d}.wav"
            Image.fromarray(image).save(out_dir / rel_image, format="PNG")
            write_wav(out_dir / rel_audio, audio, sample_rate_hz)
            split = "test" if index >= images_per_class - num_test else "train"
            lines.append(f"{rel_image}\t{rel_audio}\t{class_id}\t0\t{split}")

    manifest_path = out_dir / "manifest.tsv"
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest_path
