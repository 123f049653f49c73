"""Log-Mel spectrogram frontend.

Waveforms are framed with a Hamming window (25 ms length, 10 ms shift by
default), passed through a power FFT and a bank of 40 Mel-spaced
triangular filters, and floored with ``log(x + eps)`` so silence maps to a
finite value instead of -inf.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import AudioError


@dataclass
class FrontendConfig:
    sample_rate_hz: int = 16000
    frame_length_ms: float = 25.0
    frame_shift_ms: float = 10.0
    num_mel: int = 40
    log_floor: float = 1e-10
    normalize: bool = False  # per-utterance mean/variance, off by default

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.frame_length_ms / 1000.0))

    @property
    def shift_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.frame_shift_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        n = 1
        while n < self.window_samples:
            n <<= 1
        return n


@dataclass
class Spectrogram:
    frames: np.ndarray  # [num_frames, num_mel] float32
    num_mel: int
    frame_shift_ms: float
    frame_length_ms: float
    sample_rate_hz: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(freq_hz: np.ndarray | float) -> np.ndarray | float:
    """HTK Mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_mel: int, n_fft: int, sample_rate_hz: int) -> tuple[np.ndarray, np.ndarray]:
    """Triangular Mel filterbank spanning [0, Nyquist].

    Returns ``(weights, centers_hz)`` where ``weights`` is
    ``[num_mel, n_fft // 2 + 1]`` with unit-peak triangles and ``centers_hz``
    holds each filter's center frequency.
    """
    nyquist = sample_rate_hz / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), num_mel + 2)
    hz_points = mel_to_hz(mel_points)
    fft_freqs = np.arange(n_fft // 2 + 1) * (sample_rate_hz / n_fft)

    weights = np.zeros((num_mel, n_fft // 2 + 1), dtype=np.float64)
    for m in range(num_mel):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (fft_freqs - left) / max(center - left, 1e-12)
        falling = (right - fft_freqs) / max(right - center, 1e-12)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
    centers_hz = hz_points[1:-1]
    return weights, centers_hz


def compute_log_mel(
    waveform: np.ndarray, sample_rate_hz: int, config: FrontendConfig | None = None
) -> Spectrogram:
    """Frame a waveform and compute its log-Mel spectrogram.

    ``num_frames = floor((len - window) / shift) + 1``; waveforms shorter
    than one window are rejected.  The waveform is resampled first when its
    rate differs from the configured one.
    """
    config = config or FrontendConfig()
    waveform = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(waveform)):
        raise AudioError("waveform contains non-finite samples")
    if sample_rate_hz <= 0:
        raise AudioError(f"sample rate must be positive, got {sample_rate_hz}")
    if sample_rate_hz != config.sample_rate_hz:
        waveform = resample_waveform(waveform, sample_rate_hz, config.sample_rate_hz)

    window = config.window_samples
    shift = config.shift_samples
    if waveform.size < window:
        raise AudioError(
            f"waveform too short: {waveform.size} samples < one {window}-sample frame"
        )

    num_frames = (waveform.size - window) // shift + 1
    idx = np.arange(window)[None, :] + shift * np.arange(num_frames)[:, None]
    frames = waveform[idx] * np.hamming(window)[None, :]

    spectrum = np.fft.rfft(frames, n=config.n_fft, axis=1)
    power = np.abs(spectrum) ** 2
    weights, _ = mel_filterbank(config.num_mel, config.n_fft, config.sample_rate_hz)
    mel_energy = power @ weights.T
    log_mel = np.log(mel_energy + config.log_floor)

    if config.normalize:
        mean = log_mel.mean(axis=0, keepdims=True)
        std = log_mel.std(axis=0, keepdims=True)
        log_mel = (log_mel - mean) / np.maximum(std, 1e-8)

    return Spectrogram(
        frames=log_mel.astype(np.float32),
        num_mel=config.num_mel,
        frame_shift_ms=config.frame_shift_ms,
        frame_length_ms=config.frame_length_ms,
        sample_rate_hz=config.sample_rate_hz,
    )


def resample_waveform(waveform: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    if rate_in == rate_out:
        return waveform
    from math import gcd

    g = gcd(rate_in, rate_out)
    return resample_poly(waveform, rate_out // g, rate_in // g)


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a mono PCM16 WAV file as float64 samples in [-1, 1]."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            data = wav.readframes(wav.getnframes())
    except (wave.Error, OSError, EOFError) as exc:
        raise AudioError(f"cannot read WAV {path}: {exc}") from None
    if width != 2:
        raise AudioError(f"{path}: expected 16-bit PCM, got sample width {width}")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def write_wav(path: str | Path, waveform: np.ndarray, sample_rate_hz: int) -> None:
    """Write float samples in [-1, 1] as mono PCM16."""
    clipped = np.clip(np.asarray(waveform, dtype=np.float64), -1.0, 1.0)
    # same 1/32768 scale as read_wav so a round trip only rounds once
    pcm = np.clip(np.round(clipped * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate_hz)
        wav.writeframes(pcm.tobytes())


def load_log_mel(path: str | Path, config: FrontendConfig | None = None) -> Spectrogram:
    """Read a WAV file and return its log-Mel spectrogram."""
    config = config or FrontendConfig()
    waveform, rate = read_wav(path)
    return compute_log_mel(waveform, rate, config)
