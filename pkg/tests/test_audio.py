"""Log-Mel frontend: framing law, floor behavior, filterbank geometry."""

import numpy as np
import pytest

from speech2image.audio import (
    FrontendConfig,
    compute_log_mel,
    hz_to_mel,
    mel_filterbank,
    mel_to_hz,
    read_wav,
    resample_waveform,
    write_wav,
)
from speech2image.errors import AudioError

RATE = 16000


def test_one_second_gives_98_frames():
    waveform = np.random.default_rng(0).uniform(-0.5, 0.5, RATE)
    spec = compute_log_mel(waveform, RATE)
    # floor((16000 - 400) / 160) + 1
    assert spec.frames.shape == (98, 40)
    assert spec.num_frames == 98


def test_framing_law_across_lengths():
    cfg = FrontendConfig()
    window, shift = cfg.window_samples, cfg.shift_samples
    rng = np.random.default_rng(1)
    for n in [window, window + 1, window + shift - 1, window + shift, 5000, 12345]:
        spec = compute_log_mel(rng.uniform(-1, 1, n), RATE)
        assert spec.num_frames == (n - window) // shift + 1


def test_silence_hits_log_floor():
    spec = compute_log_mel(np.zeros(RATE), RATE)
    assert np.allclose(spec.frames, np.log(1e-10))


def test_tone_argmax_is_nearest_center_bin():
    cfg = FrontendConfig()
    _, centers = mel_filterbank(cfg.num_mel, cfg.n_fft, RATE)
    expected_bin = int(np.argmin(np.abs(centers - 1000.0)))
    t = np.arange(RATE) / RATE
    spec = compute_log_mel(0.7 * np.sin(2 * np.pi * 1000.0 * t), RATE)
    hot = np.argmax(spec.frames, axis=1)
    assert np.all(hot == expected_bin)


def test_filterbank_rows_positive_contiguous():
    cfg = FrontendConfig()
    weights, centers = mel_filterbank(cfg.num_mel, cfg.n_fft, RATE)
    assert weights.shape[0] == cfg.num_mel
    for row in weights:
        assert row.sum() > 0
        support = np.flatnonzero(row > 0)
        assert np.array_equal(support, np.arange(support[0], support[-1] + 1))
    # coverage spans audible range up to Nyquist
    coverage = weights.sum(axis=0)
    assert np.all(coverage[1:-1][centers[0] < 8000] >= 0) and coverage.max() > 0
    assert centers[-1] < RATE / 2
    assert np.all(np.diff(centers) > 0)


def test_mel_scale_round_trip():
    freqs = np.array([0.0, 100.0, 700.0, 1000.0, 7999.0])
    assert np.allclose(mel_to_hz(hz_to_mel(freqs)), freqs)
    assert abs(hz_to_mel(1000.0) - 2595.0 * np.log10(1 + 1000.0 / 700.0)) < 1e-9


def test_too_short_waveform_rejected():
    with pytest.raises(AudioError):
        compute_log_mel(np.zeros(399), RATE)


def test_non_finite_samples_rejected():
    bad = np.zeros(RATE)
    bad[5] = np.nan
    with pytest.raises(AudioError):
        compute_log_mel(bad, RATE)


def test_resample_changes_rate_not_pitch():
    t = np.arange(2 * RATE) / RATE
    tone = np.sin(2 * np.pi * 440.0 * t)
    down = resample_waveform(tone, RATE, 8000)
    assert down.size == 2 * 8000
    spectrum = np.abs(np.fft.rfft(down))
    peak_hz = np.argmax(spectrum) * 8000 / down.size
    assert abs(peak_hz - 440.0) < 2.0


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    waveform = rng.uniform(-0.9, 0.9, 4321)
    path = tmp_path / "x.wav"
    write_wav(path, waveform, RATE)
    back, rate = read_wav(path)
    assert rate == RATE
    assert np.max(np.abs(back - waveform)) < 1.0 / 32000  # PCM16 quantization


def test_read_wav_missing_file(tmp_path):
    with pytest.raises(AudioError):
        read_wav(tmp_path / "absent.wav")


def test_spectrogram_finite_on_real_audio(tiny_paired_corpus):
    spec = tiny_paired_corpus.spectrogram(0)
    assert np.all(np.isfinite(spec.frames))
    assert spec.num_mel == 40
