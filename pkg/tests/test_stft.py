"""Analysis/synthesis behavior of the shared STFT."""

import numpy as np
import pytest

from arraysep.audio import AudioBuffer
from arraysep.errors import ConfigError, StreamError
from arraysep.stft import (SpectralFrame, frame_count, sqrt_hann_window,
                           stft_analyze, stft_synthesize)


def _noise(channels, samples, rate, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    return AudioBuffer(rng.standard_normal((channels, samples)) * scale, rate)


class TestAnalyze:
    def test_bin_centered_sine_concentrates(self):
        k0 = 37
        n = np.arange(1024)
        x = AudioBuffer(np.sin(2 * np.pi * k0 * n / 1024), 48000)
        frame = next(stft_analyze(x, 1024, 512, window=np.ones(1024)))
        mags = np.abs(frame.bins[0])
        assert np.argmax(mags) == k0
        others = np.delete(mags, k0)
        assert others.max() < 1e-9 * mags[k0]

    def test_zero_input_zero_frames(self):
        x = AudioBuffer(np.zeros((2, 4096)), 48000)
        for frame in stft_analyze(x, 1024, 512):
            assert np.all(frame.bins == 0)

    def test_frame_count_matches_indexing_oracle(self):
        rng = np.random.default_rng(3)
        for total in [1024, 1536, 5000, 48000, 1023]:
            x = AudioBuffer(rng.standard_normal(total) * 0.1, 48000)
            frames = list(stft_analyze(x, 1024, 512))
            # oracle: count positions t*512 with a full 1024-sample window
            count = sum(1 for t in range(total) if t * 512 + 1024 <= total)
            assert len(frames) == count == frame_count(total, 1024, 512)

    def test_odd_fft_size_rejected(self):
        x = _noise(1, 4096, 48000)
        with pytest.raises(ConfigError):
            list(stft_analyze(x, 1023, 512))

    def test_bad_shift_rejected(self):
        x = _noise(1, 4096, 48000)
        with pytest.raises(ConfigError):
            list(stft_analyze(x, 1024, 2048))

    def test_frame_covers_expected_samples(self):
        x = _noise(1, 4096, 48000, seed=1)
        window = sqrt_hann_window(1024)
        frames = list(stft_analyze(x, 1024, 512))
        for t, frame in enumerate(frames):
            segment = x.samples[0, t * 512 : t * 512 + 1024] * window
            np.testing.assert_array_equal(frame.bins[0], np.fft.rfft(segment))

    def test_linearity(self):
        xa = _noise(1, 4096, 48000, seed=5)
        xb = _noise(1, 4096, 48000, seed=6)
        mix = AudioBuffer(2.5 * xa.samples - 1.25 * xb.samples, 48000)
        for fa, fb, fm in zip(stft_analyze(xa, 1024, 512), stft_analyze(xb, 1024, 512),
                              stft_analyze(mix, 1024, 512)):
            np.testing.assert_allclose(fm.bins, 2.5 * fa.bins - 1.25 * fb.bins, atol=1e-10)

    def test_parseval_per_frame(self):
        x = _noise(1, 4096, 48000, seed=7)
        window = sqrt_hann_window(1024)
        for t, frame in enumerate(stft_analyze(x, 1024, 512)):
            segment = x.samples[0, t * 512 : t * 512 + 1024] * window
            time_energy = np.sum(segment**2)
            mags = np.abs(frame.bins[0]) ** 2
            spectral_energy = (mags[0] + 2 * mags[1:-1].sum() + mags[-1]) / 1024
            assert abs(time_energy - spectral_energy) <= 1e-6 * time_energy


class TestSynthesize:
    @pytest.mark.parametrize("fft_size,shift,rate", [(1024, 512, 48000), (400, 160, 16000)])
    def test_round_trip_noise(self, fft_size, shift, rate):
        x = _noise(2, 4 * rate // 10, rate, seed=11)
        y = stft_synthesize(stft_analyze(x, fft_size, shift), shift)
        n = min(x.num_samples, y.num_samples)
        lo, hi = fft_size, n - fft_size
        err = x.samples[:, lo:hi] - y.samples[:, lo:hi]
        ratio = np.sum(err**2) / np.sum(x.samples[:, lo:hi] ** 2)
        assert 10 * np.log10(ratio) <= -60.0

    def test_zero_spectra_silence(self):
        frames = [SpectralFrame(np.zeros((1, 513)), t, 1024, 48000) for t in range(4)]
        out = stft_synthesize(frames, 512)
        assert np.all(out.samples == 0)

    def test_single_frame_impulse(self):
        # an impulse mid-frame survives the window/unwindow round trip exactly
        x = np.zeros(1024)
        x[500] = 1.0
        frame = next(stft_analyze(AudioBuffer(x, 48000), 1024, 512))
        out = stft_synthesize([frame], 512)
        window = sqrt_hann_window(1024)
        # direct oracle: irfft of the frame is the windowed impulse
        np.testing.assert_allclose(np.fft.irfft(frame.bins[0]), window * x, atol=1e-12)
        np.testing.assert_allclose(out.samples[0, 500], 1.0, atol=1e-9)
        assert np.all(np.abs(np.delete(out.samples[0], 500)) < 1e-9)

    def test_mismatched_fft_size_rejected(self):
        frames = [SpectralFrame(np.zeros((1, 513)), 0, 1024, 48000),
                  SpectralFrame(np.zeros((1, 201)), 1, 400, 48000)]
        with pytest.raises(StreamError):
            stft_synthesize(frames, 512)

    def test_non_monotonic_frames_rejected(self):
        frames = [SpectralFrame(np.zeros((1, 513)), 1, 1024, 48000),
                  SpectralFrame(np.zeros((1, 513)), 0, 1024, 48000)]
        with pytest.raises(StreamError):
            stft_synthesize(frames, 512)

    def test_empty_stream_rejected(self):
        with pytest.raises(StreamError):
            stft_synthesize([], 512)


def test_window_cola_at_half_overlap():
    window = sqrt_hann_window(1024) ** 2
    total = np.zeros(2048)
    for t in range(3):
        total[t * 512 : t * 512 + 1024] += window
    np.testing.assert_allclose(total[1024:1536], 1.0, atol=1e-12)
