"""Windowed STFT analysis and overlap-add synthesis.

One implementation serves both pipeline configurations: 1024/512 at 48 kHz
for separation and 400/160 at 16 kHz for features.  Half spectra only;
frame t covers samples [t*shift, t*shift + fft_size), no centering pad, so
analysis/synthesis round trips carry no latency.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .audio import AudioBuffer
from .errors import ConfigError, StreamError


@dataclass
class SpectralFrame:
    """Half spectrum for one analysis frame: ``bins`` is (channels, fft_size // 2 + 1)."""

    bins: np.ndarray
    frame_index: int
    fft_size: int
    rate: int

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim == 1:
            self.bins = self.bins[np.newaxis, :]
        expected = self.fft_size // 2 + 1
        if self.bins.shape[1] != expected:
            raise StreamError(
                f"frame {self.frame_index}: {self.bins.shape[1]} bins, expected {expected}"
            )

    @property
    def num_channels(self) -> int:
        return self.bins.shape[0]


def sqrt_hann_window(size: int) -> np.ndarray:
    """Periodic square-root Hann taper; self-paired it is COLA at 50% overlap."""
    n = np.arange(size)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / size))


def stft_analyze(
    audio: AudioBuffer,
    fft_size: int,
    shift: int,
    window: np.ndarray | None = None,
) -> Iterator[SpectralFrame]:
    """Yield windowed half-spectrum frames from ``audio``.

    Frame t covers samples [t*shift, t*shift + fft_size); trailing samples
    that do not fill a frame are dropped.
    """
    if fft_size % 2 != 0:
        raise ConfigError(f"fft_size must be even, got {fft_size}")
    if not 0 < shift <= fft_size:
        raise ConfigError(f"shift must satisfy 0 < shift <= fft_size, got {shift}")
    if window is None:
        window = sqrt_hann_window(fft_size)
    if len(window) != fft_size:
        raise ConfigError("window length must equal fft_size")

    samples = audio.samples
    num_frames = max(0, (samples.shape[1] - fft_size) // shift + 1)
    for t in range(num_frames):
        start = t * shift
        segment = samples[:, start : start + fft_size] * window[np.newaxis, :]
        yield SpectralFrame(np.fft.rfft(segment, axis=1), t, fft_size, audio.rate)


def stft_synthesize(
    frames: Iterable[SpectralFrame],
    shift: int,
    window: np.ndarray | None = None,
) -> AudioBuffer:
    """Overlap-add synthesis, normalized by the accumulated window product.

    Assumes the analysis used the same taper, so dividing by the summed
    squared window makes interior samples exact for any shift where that
    sum stays positive.
    """
    frame_list = list(frames)
    if not frame_list:
        raise StreamError("cannot synthesize from an empty frame stream")

    fft_size = frame_list[0].fft_size
    rate = frame_list[0].rate
    channels = frame_list[0].num_channels
    if window is None:
        window = sqrt_hann_window(fft_size)
    if len(window) != fft_size:
        raise ConfigError("window length must equal fft_size")

    last_index = None
    for frame in frame_list:
        if frame.fft_size != fft_size or frame.rate != rate:
            raise StreamError(
                f"frame {frame.frame_index}: fft_size/rate changed mid-stream"
            )
        if frame.num_channels != channels:
            raise StreamError(f"frame {frame.frame_index}: channel count changed")
        if last_index is not None and frame.frame_index <= last_index:
            raise StreamError(f"frame index {frame.frame_index} not increasing")
        last_index = frame.frame_index

    num_samples = (len(frame_list) - 1) * shift + fft_size
    out = np.zeros((channels, num_samples))
    norm = np.zeros(num_samples)
    window_sq = window * window
    for t, frame in enumerate(frame_list):
        start = t * shift
        out[:, start : start + fft_size] += np.fft.irfft(frame.bins, n=fft_size, axis=1) * window
        norm[start : start + fft_size] += window_sq
    positive = norm > 1e-10
    out[:, positive] /= norm[positive]
    return AudioBuffer(out, rate)


def frame_count(num_samples: int, fft_size: int, shift: int) -> int:
    """Number of frames stft_analyze emits for an input of ``num_samples``."""
    return max(0, (num_samples - fft_size) // shift + 1)
