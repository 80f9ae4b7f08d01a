"""Per-source spectral post-filter for separated streams.

For every separated channel the noise variance is the sum of a stationary
estimate (minima-controlled recursive averaging) and a leakage estimate (a
fixed fraction of the other channels' smoothed spectra).  An MMSE
spectral-amplitude gain, weighted by a per-bin speech presence
probability, is then applied.  With one source, or a zero leak factor,
each channel reduces exactly to an independent single-channel suppressor.

Per-bin input power, output power and stationary-noise level are recorded
each frame; the mask stage consumes them without recomputing any gains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import StreamError
from .stft import SpectralFrame

_TINY = 1e-30


@dataclass
class McraConfig:
    """Minima-controlled recursive averaging constants (all tunable).

    ``power_smoothing`` governs the noise recursion itself;
    ``tracking_smoothing`` is the faster smoother feeding the minimum
    tracker, which must decay to the floor within sub-second speech pauses.
    """

    power_smoothing: float = 0.95
    window_length: int = 150
    presence_smoothing: float = 0.95
    onset_threshold: float = 5.0
    tracking_smoothing: float = 0.8


@dataclass
class PostFilterConfig:
    leak_factor: float = 0.25        # power fraction of rival spectra (about -6 dB)
    spectral_exponent: float = 1.0   # amplitude power the MMSE estimator optimizes
    snr_smoothing: float = 0.98      # decision-directed weight on the previous frame
    spectrum_smoothing: float = 0.7  # leakage reference smoother
    gain_floor: float = 0.001
    gain_max: float = 1.0
    q_low_db: float = -10.0          # absence-prior ramp endpoints on prior SNR
    q_high_db: float = 5.0
    q_floor: float = 0.02
    q_ceiling: float = 0.98
    upsilon_max: float = 30.0        # clamp inside exp(-upsilon)
    mcra: McraConfig = field(default_factory=McraConfig)


class McraEstimator:
    """Stationary noise floor tracker for one source.

    Smoothed power is compared against its tracked minimum; a ratio above
    the onset threshold freezes the noise recursion instantly, and the
    smoothed presence score releases it gradually once the transient ends.
    Transients therefore barely leak into the floor while stationary noise
    converges within a couple of tracking windows.
    """

    def __init__(self, num_bins: int, config: McraConfig | None = None):
        self.config = config or McraConfig()
        self.noise = np.zeros(num_bins)
        self._smoothed = np.zeros(num_bins)
        self._minimum = np.zeros(num_bins)
        self._scratch = np.zeros(num_bins)
        self._presence = np.zeros(num_bins)
        self._frames_seen = 0

    def update(self, power: np.ndarray) -> np.ndarray:
        cfg = self.config
        if self._frames_seen == 0:
            self._smoothed = power.copy()
            self._minimum = power.copy()
            self._scratch = power.copy()
            self.noise = power.copy()
            self._frames_seen = 1
            return self.noise

        a = cfg.power_smoothing
        at = cfg.tracking_smoothing
        self._smoothed = at * self._smoothed + (1.0 - at) * power
        if self._frames_seen % cfg.window_length == 0:
            self._minimum = np.minimum(self._scratch, self._smoothed)
            self._scratch = self._smoothed.copy()
        else:
            self._minimum = np.minimum(self._minimum, self._smoothed)
            self._scratch = np.minimum(self._scratch, self._smoothed)

        onset = self._smoothed > cfg.onset_threshold * np.maximum(self._minimum, _TINY)
        ap = cfg.presence_smoothing
        self._presence = ap * self._presence + (1.0 - ap) * onset
        hold = np.maximum(self._presence, onset)  # instant freeze, smoothed release
        retain = a + (1.0 - a) * hold
        self.noise = retain * self.noise + (1.0 - retain) * power
        self._frames_seen += 1
        return self.noise


class NoiseState:
    """Stationary plus leakage noise variances for all sources.

    Leakage couples the sources through their smoothed spectra, so a frame
    update refreshes every smoothed spectrum before any leakage estimate
    is read (the update order within one frame is: smooth all, track all,
    then sum leakage).
    """

    def __init__(self, num_sources: int, num_bins: int, leak_factor: float = 0.25,
                 spectrum_smoothing: float = 0.7, mcra: McraConfig | None = None):
        self.leak_factor = leak_factor
        self.spectrum_smoothing = spectrum_smoothing
        self.smoothed = np.zeros((num_sources, num_bins))
        self.stationary = np.zeros((num_sources, num_bins))
        self.leakage = np.zeros((num_sources, num_bins))
        self.total = np.zeros((num_sources, num_bins))
        self._mcra = [McraEstimator(num_bins, mcra) for _ in range(num_sources)]

    @property
    def num_sources(self) -> int:
        return self.smoothed.shape[0]

    def smooth_spectrum(self, source: int, power: np.ndarray) -> np.ndarray:
        a = self.spectrum_smoothing
        self.smoothed[source] = a * self.smoothed[source] + (1.0 - a) * power
        return self.smoothed[source]

    def mcra_update(self, source: int, power: np.ndarray) -> np.ndarray:
        self.stationary[source] = self._mcra[source].update(power)
        return self.stationary[source]

    def leakage_estimate(self, source: int) -> np.ndarray:
        others = [i for i in range(self.num_sources) if i != source]
        if not others:
            return np.zeros_like(self.smoothed[source])
        return self.leak_factor * np.sum(self.smoothed[others], axis=0)

    def update(self, power: np.ndarray) -> np.ndarray:
        """Advance one frame; ``power`` is (num_sources, num_bins).  Returns total."""
        if power.shape != self.smoothed.shape:
            raise StreamError(
                f"noise update expects {self.smoothed.shape}, got {power.shape}"
            )
        for m in range(self.num_sources):
            self.smooth_spectrum(m, power[m])
        for m in range(self.num_sources):
            self.mcra_update(m, power[m])
        for m in range(self.num_sources):
            self.leakage[m] = self.leakage_estimate(m)
        self.total = self.stationary + self.leakage
        return self.total


def _kummer_series(a: float, c: float, x: float, rtol: float = 1e-12, max_terms: int = 200) -> float:
    # Plain power series; callers guarantee x >= 0 so every term is positive.
    term = 1.0
    total = 1.0
    for n in range(max_terms):
        term *= (a + n) * x / ((c + n) * (n + 1.0))
        total += term
        if abs(term) <= rtol * abs(total):
            break
    return total


def confluent_m(a: float, c: float, x: float) -> float:
    """Truncated-series confluent hypergeometric M(a; c; x).

    Negative arguments go through the Kummer transform so the summed series
    has positive terms only.
    """
    if x < 0:
        return math.exp(x) * _kummer_series(c - a, c, -x)
    return _kummer_series(a, c, x)


def _gain_core(snr_prior: np.ndarray, snr_post: np.ndarray, exponent: float,
               gain_max: float, fault_gain: float) -> tuple[np.ndarray, int]:
    xi = np.asarray(snr_prior, dtype=np.float64)
    gamma = np.asarray(snr_post, dtype=np.float64)
    upsilon = gamma * xi / (1.0 + xi)

    gain = np.zeros_like(upsilon)
    active = upsilon > 0
    if np.any(active):
        u = upsilon[active]
        g = gamma[active]
        if exponent == 1.0:
            # Scaled-Bessel evaluation of the spectral-amplitude estimator:
            # Gamma(1.5) * (sqrt(u)/g) * exp(-u/2) * ((1+u) I0(u/2) + u I1(u/2)),
            # stable for arbitrarily large u.
            bessel = (1.0 + u) * special.ive(0, u / 2.0) + u * special.ive(1, u / 2.0)
            gain[active] = (math.sqrt(math.pi) / 2.0) * np.sqrt(u) / g * bessel
        elif exponent == 2.0:
            # The series truncates: M(-1; 1; -u) = 1 + u.
            gain[active] = np.sqrt(u) / g * np.sqrt(1.0 + u)
        else:
            scale = special.gamma(1.0 + exponent / 2.0)
            values = np.empty_like(u)
            for i, ui in enumerate(u):
                if ui > 600.0:
                    # Large-argument limit of the bracket is sqrt(u): Wiener-like gain.
                    values[i] = math.sqrt(ui)
                else:
                    values[i] = (scale * confluent_m(-exponent / 2.0, 1.0, -ui)) ** (1.0 / exponent)
            gain[active] = np.sqrt(u) / g * values

    bad = ~np.isfinite(gain)
    faults = int(np.count_nonzero(bad))
    if faults:
        gain = np.where(bad, fault_gain, gain)
    return np.clip(gain, 0.0, gain_max), faults


def mmse_gain(snr_prior: np.ndarray, snr_post: np.ndarray, exponent: float = 1.0,
              gain_max: float = 1.0, fault_gain: float = 0.001) -> np.ndarray:
    """Spectral gain under the speech-present hypothesis, clamped to [0, gain_max].

    Non-finite intermediates fall back to ``fault_gain``; use PostFilter for
    incident counting.
    """
    return _gain_core(snr_prior, snr_post, exponent, gain_max, fault_gain)[0]


def decision_directed_snr(prev_gain: np.ndarray, prev_snr_post: np.ndarray,
                          snr_post: np.ndarray, smoothing: float = 0.98) -> np.ndarray:
    """Recursive prior-SNR estimate mixing the previous clean estimate with the
    current instantaneous one."""
    instantaneous = np.maximum(snr_post - 1.0, 0.0)
    return smoothing * prev_gain * prev_gain * prev_snr_post + (1.0 - smoothing) * instantaneous


def _window_mean(values: np.ndarray, halfwidth: int) -> np.ndarray:
    if halfwidth <= 0:
        return values.copy()
    kernel = np.ones(2 * halfwidth + 1)
    num = np.convolve(values, kernel, mode="same")
    den = np.convolve(np.ones_like(values), kernel, mode="same")
    return num / den


def _snr_ramp(snr: np.ndarray, low_db: float, high_db: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        snr_db = 10.0 * np.log10(np.maximum(snr, 0.0))
    return np.clip((snr_db - low_db) / (high_db - low_db), 0.0, 1.0)


def speech_absence_prior(snr_prior: np.ndarray, config: PostFilterConfig | None = None) -> np.ndarray:
    """A-priori probability that speech is absent, per bin.

    Three prior-SNR aggregates (local +-1 bin, broad +-15 bins, whole frame)
    each pass through a dB-linear ramp; their product is the presence
    evidence and the prior is its complement, kept inside
    [q_floor, q_ceiling].
    """
    cfg = config or PostFilterConfig()
    local = _snr_ramp(_window_mean(snr_prior, 1), cfg.q_low_db, cfg.q_high_db)
    broad = _snr_ramp(_window_mean(snr_prior, 15), cfg.q_low_db, cfg.q_high_db)
    frame = _snr_ramp(np.full_like(snr_prior, np.mean(snr_prior)), cfg.q_low_db, cfg.q_high_db)
    q = 1.0 - local * broad * frame
    return np.clip(q, cfg.q_floor, cfg.q_ceiling)


def speech_presence_prob(absence_prior: np.ndarray, snr_prior: np.ndarray,
                         upsilon: np.ndarray, upsilon_max: float = 30.0) -> np.ndarray:
    """Per-bin posterior speech presence; an absence prior of 1 maps to 0."""
    q = np.asarray(absence_prior, dtype=np.float64)
    certain_absent = q >= 1.0
    q_safe = np.where(certain_absent, 0.5, q)
    odds = q_safe / (1.0 - q_safe)
    p = 1.0 / (1.0 + odds * (1.0 + snr_prior) * np.exp(-np.minimum(upsilon, upsilon_max)))
    return np.where(certain_absent, 0.0, p)


@dataclass
class PostFilterRecord:
    """Per-frame bookkeeping consumed by the mask stage and diagnostics."""

    frame_index: int
    input_power: np.ndarray   # (M, n_bins)
    output_power: np.ndarray
    noise_stat: np.ndarray
    noise_leak: np.ndarray | None = None
    snr_prior: np.ndarray | None = None
    presence: np.ndarray | None = None
    gain: np.ndarray | None = None


class GainState:
    """Previous-frame gain and posterior SNR, per source and bin."""

    def __init__(self, num_sources: int, num_bins: int, config: PostFilterConfig):
        self.config = config
        self.prev_gain = np.zeros((num_sources, num_bins))
        self.prev_snr_post = np.zeros((num_sources, num_bins))
        self.fault_count = 0


class PostFilter:
    """Streaming multi-source suppressor operating on separated frames."""

    def __init__(self, num_sources: int, num_bins: int,
                 config: PostFilterConfig | None = None, keep_diagnostics: bool = False):
        self.config = config or PostFilterConfig()
        self.noise = NoiseState(
            num_sources, num_bins,
            leak_factor=self.config.leak_factor,
            spectrum_smoothing=self.config.spectrum_smoothing,
            mcra=self.config.mcra,
        )
        self.gains = GainState(num_sources, num_bins, self.config)
        self.keep_diagnostics = keep_diagnostics

    def process(self, frame: SpectralFrame) -> tuple[SpectralFrame, PostFilterRecord]:
        cfg = self.config
        bins = frame.bins
        if bins.shape != self.noise.smoothed.shape:
            raise StreamError(
                f"frame {frame.frame_index}: shape {bins.shape}, "
                f"post-filter expects {self.noise.smoothed.shape}"
            )
        power = np.abs(bins) ** 2

        noise_total = self.noise.update(power)
        snr_post = power / np.maximum(noise_total, _TINY)
        snr_prior = decision_directed_snr(
            self.gains.prev_gain, self.gains.prev_snr_post, snr_post, cfg.snr_smoothing
        )
        upsilon = snr_post * snr_prior / (1.0 + snr_prior)

        gain_h1, faults = _gain_core(
            snr_prior, snr_post, cfg.spectral_exponent, cfg.gain_max, cfg.gain_floor
        )
        self.gains.fault_count += faults

        presence = np.empty_like(gain_h1)
        for m in range(bins.shape[0]):  # absence prior aggregates bins per source
            q = speech_absence_prior(snr_prior[m], cfg)
            presence[m] = speech_presence_prob(q, snr_prior[m], upsilon[m], cfg.upsilon_max)

        gain = np.clip(
            presence ** (1.0 / cfg.spectral_exponent) * gain_h1, cfg.gain_floor, cfg.gain_max
        )
        out_bins = gain * bins

        self.gains.prev_gain = gain_h1
        self.gains.prev_snr_post = snr_post

        record = PostFilterRecord(
            frame_index=frame.frame_index,
            input_power=power,
            output_power=np.abs(out_bins) ** 2,
            noise_stat=self.noise.stationary.copy(),
        )
        if self.keep_diagnostics:
            record.noise_leak = self.noise.leakage.copy()
            record.snr_prior = snr_prior
            record.presence = presence
            record.gain = gain
        out = SpectralFrame(out_bins, frame.frame_index, frame.fft_size, frame.rate)
        return out, record
