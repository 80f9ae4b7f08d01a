"""Mel filterbank and the log-mel feature pipeline."""

import numpy as np
import pytest
from scipy import fft as sfft

from arraysep.audio import AudioBuffer
from arraysep.errors import ConfigError
from arraysep.features import (FeatureVector, MelFilterbank, delta_features,
                               extract_features, mel_energies, mel_from_hz,
                               read_features_binary, write_features_binary,
                               write_features_csv, zero_lifter)
from arraysep.stft import stft_analyze


@pytest.fixture(scope="module")
def bank():
    return MelFilterbank.build()


class TestFilterbank:
    def test_shapes(self, bank):
        assert bank.weights.shape == (24, 201)

    def test_centers_increase_on_mel_scale(self, bank):
        centers_hz = np.array([np.argmax(w) for w in bank.weights]) * 16000 / 400
        centers_mel = mel_from_hz(centers_hz)
        assert np.all(np.diff(centers_mel) > 0)

    def test_weights_nonnegative(self, bank):
        assert np.all(bank.weights >= 0)

    def test_interior_bins_covered(self, bank):
        coverage = bank.weights.sum(axis=0)
        first = np.flatnonzero(bank.weights[0])[0]
        last = np.flatnonzero(bank.weights[-1])[-1]
        assert np.all(coverage[first : last + 1] > 0)

    def test_same_bands_on_separation_grid(self):
        bank48 = MelFilterbank.build(fft_size=1024, rate=48000)
        assert bank48.weights.shape == (24, 513)
        # no weight above the 8 kHz band edge
        edge_bin = int(np.ceil(8000 / (48000 / 1024)))
        assert np.all(bank48.weights[:, edge_bin + 1 :] == 0)

    def test_band_edge_above_nyquist_rejected(self):
        with pytest.raises(ConfigError):
            MelFilterbank.build(rate=8000, high_hz=8000.0)


class TestMelEnergies:
    def test_zero_spectrum(self, bank):
        np.testing.assert_array_equal(mel_energies(np.zeros(201), bank), np.zeros(24))

    def test_flat_spectrum_equals_weight_sums(self, bank):
        oracle = np.array([w.sum() for w in bank.weights])
        np.testing.assert_allclose(mel_energies(np.ones(201), bank), oracle, rtol=1e-12)

    def test_single_bin_impulse_hits_covering_filters(self, bank):
        spectrum = np.zeros(201)
        spectrum[60] = 2.0
        energies = mel_energies(spectrum, bank)
        covering = np.flatnonzero(bank.weights[:, 60])
        assert 1 <= len(covering) <= 2
        np.testing.assert_allclose(energies[covering], 2.0 * bank.weights[covering, 60])
        others = np.delete(energies, covering)
        assert np.all(others == 0)

    def test_grid_mismatch_rejected(self, bank):
        with pytest.raises(ConfigError):
            mel_energies(np.ones(513), bank)


def noise_utterance(seed=0, seconds=1.0, scale=0.1):
    rng = np.random.default_rng(seed)
    return AudioBuffer(rng.standard_normal(int(16000 * seconds)) * scale, 16000)


class TestPipeline:
    def test_requires_16k_mono(self):
        with pytest.raises(ConfigError):
            extract_features(AudioBuffer(np.zeros(48000), 48000))
        with pytest.raises(ConfigError):
            extract_features(AudioBuffer(np.zeros((2, 16000)), 16000))

    def test_transform_identity_without_lifter_and_cms(self, bank):
        utterance = noise_utterance(1)
        raw = extract_features(utterance, lifter=False, mean_subtract=False)
        power = np.stack([np.abs(f.bins[0]) ** 2
                          for f in stft_analyze(utterance, 400, 160)])
        energies = mel_energies(power, bank)
        floor = max(energies.max() * 1e-5, 1e-30)
        log_mel = np.log(np.maximum(energies, floor))
        got = np.stack([f.static for f in raw])
        assert np.abs(got - log_mel).max() < 1e-10

    def test_constant_spectrum_gives_zero_statics(self):
        t = np.arange(16000) / 16000
        tone = AudioBuffer(0.3 * np.sin(2 * np.pi * 1000.0 * t), 16000)
        features = extract_features(tone)
        middle = features[len(features) // 2]
        assert np.abs(middle.static).max() < 1e-8

    def test_gain_invariance(self):
        utterance = noise_utterance(2)
        louder = AudioBuffer(utterance.samples * 10 ** (12 / 20), 16000)
        for a, b in zip(extract_features(utterance), extract_features(louder)):
            np.testing.assert_allclose(a.static, b.static, atol=1e-8)

    def test_determinism(self):
        utterance = noise_utterance(3)
        first = extract_features(utterance)
        second = extract_features(utterance)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.static, b.static)
            np.testing.assert_array_equal(a.delta, b.delta)

    def test_short_utterance_flagged(self):
        short = AudioBuffer(np.random.default_rng(4).standard_normal(400 + 3 * 160) * 0.1,
                            16000)
        with pytest.warns(UserWarning):
            features = extract_features(short)
        assert features
        assert not any(f.has_delta for f in features)
        assert all(np.all(f.delta == 0) for f in features)

    def test_delta_context_flags(self):
        features = extract_features(noise_utterance(5))
        flags = [f.has_delta for f in features]
        assert flags[:2] == [False, False] and flags[-2:] == [False, False]
        assert all(flags[2:-2])


class TestLifterAndDeltas:
    def test_lifter_idempotent(self):
        rng = np.random.default_rng(6)
        cepstra = rng.standard_normal((7, 24))
        once = zero_lifter(cepstra)
        np.testing.assert_array_equal(zero_lifter(once), once)
        assert np.all(once[:, 0] == 0)
        assert np.all(once[:, 13:] == 0)

    def test_dct_idct_orthogonal(self):
        rng = np.random.default_rng(7)
        values = rng.standard_normal((5, 24))
        back = sfft.idct(sfft.dct(values, type=2, norm="ortho", axis=1),
                         type=2, norm="ortho", axis=1)
        assert np.abs(back - values).max() < 1e-10

    def test_time_reversal_antisymmetry(self):
        rng = np.random.default_rng(8)
        static = rng.standard_normal((30, 24))
        forward, valid = delta_features(static)
        backward, _ = delta_features(static[::-1])
        np.testing.assert_allclose(backward[::-1][valid], -forward[valid], atol=1e-12)

    def test_regression_weights(self):
        ramp = np.outer(np.arange(10, dtype=float), np.ones(24))
        deltas, valid = delta_features(ramp)
        np.testing.assert_allclose(deltas[valid], 1.0)


class TestFeatureFiles:
    def test_binary_round_trip(self, tmp_path):
        features = extract_features(noise_utterance(9, seconds=0.5))
        path = str(tmp_path / "f.bin")
        write_features_binary(path, features)
        loaded = read_features_binary(path)
        assert len(loaded) == len(features)
        for a, b in zip(features, loaded):
            assert a.frame_index == b.frame_index
            assert a.has_delta == b.has_delta
            np.testing.assert_allclose(a.static, b.static, rtol=1e-6, atol=1e-6)
            np.testing.assert_allclose(a.delta, b.delta, rtol=1e-6, atol=1e-6)

    def test_csv_header_and_rows(self, tmp_path):
        features = extract_features(noise_utterance(10, seconds=0.5))
        path = str(tmp_path / "f.csv")
        write_features_csv(path, features)
        lines = open(path).read().splitlines()
        assert lines[0].startswith("frame,has_delta,static_0")
        assert len(lines) == len(features) + 1
        assert len(lines[1].split(",")) == 2 + 48
