"""Per-band reliability masks derived from post-filter bookkeeping.

A band is reliable when the post-filter kept most of its energy or when
the stationary-noise estimate explains it (silence stays reliable).  The
band powers come from the separation-side 48 kHz/1024 grid, integrated by
the same 0-8 kHz mel bands the feature pipeline uses, so masks and
features agree band-wise without a second analysis pass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import AudioIOError, ConfigError
from .features import NUM_BANDS, MelFilterbank, mel_energies
from .postfilter import PostFilterRecord

DEFAULT_THRESHOLD = 0.25
# Bands carrying less than this fraction of the frame's total band energy
# count as silence and stay reliable.
SILENCE_FLOOR = 1e-10


def mask_filterbank(fft_size: int = 1024, rate: int = 48000) -> MelFilterbank:
    """The feature mel bands evaluated on the separation FFT grid."""
    return MelFilterbank.build(num_bands=NUM_BANDS, fft_size=fft_size, rate=rate)


def compute_mask(band_in: np.ndarray, band_out: np.ndarray, band_noise: np.ndarray,
                 threshold: float = DEFAULT_THRESHOLD,
                 silence_floor: float = SILENCE_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Continuous and binary reliability for one frame of band energies.

    The continuous value is (output + stationary noise) / input; the binary
    mask is its comparison against ``threshold``.  Bands whose input energy
    falls under ``silence_floor`` times the frame total are forced reliable
    with a continuous value of 1.
    """
    band_in = np.asarray(band_in, dtype=np.float64)
    floor = silence_floor * band_in.sum()
    silent = band_in <= floor
    safe_in = np.where(silent, 1.0, band_in)
    continuous = np.where(silent, 1.0, (band_out + band_noise) / safe_in)
    binary = continuous > threshold
    return continuous, binary


def delta_mask(static_rows: np.ndarray) -> np.ndarray:
    """Reliability of a regression delta: all five contributing frames reliable.

    ``static_rows`` is (5, bands) centered on the frame of interest.
    """
    rows = np.asarray(static_rows)
    if rows.shape[0] != 5:
        raise ConfigError(f"delta mask needs 5 consecutive rows, got {rows.shape[0]}")
    return np.prod(rows.astype(np.uint8), axis=0).astype(bool)


@dataclass
class MaskMatrix:
    """Frame-by-band reliability: continuous values plus static/delta bits."""

    continuous: np.ndarray  # (n_frames, bands) float
    static: np.ndarray      # (n_frames, bands) bool
    delta: np.ndarray       # (n_frames, bands) bool
    threshold: float

    @property
    def num_frames(self) -> int:
        return self.continuous.shape[0]


def masks_from_records(records: list[PostFilterRecord], source: int,
                       bank: MelFilterbank | None = None,
                       threshold: float = DEFAULT_THRESHOLD) -> MaskMatrix:
    """Build the mask matrix for one separated source from post-filter records."""
    if bank is None:
        bank = mask_filterbank()
    n_frames = len(records)
    continuous = np.ones((n_frames, bank.num_bands))
    static = np.ones((n_frames, bank.num_bands), dtype=bool)
    for t, record in enumerate(records):
        band_in = mel_energies(record.input_power[source], bank)
        band_out = mel_energies(record.output_power[source], bank)
        band_noise = mel_energies(record.noise_stat[source], bank)
        continuous[t], static[t] = compute_mask(band_in, band_out, band_noise, threshold)

    delta = np.zeros_like(static)
    for t in range(2, n_frames - 2):  # boundary frames keep delta = 0
        delta[t] = delta_mask(static[t - 2 : t + 3])
    return MaskMatrix(continuous, static, delta, threshold)


def align_to_feature_frames(mask: MaskMatrix, num_feature_frames: int,
                            feature_shift: int = 160, feature_size: int = 400,
                            feature_rate: int = 16000, mask_shift: int = 512,
                            mask_size: int = 1024, mask_rate: int = 48000) -> MaskMatrix:
    """Resample mask rows onto the feature frame grid by nearest center time.

    The separation and feature pipelines run at slightly different frame
    rates (93.75 vs 100 frames/s); band-aligned masks tolerate this
    nearest-neighbour mapping.
    """
    if mask.num_frames == 0:
        empty = np.zeros((0, mask.continuous.shape[1]))
        return MaskMatrix(empty, empty.astype(bool), empty.astype(bool), mask.threshold)
    feature_centers = (np.arange(num_feature_frames) * feature_shift + feature_size / 2) / feature_rate
    mask_centers = (np.arange(mask.num_frames) * mask_shift + mask_size / 2) / mask_rate
    nearest = np.searchsorted(mask_centers, feature_centers)
    nearest = np.clip(nearest, 0, mask.num_frames - 1)
    left = np.maximum(nearest - 1, 0)
    use_left = np.abs(mask_centers[left] - feature_centers) <= np.abs(mask_centers[nearest] - feature_centers)
    rows = np.where(use_left, left, nearest)
    return MaskMatrix(mask.continuous[rows], mask.static[rows], mask.delta[rows], mask.threshold)


# --------------------------------------------------------------------------
# Mask files: CSV and a packed little-endian binary variant.
#
# Binary layout: magic b"MASK", u32 version(=1), u32 frame count, u16 band
# count, 2 pad bytes; then per frame: u32 frame index, f32[bands]
# continuous, u32 static bitmask, u32 delta bitmask (bit i = band i).
# --------------------------------------------------------------------------

_MASK_MAGIC = b"MASK"
_MASK_VERSION = 1


def _pack_bits(row: np.ndarray) -> int:
    return int(sum(1 << i for i, bit in enumerate(row) if bit))


def write_mask_csv(path: str, mask: MaskMatrix) -> None:
    try:
        with open(path, "w") as fh:
            bands = mask.continuous.shape[1]
            names = ([f"m_{i}" for i in range(bands)]
                     + [f"static_{i}" for i in range(bands)]
                     + [f"delta_{i}" for i in range(bands)])
            fh.write("frame," + ",".join(names) + "\n")
            for t in range(mask.num_frames):
                row = ([f"{v:.9e}" for v in mask.continuous[t]]
                       + [str(int(v)) for v in mask.static[t]]
                       + [str(int(v)) for v in mask.delta[t]])
                fh.write(f"{t}," + ",".join(row) + "\n")
    except OSError as exc:
        raise AudioIOError(f"cannot write mask file {path}: {exc}") from exc


def write_mask_binary(path: str, mask: MaskMatrix) -> None:
    try:
        with open(path, "wb") as fh:
            bands = mask.continuous.shape[1]
            fh.write(_MASK_MAGIC)
            fh.write(struct.pack("<IIH2x", _MASK_VERSION, mask.num_frames, bands))
            for t in range(mask.num_frames):
                fh.write(struct.pack("<I", t))
                fh.write(mask.continuous[t].astype("<f4").tobytes())
                fh.write(struct.pack("<II", _pack_bits(mask.static[t]), _pack_bits(mask.delta[t])))
    except OSError as exc:
        raise AudioIOError(f"cannot write mask file {path}: {exc}") from exc


def read_mask_binary(path: str) -> MaskMatrix:
    try:
        with open(path, "rb") as fh:
            if fh.read(4) != _MASK_MAGIC:
                raise AudioIOError(f"{path}: not a mask file")
            version, count, bands = struct.unpack("<IIH2x", fh.read(12))
            if version != _MASK_VERSION:
                raise AudioIOError(f"{path}: unsupported mask file version {version}")
            continuous = np.zeros((count, bands))
            static = np.zeros((count, bands), dtype=bool)
            delta = np.zeros((count, bands), dtype=bool)
            for t in range(count):
                struct.unpack("<I", fh.read(4))
                continuous[t] = np.frombuffer(fh.read(4 * bands), dtype="<f4")
                static_bits, delta_bits = struct.unpack("<II", fh.read(8))
                static[t] = [(static_bits >> i) & 1 for i in range(bands)]
                delta[t] = [(delta_bits >> i) & 1 for i in range(bands)]
            return MaskMatrix(continuous, static, delta, DEFAULT_THRESHOLD)
    except OSError as exc:
        raise AudioIOError(f"cannot read mask file {path}: {exc}") from exc
