"""End-to-end orchestration: separation, post-filter, features, masks, metrics.

Frames stream stage to stage in order; per-source audio, feature and mask
files are only written once the whole stream processed cleanly, so a
failing run leaves no partial outputs.  Identical config and inputs give
byte-identical outputs.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import gss
from .audio import AudioBuffer, read_wav, resample_48k_to_16k, write_wav
from .config import PipelineConfig, serialize_config
from .errors import StreamError
from .features import extract_features, write_features_binary, write_features_csv
from .geometry import steering_matrix
from .masks import (align_to_feature_frames, compute_mask, mask_filterbank,
                    masks_from_records, write_mask_binary, write_mask_csv)
from .metrics import QualityReport, measure_quality
from .postfilter import PostFilter, PostFilterRecord
from .stft import SpectralFrame, stft_analyze, stft_synthesize

logger = logging.getLogger(__name__)


@dataclass
class StreamOutput:
    """Separated (and possibly post-filtered) frames plus their bookkeeping."""

    frames: list[SpectralFrame]
    records: list[PostFilterRecord]
    state: gss.SeparationState


def run_stages(mixture: AudioBuffer, config: PipelineConfig) -> StreamOutput:
    """Stream the mixture through separation and the optional post-filter."""
    geometry = config.geometry()
    sources = config.source_set()
    if mixture.num_channels != geometry.num_mics:
        raise StreamError(
            f"input has {mixture.num_channels} channels, geometry expects {geometry.num_mics}"
        )
    steering = steering_matrix(geometry, sources, config.fft_size)
    state = gss.init_delay_and_sum(steering, config.step_size)
    postfilter = None
    if config.stages.postfilter:
        postfilter = PostFilter(
            sources.num_sources,
            config.fft_size // 2 + 1,
            config.postfilter_config(),
            keep_diagnostics=config.dump_diagnostics,
        )

    frames: list[SpectralFrame] = []
    records: list[PostFilterRecord] = []
    for frame in stft_analyze(mixture, config.fft_size, config.shift):
        separated = gss.separate(state, frame)
        if config.stages.adapt:
            gss.adapt(state, frame)
        if postfilter is not None:
            separated, record = postfilter.process(separated)
            records.append(record)
        frames.append(separated)
    return StreamOutput(frames, records, state)


@dataclass
class PipelineResult:
    output_dir: str
    separated_48k: dict = field(default_factory=dict)
    separated_16k: dict = field(default_factory=dict)
    feature_files: dict = field(default_factory=dict)
    mask_files: dict = field(default_factory=dict)
    report_csv: str | None = None
    effective_config: str | None = None
    frames_processed: int = 0


def _log_run_header(config: PipelineConfig) -> None:
    logger.info(
        "run config: step_size=%g leak_factor=%g spectral_exponent=%g "
        "snr_smoothing=%g spectrum_smoothing=%g mask_threshold=%g "
        "fft=%d/%d feature_fft=%d/%d stages(adapt=%s postfilter=%s features=%s)",
        config.step_size, config.leak_factor, config.spectral_exponent,
        config.snr_smoothing, config.spectrum_smoothing, config.mask_threshold,
        config.fft_size, config.shift, config.feature_fft_size, config.feature_shift,
        config.stages.adapt, config.stages.postfilter, config.stages.features,
    )


def _dump_gss_state(path: str, state: gss.SeparationState) -> None:
    with open(path, "w") as fh:
        ids = state.source_ids
        header = ["bin"] + [f"w_{s}_{n}" for s in ids for n in range(state.num_mics)]
        fh.write(",".join(header) + "\n")
        magnitude = np.abs(state.demix)
        for k in range(magnitude.shape[0]):
            fh.write(f"{k}," + ",".join(f"{v:.6e}" for v in magnitude[k].ravel()) + "\n")


def _dump_postfilter_records(path: str, records: list[PostFilterRecord], source: int) -> None:
    with open(path, "w") as fh:
        fh.write("frame,bin,noise_stat,noise_leak,snr_prior,presence,gain\n")
        for record in records:
            if record.gain is None:
                continue
            for k in range(record.input_power.shape[1]):
                fh.write(
                    f"{record.frame_index},{k},{record.noise_stat[source, k]:.6e},"
                    f"{record.noise_leak[source, k]:.6e},{record.snr_prior[source, k]:.6e},"
                    f"{record.presence[source, k]:.6e},{record.gain[source, k]:.6e}\n"
                )


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run the configured stages over an input WAV and emit all artifacts."""
    config.validate()
    if not config.input_wav:
        raise StreamError("pipeline needs an input WAV (input_wav)")
    if not config.output_dir:
        raise StreamError("pipeline needs an output directory (output_dir)")

    mixture = read_wav(config.input_wav)
    references = [read_wav(p).channel(0) for p in config.reference_wavs]
    noise = read_wav(config.noise_wav).samples if config.noise_wav else None

    _log_run_header(config)
    output = run_stages(mixture, config)

    os.makedirs(config.output_dir, exist_ok=True)
    result = PipelineResult(output_dir=config.output_dir, frames_processed=len(output.frames))

    effective = os.path.join(config.output_dir, "effective_config.yaml")
    serialize_config(config, effective)
    result.effective_config = effective

    ids = output.state.source_ids
    separated = stft_synthesize(output.frames, config.shift) if output.frames else None
    per_source_16k: dict[str, AudioBuffer] = {}
    for m, source_id in enumerate(ids):
        if separated is None:
            continue
        mono = AudioBuffer(separated.samples[m], separated.rate)
        path48 = os.path.join(config.output_dir, f"{source_id}_48k.wav")
        write_wav(path48, mono)
        result.separated_48k[source_id] = path48

        mono16 = resample_48k_to_16k(mono)
        per_source_16k[source_id] = mono16
        path16 = os.path.join(config.output_dir, f"{source_id}_16k.wav")
        write_wav(path16, mono16)
        result.separated_16k[source_id] = path16

    if config.stages.features and separated is not None:
        bank48 = mask_filterbank(config.fft_size, config.rate)
        for m, source_id in enumerate(ids):
            features = extract_features(per_source_16k[source_id],
                                        fft_size=config.feature_fft_size,
                                        shift=config.feature_shift)
            csv_path = os.path.join(config.output_dir, f"{source_id}_features.csv")
            bin_path = os.path.join(config.output_dir, f"{source_id}_features.bin")
            write_features_csv(csv_path, features)
            write_features_binary(bin_path, features)
            result.feature_files[source_id] = {"csv": csv_path, "binary": bin_path}

            if output.records:
                mask = masks_from_records(output.records, m, bank48, config.mask_threshold)
                aligned = align_to_feature_frames(
                    mask, len(features),
                    feature_shift=config.feature_shift, feature_size=config.feature_fft_size,
                    mask_shift=config.shift, mask_size=config.fft_size,
                )
                mask_csv = os.path.join(config.output_dir, f"{source_id}_mask.csv")
                mask_bin = os.path.join(config.output_dir, f"{source_id}_mask.bin")
                write_mask_csv(mask_csv, aligned)
                write_mask_binary(mask_bin, aligned)
                result.mask_files[source_id] = {"csv": mask_csv, "binary": mask_bin}

    if config.dump_diagnostics:
        _dump_gss_state(os.path.join(config.output_dir, "gss_state.csv"), output.state)
        if output.records:
            for m, source_id in enumerate(ids):
                _dump_postfilter_records(
                    os.path.join(config.output_dir, f"{source_id}_postfilter.csv"),
                    output.records, m,
                )

    if references and separated is not None:
        # no per-mic clean images exist on the file interface, so only the
        # output-side ratios are reported here
        rows = measure_quality(
            [separated.samples[m] for m in range(len(ids))],
            references, noise, source_ids=ids,
        )
        stage = "gss+pf" if config.stages.postfilter else ("gss" if config.stages.adapt else "delay-and-sum")
        report = QualityReport({stage: rows})
        report_path = os.path.join(config.output_dir, "quality_report.csv")
        report.to_csv(report_path)
        result.report_csv = report_path

    return result


@dataclass
class BenchReport:
    audio_seconds: float
    wall_seconds: float
    frames: int
    real_time_factor: float | None

    def summary(self) -> str:
        if self.real_time_factor is None:
            return "bench: no frames processed"
        return (f"bench: {self.audio_seconds:.2f}s audio in {self.wall_seconds:.3f}s wall, "
                f"real-time factor {self.real_time_factor:.3f} over {self.frames} frames")


def bench_pipeline(mixture: AudioBuffer, config: PipelineConfig) -> BenchReport:
    """Time the separation + post-filter + mask-band stages, excluding file I/O."""
    geometry = config.geometry()
    sources = config.source_set()
    steering = steering_matrix(geometry, sources, config.fft_size)
    bank48 = mask_filterbank(config.fft_size, config.rate)

    state = gss.init_delay_and_sum(steering, config.step_size)
    postfilter = PostFilter(sources.num_sources, config.fft_size // 2 + 1,
                            config.postfilter_config())
    frames = 0
    band_rows = []
    start = time.perf_counter()
    for frame in stft_analyze(mixture, config.fft_size, config.shift):
        separated = gss.separate(state, frame)
        if config.stages.adapt:
            gss.adapt(state, frame)
        if config.stages.postfilter:
            separated, record = postfilter.process(separated)
            band_rows.append([
                compute_mask(
                    record.input_power[m] @ bank48.weights.T,
                    record.output_power[m] @ bank48.weights.T,
                    record.noise_stat[m] @ bank48.weights.T,
                    config.mask_threshold,
                )
                for m in range(record.input_power.shape[0])
            ])
        frames += 1
    wall = time.perf_counter() - start
    duration = mixture.duration
    rtf = (wall / duration) if frames else None
    return BenchReport(duration, wall, frames, rtf)
