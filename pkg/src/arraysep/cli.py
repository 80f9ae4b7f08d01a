"""Command-line entry points.

Subcommands compose the pipeline stages so each is exercisable alone:

  separate   run GSS (+ post-filter, features, masks) over a WAV
  features   extract log-mel features from a single WAV
  score      measure separation quality against clean references
  simulate   render a deterministic test scene to WAV files
  bench      report the real-time factor of the processing stages

Failures exit with distinct codes: 2 config, 3 file I/O, 4 stream shape,
5 over-determined scene.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .audio import AudioBuffer, read_wav, resample_48k_to_16k, write_wav
from .config import (PipelineConfig, parse_config, parse_scene_file,
                     write_scene_file)
from .errors import ArraySepError, AudioIOError, ConfigError
from .features import extract_features, write_features_binary, write_features_csv
from .metrics import QualityReport, measure_quality
from .pipeline import bench_pipeline, run_pipeline
from .simulate import preset_names, preset_scene, synthesize


def _add_separate(subparsers) -> None:
    p = subparsers.add_parser("separate", help="run the separation pipeline over a WAV")
    p.add_argument("--config", required=True, help="pipeline config YAML")
    p.add_argument("--input", help="override input WAV")
    p.add_argument("--output-dir", help="override output directory")
    p.add_argument("--step-size", type=float, help="separation adaptation rate")
    p.add_argument("--leak-factor", type=float, help="post-filter leakage fraction")
    p.add_argument("--spectral-exponent", type=float, help="MMSE amplitude exponent")
    p.add_argument("--mask-threshold", type=float, help="reliability threshold")
    p.add_argument("--no-adapt", action="store_true", help="hold delay-and-sum weights")
    p.add_argument("--no-postfilter", action="store_true")
    p.add_argument("--no-features", action="store_true")
    p.add_argument("--dump-diagnostics", action="store_true",
                   help="write demix and post-filter CSV dumps")
    p.set_defaults(func=_cmd_separate)


def _apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.input:
        config.input_wav = args.input
    if args.output_dir:
        config.output_dir = args.output_dir
    for name in ("step_size", "leak_factor", "spectral_exponent", "mask_threshold"):
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    if args.no_adapt:
        config.stages.adapt = False
    if args.no_postfilter:
        config.stages.postfilter = False
    if args.no_features:
        config.stages.features = False
    if args.dump_diagnostics:
        config.dump_diagnostics = True
    return config.validate()


def _cmd_separate(args: argparse.Namespace) -> int:
    config = _apply_overrides(parse_config(args.config), args)
    result = run_pipeline(config)
    print(f"processed {result.frames_processed} frames into {result.output_dir}")
    for source_id, path in result.separated_48k.items():
        print(f"  {source_id}: {path}")
    if result.report_csv:
        print(f"  quality report: {result.report_csv}")
    return 0


def _cmd_features(args: argparse.Namespace) -> int:
    audio = read_wav(args.input)
    if audio.num_channels != 1:
        raise ConfigError("features expects a mono WAV; separate the mixture first")
    if audio.rate == 48000:
        audio = resample_48k_to_16k(audio)
    features = extract_features(audio)
    os.makedirs(args.output_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.input))[0]
    csv_path = os.path.join(args.output_dir, f"{stem}_features.csv")
    bin_path = os.path.join(args.output_dir, f"{stem}_features.bin")
    write_features_csv(csv_path, features)
    write_features_binary(bin_path, features)
    print(f"{len(features)} frames -> {csv_path}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    if len(args.output) != len(args.reference):
        raise ConfigError("need one reference per separated output")
    outputs = [read_wav(p).channel(0) for p in args.output]
    references = [read_wav(p).channel(0) for p in args.reference]
    noise = read_wav(args.noise).samples if args.noise else None
    ids = [os.path.splitext(os.path.basename(p))[0] for p in args.output]
    rows = measure_quality(outputs, references, noise, source_ids=ids)
    report = QualityReport({args.stage: rows})
    if args.csv:
        report.to_csv(args.csv)
        print(f"wrote {args.csv}")
    for row in rows:
        sir = "n/a" if row.output_sir_db is None else f"{row.output_sir_db:.2f} dB"
        snr = "n/a" if row.output_snr_db is None else f"{row.output_snr_db:.2f} dB"
        print(f"{row.source_id}: SIR {sir}, SNR {snr}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.scene:
        spec = parse_scene_file(args.scene)
    elif args.preset:
        spec = preset_scene(args.preset, duration_s=args.duration, seed=args.seed)
    else:
        raise ConfigError(f"choose --preset (one of: {', '.join(preset_names())}) or --scene")
    render = synthesize(spec)
    os.makedirs(args.output_dir, exist_ok=True)

    mixture_path = os.path.join(args.output_dir, "mixture.wav")
    write_wav(mixture_path, render.mixture)
    for scene_source, reference in zip(spec.sources, render.clean_references):
        write_wav(os.path.join(args.output_dir, f"{scene_source.source_id}_reference.wav"),
                  AudioBuffer(reference, spec.geometry.rate))
    write_wav(os.path.join(args.output_dir, "noise.wav"),
              AudioBuffer(render.noise, spec.geometry.rate))
    write_scene_file(spec, os.path.join(args.output_dir, "scene.yaml"))
    print(f"scene -> {mixture_path} ({render.mixture.num_channels} channels, "
          f"{render.mixture.duration:.1f}s, {len(spec.sources)} sources)")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    if args.seconds <= 0:
        print("bench: empty input, nothing to measure")
        return 0
    spec = preset_scene(args.preset, duration_s=args.seconds, seed=args.seed)
    render = synthesize(spec)
    config = PipelineConfig(
        mic_positions_m=[list(map(float, p)) for p in spec.geometry.mic_positions],
        sources=[_scene_source_direction(s) for s in spec.sources[: args.sources]],
    )
    config.validate()
    report = bench_pipeline(render.mixture, config)
    print(report.summary())
    return 0


def _scene_source_direction(scene_source):
    from .config import SourceDirection

    return SourceDirection(scene_source.source_id, scene_source.azimuth_deg,
                           scene_source.elevation_deg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arraysep", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage details")
    subparsers = parser.add_subparsers(dest="command", required=True)

    _add_separate(subparsers)

    p = subparsers.add_parser("features", help="extract log-mel features from one WAV")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=_cmd_features)

    p = subparsers.add_parser("score", help="score separated outputs against references")
    p.add_argument("--output", nargs="+", required=True, help="separated WAVs")
    p.add_argument("--reference", nargs="+", required=True, help="clean reference WAVs")
    p.add_argument("--noise", help="noise reference WAV")
    p.add_argument("--csv", help="write the report here")
    p.add_argument("--stage", default="output", help="stage label for the report")
    p.set_defaults(func=_cmd_score)

    p = subparsers.add_parser("simulate", help="render a deterministic test scene")
    p.add_argument("--preset", help=f"one of: {', '.join(preset_names())}")
    p.add_argument("--scene", help="scene description YAML")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=1234)
    p.set_defaults(func=_cmd_simulate)

    p = subparsers.add_parser("bench", help="measure the real-time factor")
    p.add_argument("--preset", default="trio-90deg")
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--sources", type=int, default=3)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ArraySepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
