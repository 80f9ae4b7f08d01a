"""Pipeline configuration: parsing, validation and the effective-config echo.

Config files are YAML with explicit units in the key names (degrees, dB,
meters, seconds).  Every tunable has a default; geometry and source
directions are the only required inputs.  Parsed configs hold plain
Python values so serialize(parse(file)) round-trips exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import ArrayGeometry, Source, SourceSet
from .postfilter import McraConfig, PostFilterConfig
from .simulate import SceneSource, SceneSpec, SignalSpec


@dataclass
class SourceDirection:
    id: str
    azimuth_deg: float
    elevation_deg: float = 0.0


@dataclass
class StageToggles:
    adapt: bool = True        # off = hold the delay-and-sum initialization
    postfilter: bool = True
    features: bool = True     # feature/mask extraction and emission


@dataclass
class PipelineConfig:
    mic_positions_m: list = field(default_factory=list)
    sources: list = field(default_factory=list)          # SourceDirection rows
    rate: int = 48000
    speed_of_sound: float = 343.0

    fft_size: int = 1024
    shift: int = 512
    step_size: float = 0.01           # separation adaptation rate

    leak_factor: float = 0.25         # post-filter leakage fraction (power)
    spectral_exponent: float = 1.0
    snr_smoothing: float = 0.98
    spectrum_smoothing: float = 0.7
    mcra_power_smoothing: float = 0.95
    mcra_window_length: int = 150
    mcra_presence_smoothing: float = 0.95
    mcra_onset_threshold: float = 5.0

    mask_threshold: float = 0.25
    feature_fft_size: int = 400
    feature_shift: int = 160

    stages: StageToggles = field(default_factory=StageToggles)
    dump_diagnostics: bool = False

    input_wav: str | None = None
    output_dir: str | None = None
    reference_wavs: list = field(default_factory=list)   # per source, for metrics
    noise_wav: str | None = None

    def validate(self) -> "PipelineConfig":
        if len(self.mic_positions_m) < 2:
            raise ConfigError("config needs at least two microphone positions")
        if not self.sources:
            raise ConfigError("config needs at least one source direction")
        ids = [s.id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate source ids: {ids}")
        if self.rate != 48000:
            raise ConfigError("separation pipeline runs at 48000 Hz")
        if self.fft_size % 2 or not 0 < self.shift <= self.fft_size:
            raise ConfigError("invalid separation fft_size/shift")
        if self.step_size < 0:
            raise ConfigError("step_size must be non-negative")
        if not 0.0 <= self.leak_factor <= 1.0:
            raise ConfigError("leak_factor must be within [0, 1]")
        if self.spectral_exponent <= 0:
            raise ConfigError("spectral_exponent must be positive")
        if not 0.0 <= self.snr_smoothing < 1.0:
            raise ConfigError("snr_smoothing must be within [0, 1)")
        if not 0.0 < self.spectrum_smoothing < 1.0:
            raise ConfigError("spectrum_smoothing must be within (0, 1)")
        if self.mask_threshold <= 0:
            raise ConfigError("mask_threshold must be positive")
        if self.reference_wavs and len(self.reference_wavs) != len(self.sources):
            raise ConfigError("reference_wavs must list one file per source")
        return self

    # ---- object builders -------------------------------------------------

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry([list(map(float, p)) for p in self.mic_positions_m],
                             self.rate, self.speed_of_sound)

    def source_set(self) -> SourceSet:
        return SourceSet(tuple(
            Source(s.id, float(np.deg2rad(s.azimuth_deg)), float(np.deg2rad(s.elevation_deg)))
            for s in self.sources
        ))

    def postfilter_config(self) -> PostFilterConfig:
        return PostFilterConfig(
            leak_factor=self.leak_factor,
            spectral_exponent=self.spectral_exponent,
            snr_smoothing=self.snr_smoothing,
            spectrum_smoothing=self.spectrum_smoothing,
            mcra=McraConfig(
                power_smoothing=self.mcra_power_smoothing,
                window_length=self.mcra_window_length,
                presence_smoothing=self.mcra_presence_smoothing,
                onset_threshold=self.mcra_onset_threshold,
            ),
        )


def config_to_dict(config: PipelineConfig) -> dict:
    data = asdict(config)
    data["sources"] = [asdict(s) if isinstance(s, SourceDirection) else dict(s)
                       for s in config.sources]
    data["stages"] = asdict(config.stages)
    return data


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known = {f for f in PipelineConfig.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(data)
    try:
        if "sources" in kwargs:
            kwargs["sources"] = [SourceDirection(**row) for row in kwargs["sources"]]
        if "stages" in kwargs:
            kwargs["stages"] = StageToggles(**kwargs["stages"])
        config = PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return config.validate()


def parse_config(path: str) -> PipelineConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(data or {})


def serialize_config(config: PipelineConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=False)


# --------------------------------------------------------------------------
# Scene description files (for the simulate subcommand).
# --------------------------------------------------------------------------


def scene_to_dict(spec: SceneSpec) -> dict:
    return {
        "rate": spec.geometry.rate,
        "speed_of_sound": spec.geometry.speed_of_sound,
        "mic_positions_m": [list(map(float, p)) for p in spec.geometry.mic_positions],
        "duration_s": spec.duration_s,
        "noise_level_db": float(spec.noise_level_db),
        "seed": spec.seed,
        "sources": [
            {
                "id": s.source_id,
                "azimuth_deg": s.azimuth_deg,
                "elevation_deg": s.elevation_deg,
                "gain_db": s.gain_db,
                "onset_s": s.onset_s,
                "signal": asdict(s.signal),
            }
            for s in spec.sources
        ],
    }


def scene_from_dict(data: dict) -> SceneSpec:
    try:
        geometry = ArrayGeometry(
            data["mic_positions_m"],
            int(data.get("rate", 48000)),
            float(data.get("speed_of_sound", 343.0)),
        )
        sources = []
        for row in data.get("sources", []):
            signal_data = dict(row.get("signal", {}))
            if "formants_hz" in signal_data:
                signal_data["formants_hz"] = tuple(signal_data["formants_hz"])
            sources.append(SceneSource(
                source_id=row["id"],
                azimuth_deg=float(row["azimuth_deg"]),
                elevation_deg=float(row.get("elevation_deg", 0.0)),
                signal=SignalSpec(**signal_data),
                gain_db=float(row.get("gain_db", 0.0)),
                onset_s=float(row.get("onset_s", 0.0)),
            ))
        return SceneSpec(
            geometry,
            tuple(sources),
            duration_s=float(data.get("duration_s", 10.0)),
            noise_level_db=float(data.get("noise_level_db", -40.0)),
            seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scene description: {exc}") from exc


def parse_scene_file(path: str) -> SceneSpec:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scene file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse scene file {path}: {exc}") from exc
    return scene_from_dict(data or {})


def write_scene_file(spec: SceneSpec, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_dict(spec), fh, sort_keys=False)
