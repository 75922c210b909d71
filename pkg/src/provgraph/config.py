"""Pipeline configuration.

Defaults: 2000 keypoints per image, a Hessian threshold of 100 and a
nearest-neighbour distance ratio of 0.8.

Config files are plain INI text, one ``key = value`` per line, grouped by
section::

    [run]
    metric = MutualInformation
    experiment_mode = WithDistractors
    threads = 2

    [detector]
    max_keypoints = 2000
    hessian_threshold = 100

    [matching]
    nndr_threshold = 0.8

    [gcm]
    tolerance_px = 5
    literal_top2 = false

    [registration]
    force_affine = false

Unknown sections or keys raise :class:`ConfigError`.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


class MetricKind(str, enum.Enum):
    GCM_AVG_DISTANCE = "GcmAvgDistance"
    GCM_COUNT = "GcmCount"
    MSE = "Mse"
    MUTUAL_INFORMATION = "MutualInformation"

    @property
    def is_pixel_metric(self) -> bool:
        return self in (MetricKind.MSE, MetricKind.MUTUAL_INFORMATION)

    @classmethod
    def parse(cls, value) -> "MetricKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if str(value).lower() in (kind.value.lower(), kind.name.lower()):
                return kind
        raise ConfigError(f"unknown metric {value!r}; expected one of {[k.value for k in cls]}")


class ExperimentMode(str, enum.Enum):
    WITHOUT_DISTRACTORS = "WithoutDistractors"
    WITH_DISTRACTORS = "WithDistractors"

    @classmethod
    def parse(cls, value) -> "ExperimentMode":
        if isinstance(value, cls):
            return value
        for mode in cls:
            if str(value).lower() in (mode.value.lower(), mode.name.lower()):
                return mode
        raise ConfigError(f"unknown experiment mode {value!r}")


# Scales sigma**4 * det(Hessian) of a [0, 1] image into threshold units. At
# the default threshold of 100 the canonical blob grid
# (keypoints.canonical_blob_grid) yields about 1500 detections, inside the
# 500-4000 calibration band.
RESPONSE_SCALE = 2.0e5


@dataclass(frozen=True)
class DetectorConfig:
    max_keypoints: int = 2000
    hessian_threshold: float = 100.0
    descriptor_length: int = 64
    n_octaves: int = 4
    n_scales_per_octave: int = 3
    base_sigma: float = 1.2
    response_scale: float = RESPONSE_SCALE

    def validate(self) -> None:
        if self.max_keypoints < 1:
            raise ConfigError("detector.max_keypoints must be >= 1")
        if self.hessian_threshold < 0:
            raise ConfigError("detector.hessian_threshold must be >= 0")
        if self.n_octaves < 1 or self.n_scales_per_octave < 1:
            raise ConfigError("detector.n_octaves and n_scales_per_octave must be >= 1")
        if self.base_sigma <= 0 or self.response_scale <= 0:
            raise ConfigError("detector.base_sigma and response_scale must be > 0")
        n = self.descriptor_length
        if n != 128 and not (n % 4 == 0 and round((n // 4) ** 0.5) ** 2 == n // 4 and n >= 16):
            raise ConfigError(
                "detector.descriptor_length must be 4*g*g for a g x g grid (g >= 2) or 128"
            )


@dataclass(frozen=True)
class MatchingConfig:
    nndr_threshold: float = 0.8

    def validate(self) -> None:
        if not 0.0 < self.nndr_threshold <= 1.0:
            raise ConfigError("matching.nndr_threshold must be in (0, 1]")


@dataclass(frozen=True)
class GcmConfig:
    tolerance_px: float = 5.0
    max_anchor_candidates: int = 10
    min_inliers: int = 4
    literal_top2: bool = False
    scale_tolerance: bool = True
    check_keypoint_attributes: bool = True
    max_scale_ratio: float = 1.3
    max_orientation_diff: float = 0.3

    def validate(self) -> None:
        if self.tolerance_px <= 0:
            raise ConfigError("gcm.tolerance_px must be > 0")
        if self.max_anchor_candidates < 2:
            raise ConfigError("gcm.max_anchor_candidates must be >= 2")
        if self.min_inliers < 2:
            raise ConfigError("gcm.min_inliers must be >= 2")
        if self.max_scale_ratio < 1.0 or self.max_orientation_diff <= 0:
            raise ConfigError("gcm.max_scale_ratio must be >= 1 and max_orientation_diff > 0")


@dataclass(frozen=True)
class RegistrationConfig:
    force_affine: bool = False
    roi_pad_px: int = 4
    min_valid_pixels: int = 64

    def validate(self) -> None:
        if self.roi_pad_px < 0:
            raise ConfigError("registration.roi_pad_px must be >= 0")
        if self.min_valid_pixels < 1:
            raise ConfigError("registration.min_valid_pixels must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    gcm: GcmConfig = field(default_factory=GcmConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)

    def validate(self) -> "PipelineConfig":
        self.detector.validate()
        self.matching.validate()
        self.gcm.validate()
        self.registration.validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


@dataclass(frozen=True)
class RunConfig:
    metric: MetricKind = MetricKind.MUTUAL_INFORMATION
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    experiment_mode: ExperimentMode = ExperimentMode.WITHOUT_DISTRACTORS
    output_dir: str = "out"
    threads: int = 1

    def validate(self) -> "RunConfig":
        self.pipeline.validate()
        if self.threads < 1:
            raise ConfigError("run.threads must be >= 1")
        return self

    def to_dict(self) -> dict:
        return {
            "metric": self.metric.value,
            "experiment_mode": self.experiment_mode.value,
            **self.pipeline.to_dict(),
        }

    def fingerprint(self) -> str:
        # output_dir and threads never change results, so they stay out of the hash
        return fingerprint(self.to_dict())


def fingerprint(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


_SECTIONS = {
    "detector": DetectorConfig,
    "matching": MatchingConfig,
    "gcm": GcmConfig,
    "registration": RegistrationConfig,
}


def _coerce(raw: str, typ, key: str):
    try:
        if typ is bool or typ == "bool":
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int or typ == "int":
            return int(raw)
        if typ is float or typ == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def _build_section(cls, values: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in fields:
            raise ConfigError(f"unknown key {section}.{key}")
        kwargs[key] = _coerce(raw, fields[key].type, f"{section}.{key}")
    return cls(**kwargs)


def parse_config_text(text: str, overrides: dict | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    for name in sections:
        if name not in _SECTIONS and name != "run":
            raise ConfigError(f"unknown config section [{name}]")
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        sections.setdefault(section, {})[key] = str(value)

    pipeline = PipelineConfig(
        **{name: _build_section(cls, sections.get(name, {}), name) for name, cls in _SECTIONS.items()}
    )
    run = dict(sections.get("run", {}))
    unknown = set(run) - {"metric", "experiment_mode", "output_dir", "threads"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [run]: {sorted(unknown)}")
    cfg = RunConfig(
        metric=MetricKind.parse(run.get("metric", MetricKind.MUTUAL_INFORMATION.value)),
        pipeline=pipeline,
        experiment_mode=ExperimentMode.parse(
            run.get("experiment_mode", ExperimentMode.WITHOUT_DISTRACTORS.value)
        ),
        output_dir=run.get("output_dir", "out"),
        threads=_coerce(run.get("threads", "1"), int, "run.threads"),
    )
    return cfg.validate()


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, overrides)


def dump_config(cfg: RunConfig) -> str:
    lines = [
        "[run]",
        f"metric = {cfg.metric.value}",
        f"experiment_mode = {cfg.experiment_mode.value}",
        f"output_dir = {cfg.output_dir}",
        f"threads = {cfg.threads}",
    ]
    for name in _SECTIONS:
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in dataclasses.asdict(getattr(cfg.pipeline, name)).items():
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
