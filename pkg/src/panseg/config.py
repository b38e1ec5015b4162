"""Configuration objects and the plain-text dotted-key config format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration value, key or file."""


@dataclass
class ModelConfig:
    """Architecture knobs for backbone, feature merge and panoptic head."""

    n_att: int = 50          # number of attention mask slots
    c_att: float = 50.0      # scalar multiplier applied to normalized masks
    n_things: int = 8
    n_stuff: int = 11
    f_dim: int = 64          # shared channel depth of the pyramid and merged map
    backbone_width: int = 32
    backbone_depth: int = 1  # extra 3x3 convs per pyramid stage
    head_width: int = 128    # channel width of the panoptic head convs
    anchor_size: float = 32.0
    # Interpretation of the per-box Gaussian spread: "std" treats w_b/4 as a
    # standard deviation, "variance" as a variance.
    sigma_mode: str = "std"

    # Fixed geometry of this architecture.
    feature_stride: int = 8
    pad_multiple: int = 128

    def __post_init__(self):
        if self.n_att < 1:
            raise ConfigError("n_att must be >= 1")
        if self.c_att <= 0:
            raise ConfigError("c_att must be > 0")
        if self.n_stuff < 0:
            raise ConfigError("n_stuff must be >= 0")
        if self.n_things < 1:
            raise ConfigError("n_things must be >= 1")
        if self.sigma_mode not in ("std", "variance"):
            raise ConfigError(f"sigma_mode must be 'std' or 'variance', got {self.sigma_mode!r}")

    @property
    def n_out(self) -> int:
        """Output channel count: slot channels + stuff + unmatched + unlabeled."""
        return self.n_att + self.n_stuff + 2


@dataclass
class TrainConfig:
    lambda_det: float = 0.5
    lambda_pan: float = 1.0
    lr: float = 0.01
    lr_power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 0.001
    batch_size: int = 4
    total_steps: int = 2000
    checkpoint_interval: int = 1000
    eval_interval: int = 1000
    eval_samples: int = 32
    # Augmentation: scale jitter range and crop size; crop of 0 means the
    # native image size. scale_min == scale_max == 1 disables scaling.
    scale_min: float = 1.0
    scale_max: float = 1.0
    crop_height: int = 0
    crop_width: int = 0
    flip_prob: float = 0.0

    def __post_init__(self):
        if not (0 < self.lr_power <= 2):
            raise ConfigError("lr_power must be in (0, 2]")
        for name in ("lr", "momentum", "weight_decay", "lambda_pan"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ConfigError("batch_size and total_steps must be >= 1")
        if self.scale_min > self.scale_max or self.scale_min <= 0:
            raise ConfigError("invalid scale range")


@dataclass
class DataConfig:
    kind: str = "synthetic"      # "synthetic" or "coco"
    seed: int = 0                # generator seed, independent of the run seed
    # Synthetic shapes-world settings.
    image_size: int = 64
    train_samples: int = 512
    val_samples: int = 32
    min_instances: int = 1
    max_instances: int = 3
    min_shape_size: int = 10     # half-extent in pixels
    max_shape_size: int = 16
    occlusion: bool = True
    void_bands: bool = False     # inject void stripes to exercise the unlabeled channel
    # COCO-panoptic ingestion.
    coco_json: str = ""
    coco_png_dir: str = ""
    coco_val_json: str = ""
    coco_val_png_dir: str = ""

    def __post_init__(self):
        if self.kind not in ("synthetic", "coco"):
            raise ConfigError(f"data.kind must be 'synthetic' or 'coco', got {self.kind!r}")
        if self.image_size <= 0 or self.min_shape_size <= 0:
            raise ConfigError("sizes must be positive")
        if self.min_shape_size > self.max_shape_size:
            raise ConfigError("invalid shape size range")
        if 2 * self.max_shape_size + 2 > self.image_size:
            raise ConfigError("max_shape_size too large for image_size")
        if self.min_instances < 0 or self.max_instances < self.min_instances:
            raise ConfigError("invalid instance count range")


@dataclass
class RunConfig:
    """Merged configuration for one command run, including ablation switches."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0
    out_dir: str = "runs/default"
    # Ablation switches.
    shuffle: bool = True           # shuffle attention masks
    hard_masks: bool = False       # constant-fill masks instead of Gaussian
    oracle_detector: bool = True   # ground-truth boxes instead of the learned head
    oracle_jitter: float = 0.0     # Gaussian center/size jitter, fraction of box size
    oracle_drop_rate: float = 0.0
    match_by: str = "box"          # "box" or "mask" IoU for slot/GT matching
    # Fixed permutation seed used when shuffling at inference time.
    inference_shuffle_seed: int = 1234

    def __post_init__(self):
        if self.match_by not in ("box", "mask"):
            raise ConfigError(f"match_by must be 'box' or 'mask', got {self.match_by!r}")
        if not (0.0 <= self.oracle_drop_rate <= 1.0):
            raise ConfigError("oracle_drop_rate must be in [0, 1]")


_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}


def _field_types(cls) -> dict[str, type]:
    return {f.name: f.type for f in fields(cls)}


def _parse_value(raw: str, typ) -> object:
    raw = raw.strip()
    if typ in (bool, "bool"):
        lowered = raw.lower()
        if lowered in ("true", "on", "yes", "1"):
            return True
        if lowered in ("false", "off", "no", "0"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if typ in (int, "int"):
        return int(raw)
    if typ in (float, "float"):
        return float(raw)
    return raw


def apply_overrides(config: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply dotted-key string overrides to a RunConfig, validating keys."""
    model_kw = dataclasses.asdict(config.model)
    train_kw = dataclasses.asdict(config.train)
    data_kw = dataclasses.asdict(config.data)
    top_kw = {f.name: getattr(config, f.name) for f in fields(RunConfig)
              if f.name not in _SECTIONS}
    sections = {"model": (ModelConfig, model_kw), "train": (TrainConfig, train_kw),
                "data": (DataConfig, data_kw)}
    top_types = {f.name: f.type for f in fields(RunConfig) if f.name not in _SECTIONS}

    for key, raw in overrides.items():
        if "." in key:
            section, name = key.split(".", 1)
            if section not in sections:
                raise ConfigError(f"unknown config section {section!r} in key {key!r}")
            cls, kw = sections[section]
            types = _field_types(cls)
            if name not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kw[name] = _parse_value(raw, types[name])
        else:
            if key not in top_types:
                raise ConfigError(f"unknown config key {key!r}")
            top_kw[key] = _parse_value(raw, top_types[key])

    return RunConfig(model=ModelConfig(**model_kw), train=TrainConfig(**train_kw),
                     data=DataConfig(**data_kw), **top_kw)


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    """Load a plain-text config file of `section.key = value` lines."""
    parsed: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        parsed[key.strip()] = raw.strip()
    if overrides:
        parsed.update(overrides)
    return apply_overrides(RunConfig(), parsed)


def dump_config(config: RunConfig) -> str:
    """Serialize the fully-resolved config back to the text format."""
    lines = []
    for section in ("model", "train", "data"):
        obj = getattr(config, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {getattr(obj, f.name)}")
    for f in fields(RunConfig):
        if f.name in _SECTIONS:
            continue
        lines.append(f"{f.name} = {getattr(config, f.name)}")
    return "\n".join(lines) + "\n"
