"""Versioned INI run configuration shared by every CLI command."""

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

CONFIG_VERSION = 1

# Dataclass fields grouped into INI sections, in render order.
_SECTIONS = {
    "run": ("version", "seed"),
    "data": (
        "segment_count",
        "n_neighbors",
        "frame_stride",
        "clip_frames",
        "hr_height",
        "hr_width",
        "n_classes",
        "train_samples",
        "eval_samples",
    ),
    "model": (
        "hr_channels",
        "lr_channels",
        "hidden",
        "heads",
        "video_layers",
        "text_layers",
        "joint_layers",
        "mlp_ratio",
        "vocab_size",
        "max_len",
        "embed_dim",
    ),
    "train": (
        "batch_size",
        "tau",
        "stage1_epochs",
        "stage2_epochs",
        "learning_rate",
        "weight_decay",
        "warmup_fraction",
        "mask_prob",
        "freeze_contrastive",
        "joint_contrastive",
    ),
    "paths": ("out_dir", "subtitles_dir", "clips_path"),
}


class ConfigError(ValueError):
    """Invalid, unknown, or missing configuration data."""


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    seed: int = 0

    segment_count: int = 2
    n_neighbors: int = 3
    frame_stride: int = 1
    clip_frames: int = 32
    hr_height: int = 640
    hr_width: int = 1024
    n_classes: int = 8
    train_samples: int = 256
    eval_samples: int = 64

    hr_channels: Tuple[int, ...] = (64, 128, 256, 512)
    lr_channels: Tuple[int, ...] = (128, 256, 1024)
    hidden: int = 1024
    heads: int = 16
    video_layers: int = 4
    text_layers: int = 2
    joint_layers: int = 2
    mlp_ratio: int = 4
    vocab_size: int = 64
    max_len: int = 50
    embed_dim: int = 0

    batch_size: int = 8
    tau: float = 0.05
    stage1_epochs: int = 1
    stage2_epochs: int = 1
    learning_rate: float = 5e-5
    weight_decay: float = 1e-3
    warmup_fraction: float = 0.1
    mask_prob: float = 0.15
    freeze_contrastive: bool = True
    joint_contrastive: bool = False

    out_dir: str = "runs/default"
    subtitles_dir: str = "subtitles"
    clips_path: str = "clips.jsonl"

    @property
    def lr_height(self) -> int:
        return self.hr_height // 4

    @property
    def lr_width(self) -> int:
        return self.hr_width // 4

    @property
    def grid(self) -> Tuple[int, int]:
        return (self.hr_height // 64, self.hr_width // 64)

    @property
    def frames_per_segment(self) -> int:
        return 2 * self.n_neighbors + 1

    @property
    def contrastive_dim(self) -> int:
        return self.embed_dim if self.embed_dim else self.hidden

    def validate(self) -> "RunConfig":
        def require(ok: bool, message: str) -> None:
            if not ok:
                raise ConfigError(message)

        require(self.version == CONFIG_VERSION, f"unsupported config version {self.version}")
        require(self.seed >= 0, "seed must be >= 0")
        require(self.segment_count >= 1, "segment_count must be >= 1")
        require(self.n_neighbors >= 1, "n_neighbors must be >= 1")
        require(self.frame_stride >= 1, "frame_stride must be >= 1")
        # Evaluation doubles the segment count, so clips must still split.
        require(
            self.clip_frames >= 2 * self.segment_count,
            f"clip_frames {self.clip_frames} cannot cover {2 * self.segment_count} eval segments",
        )
        require(
            self.hr_height % 64 == 0 and self.hr_width % 64 == 0,
            f"crop {self.hr_height}x{self.hr_width} must be divisible by 64",
        )
        require(self.hr_height >= 64 and self.hr_width >= 64, "crop must be at least 64x64")
        require(2 <= self.n_classes <= 8, "n_classes must lie in [2, 8]")
        require(
            len(self.hr_channels) == len(self.lr_channels) + 1,
            "hr_channels must have exactly one more stage than lr_channels",
        )
        require(all(c >= 1 for c in self.hr_channels + self.lr_channels), "channel widths must be >= 1")
        require(
            self.lr_channels[-1] == self.hidden,
            f"last lr channel width {self.lr_channels[-1]} must equal hidden {self.hidden}",
        )
        require(self.hidden % self.heads == 0, f"hidden {self.hidden} not divisible by {self.heads} heads")
        for name in ("video_layers", "text_layers", "joint_layers", "mlp_ratio"):
            require(getattr(self, name) >= 1, f"{name} must be >= 1")
        require(self.vocab_size >= 6, "vocab_size must cover the 5 reserved ids plus one token")
        require(self.max_len >= 6, "max_len must fit a 5-word caption plus the start token")
        require(self.embed_dim >= 0, "embed_dim must be >= 0 (0 means hidden)")
        require(self.batch_size >= 2, "contrastive batches need at least 2 samples")
        require(self.train_samples >= self.batch_size, "train_samples must be >= batch_size")
        require(self.eval_samples >= 10, "eval_samples must be >= 10 for recall at 10")
        require(self.tau > 0, "temperature tau must be positive")
        require(self.learning_rate > 0, "learning_rate must be positive")
        require(self.weight_decay >= 0, "weight_decay must be >= 0")
        require(0.0 <= self.warmup_fraction <= 1.0, "warmup_fraction must lie in [0, 1]")
        require(0.0 <= self.mask_prob <= 1.0, "mask_prob must lie in [0, 1]")
        require(self.stage1_epochs >= 0 and self.stage2_epochs >= 0, "epoch counts must be >= 0")
        return self


def _parse_value(name: str, text: str, kind: type) -> object:
    try:
        if kind is bool:
            lowered = text.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            parts = text.replace(",", " ").split()
            if not parts:
                raise ValueError("empty tuple")
            return tuple(int(p) for p in parts)
        return text.strip()
    except ValueError as err:
        raise ConfigError(f"bad value for {name!r}: {err}") from err


def load_config(path: Union[str, Path], seed: int = None) -> RunConfig:
    """Parse and validate a run configuration file.

    Unknown sections or keys are rejected; the [run] section must carry an
    explicit version. An optional `seed` argument overrides the file.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text(encoding="utf-8"))
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from err

    defaults = RunConfig()
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            values[key] = _parse_value(key, parser[section][key], type(getattr(defaults, key)))
    if "version" not in values:
        raise ConfigError(f"{path}: [run] must declare a config version")
    if seed is not None:
        values["seed"] = int(seed)
    try:
        config = RunConfig(**values)
    except TypeError as err:
        raise ConfigError(f"{path}: {err}") from err
    return config.validate()


def render_config(config: RunConfig) -> str:
    """Write a config back out as INI text with every field explicit."""
    lines = []
    for section, names in _SECTIONS.items():
        lines.append(f"[{section}]")
        for name in names:
            value = getattr(config, name)
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{name} = {value}")
        lines.append("")
    return "\n".join(lines)
