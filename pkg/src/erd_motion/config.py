"""Run configuration: defaults, flat ``key = value`` config files, CLI overrides."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .erd_model import ErdConfig
from .errors import ConfigError
from .mocap_data import NoiseSchedule
from .training import TrainConfig


@dataclass
class RunConfig:
    # data
    train_data: list[str] = field(default_factory=list)
    test_data: list[str] = field(default_factory=list)
    subsample: int = 2
    # model
    encoder_sizes: list[int] = field(default_factory=lambda: [64, 64])
    lstm_sizes: list[int] = field(default_factory=lambda: [128])
    decoder_sizes: list[int] = field(default_factory=lambda: [64, 64])
    output_head: str = "gmm"
    gmm_components: int = 5
    variance_pad: float = 0.01
    hidden_activation: str = "relu"
    peepholes: bool = False
    # optimizer
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 200
    window_len: int = 100
    stride: int = 50
    batch_size: int = 8
    clip_threshold: float = 25.0
    lr_decay: float = 1.0
    # denoising curriculum
    sigma_max: float = 0.1
    ramp_fraction: float = 0.5
    # generation
    checkpoint: str = ""
    prefix: str = ""
    steps: int = 100
    mode: str = "most_probable"
    # evaluation
    protocol: str = "horizons"
    baseline: str = ""
    ngram_n: int = 6
    horizons_ms: list[float] = field(default_factory=lambda: [80, 160, 240, 320, 400, 480, 560])
    n_prefixes: int = 8
    prefix_len: int = 50
    heatmaps: str = ""
    coarse_heatmaps: str = ""
    truth_poses: str = ""
    left_hip: int = 0
    right_shoulder: int = 1
    thresholds: list[float] = field(default_factory=lambda: [0.05 * k for k in range(1, 11)])
    smoothness_scale: float = 1.0
    forecast: str = "none"
    forecast_frames: int = 0
    # run
    seed: int = 0
    out: str = "runs"

    def erd_config(self, input_dim: int) -> ErdConfig:
        try:
            return ErdConfig(
                input_dim, self.encoder_sizes, self.lstm_sizes, self.decoder_sizes,
                self.output_head, self.gmm_components, self.variance_pad,
                self.hidden_activation, self.peepholes,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                self.learning_rate, self.momentum, self.epochs, self.window_len, self.stride,
                self.batch_size, self.clip_threshold, self.lr_decay,
                NoiseSchedule(self.sigma_max, self.ramp_fraction),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_HINTS = typing.get_type_hints(RunConfig)
FIELDS = {f.name: _HINTS[f.name] for f in dataclasses.fields(RunConfig)}


def _parse_scalar(kind, text: str):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return kind(text)


def parse_value(key: str, text: str):
    kind = FIELDS[key]
    try:
        if typing.get_origin(kind) is list:
            (inner,) = typing.get_args(kind)
            return [_parse_scalar(inner, part) for part in text.split(",") if part.strip()]
        return _parse_scalar(kind, text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def load_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = parse_value(key, value)
    return values


def build_config(config_path=None, overrides: dict | None = None) -> RunConfig:
    values = load_config_file(config_path) if config_path else {}
    for key, value in (overrides or {}).items():
        if key not in FIELDS:
            raise ConfigError(f"unknown option {key!r}")
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for name in FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"
