"""Run configuration: a flat key = value text format with typed defaults.

A run's effective configuration is written next to its outputs so any run
can be reproduced bit-exactly from its directory. CLI flags override file
values; unknown keys are rejected. Defaults mirror the reference speech
architecture (3 conv layers, 64 channels, 4x3 kernels, dilations (1,1),
(4,3), (16,9), stride 1, sigma 10) and its training recipe (RAdam, lr
1e-3, 30 epochs with 1 warmup epoch, weight decay 1e-5, gradient clip 5,
regularization base 0.1).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigurationError
from .features import DEFAULT_WORDS
from .net import LayerSpec, ModelConfig


@dataclass
class RunConfig:
    # model
    arch: str = "auto"                      # auto | fc | conv
    conv_channels: str = "64,64,64"
    conv_kernel: str = "4x3"
    conv_dilations: str = "1x1,4x3,16x9"
    fc_hidden: str = "32,32"
    lateral: bool = True
    sigma: float = 10.0
    tau_mem_ms: float = 20.0
    dt_ms: float = 10.0
    # training
    lr: float = 1e-3
    epochs: int = 30
    warmup_epochs: float = 1.0
    weight_decay: float = 1e-5
    grad_clip: float = 5.0
    reg_coeff: float = 0.1
    batch_size: int = 32
    forward_mode: str = "hard"
    # data
    dataset: str = "synthetic"              # synthetic | speech-commands
    data_dir: str = ""
    words: str = ",".join(DEFAULT_WORDS)
    max_per_class: int = 0                  # 0 = no cap
    synthetic_classes: int = 4
    synthetic_examples: int = 60
    synthetic_steps: int = 60
    synthetic_dims: int = 8
    synthetic_noise: float = 0.3
    seed: int = 0

    def resolved_arch(self) -> str:
        if self.arch != "auto":
            return self.arch
        return "conv" if self.dataset == "speech-commands" else "fc"

    def to_text(self) -> str:
        lines = ["# sodnet run configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False,
                "yes": True, "no": False}


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            return _BOOL_VALUES[raw.lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {name!r}: {raw!r}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults <- config file <- overrides; unknown keys are errors."""
    cfg = RunConfig()
    known = {f.name: f.type for f in fields(cfg)}
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}

    def apply(pairs: dict):
        for key, value in pairs.items():
            if key not in known:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            if value is None:
                continue
            if isinstance(value, str):
                value = _coerce(key, types[key], value)
            setattr(cfg, key, value)

    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file {p} does not exist")
        apply(parse_config_text(p.read_text()))
    if overrides:
        apply(overrides)
    return cfg


def _parse_int_list(raw: str, what: str) -> list[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad {what}: {raw!r}") from exc


def _parse_pair(raw: str, what: str) -> tuple[int, int]:
    try:
        a, b = raw.lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise ConfigurationError(f"bad {what} (want e.g. 4x3): {raw!r}") from exc


def model_config_from_run(cfg: RunConfig, input_shape, n_classes: int) -> ModelConfig:
    arch = cfg.resolved_arch()
    layers: list[LayerSpec] = []
    if arch == "conv":
        channels = _parse_int_list(cfg.conv_channels, "conv_channels")
        kernel = _parse_pair(cfg.conv_kernel, "conv_kernel")
        dilations = [_parse_pair(d, "conv_dilations") for d in cfg.conv_dilations.split(",")]
        if len(dilations) != len(channels):
            raise ConfigurationError(
                f"conv_dilations lists {len(dilations)} entries for {len(channels)} layers")
        for c, d in zip(channels, dilations):
            layers.append(LayerSpec(kind="conv", size=c, kernel=kernel, dilation=d,
                                    lateral=cfg.lateral))
    elif arch == "fc":
        for h in _parse_int_list(cfg.fc_hidden, "fc_hidden"):
            layers.append(LayerSpec(kind="fc", size=h, lateral=cfg.lateral))
    else:
        raise ConfigurationError(f"unknown arch {arch!r}")
    return ModelConfig(input_shape=tuple(input_shape), layers=layers, n_classes=n_classes,
                       sigma=cfg.sigma, tau_mem_s=cfg.tau_mem_ms / 1000.0,
                       dt_s=cfg.dt_ms / 1000.0)


def train_config_from_run(cfg: RunConfig):
    from .learn import TrainConfig

    return TrainConfig(lr=cfg.lr, epochs=cfg.epochs, warmup_epochs=cfg.warmup_epochs,
                       weight_decay=cfg.weight_decay, grad_clip=cfg.grad_clip,
                       reg_coeff_base=cfg.reg_coeff, forward_mode=cfg.forward_mode,
                       batch_size=cfg.batch_size)
