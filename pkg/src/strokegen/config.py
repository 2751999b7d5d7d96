"""Run configuration: versioned, strictly parsed, with toy and full presets.

The toy preset is sized for CPU smoke runs (small images, short schedules);
the full preset mirrors the production geometry (128x1024 style images,
T=1000, ~16.8M parameters) and is provided as a preset only.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import InvalidArgument, ParseError
from .style_encoder import MultiScaleConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class StyleTrainConfig:
    iters: int = 600
    batch_size: int = 16
    lr: float = 1e-3
    val_fraction: float = 0.1
    eval_interval: int = 50


@dataclass(frozen=True)
class TextLayoutConfig:
    dim: int = 96
    heads: int = 1


@dataclass(frozen=True)
class DiffusionConfig:
    steps: int = 50
    beta_min: float = 1e-4
    beta_max: float = 0.15
    sigma_mode: str = "beta"
    sample_init: str = "gaussian"
    dim: int = 96
    heads: int = 4
    layers: int = 3
    lambda_pen: float = 1.0


@dataclass(frozen=True)
class DiffusionTrainConfig:
    iters: int = 2000
    batch_size: int = 16
    lr: float = 2e-3
    # linear lr ramp over the first `warmup` steps, cosine decay to 10%
    # of `lr` by `iters`; stabilizes the early attention updates at the
    # higher toy learning rate and settles the weights late
    warmup: int = 150
    # moving-average weight copy used for sampling
    ema_decay: float = 0.995


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    profile: str = "toy"
    seed: int = 0
    style: MultiScaleConfig = field(default_factory=MultiScaleConfig)
    style_train: StyleTrainConfig = field(default_factory=StyleTrainConfig)
    text: TextLayoutConfig = field(default_factory=TextLayoutConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    diffusion_train: DiffusionTrainConfig = field(default_factory=DiffusionTrainConfig)

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise InvalidArgument(
                f"config version {self.version} unsupported (expected {CONFIG_VERSION})")
        if self.profile not in ("toy", "full"):
            raise InvalidArgument(f"unknown profile {self.profile!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def toy_profile(seed: int = 0) -> RunConfig:
    """Small enough that pretraining and 2k diffusion iterations fit in
    minutes on one CPU core."""
    style = MultiScaleConfig(
        full_size=(32, 256), scales=((24, 192), (16, 128)), patch=8,
        grid=(4, 32), dim=96, heads=4, layers=4, channels=1,
        local_crop=(20, 96))
    return RunConfig(profile="toy", seed=seed, style=style)


def full_profile(seed: int = 0) -> RunConfig:
    """Production-geometry preset (untested at full scale in CI)."""
    style = MultiScaleConfig(dim=256, heads=8, layers=6)
    return RunConfig(
        profile="full", seed=seed, style=style,
        style_train=StyleTrainConfig(iters=20000, batch_size=32, lr=3e-4,
                                     eval_interval=500),
        text=TextLayoutConfig(dim=256, heads=8),
        diffusion=DiffusionConfig(steps=1000, beta_min=1e-4, beta_max=0.02,
                                  dim=256, heads=8, layers=8),
        diffusion_train=DiffusionTrainConfig(iters=60000, batch_size=32,
                                             lr=1e-4, warmup=1000,
                                             ema_decay=0.999))


def profile_config(name: str, seed: int = 0) -> RunConfig:
    if name == "toy":
        return toy_profile(seed)
    if name == "full":
        return full_profile(seed)
    raise InvalidArgument(f"unknown profile {name!r}")


_TUPLE_FIELDS = {"full_size", "scales", "grid", "local_crop"}


def _build(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise InvalidArgument(f"unknown config keys at {path}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if isinstance(value, dict):
            target = {"style": MultiScaleConfig,
                      "style_train": StyleTrainConfig,
                      "text": TextLayoutConfig,
                      "diffusion": DiffusionConfig,
                      "diffusion_train": DiffusionTrainConfig}.get(name)
            if target is None:
                raise InvalidArgument(f"unexpected table at {path}.{name}")
            kwargs[name] = _build(target, value, f"{path}.{name}")
        elif name in _TUPLE_FIELDS:
            if name == "scales":
                kwargs[name] = tuple(tuple(int(x) for x in pair) for pair in value)
            else:
                kwargs[name] = tuple(int(x) for x in value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise InvalidArgument("config root must be an object")
    base = data
    profile = data.get("profile", "toy")
    defaults = profile_config(profile).to_dict()
    merged = _deep_merge(defaults, base)
    return _build(RunConfig, merged, "config")


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"config: {exc.msg}") from exc
    return config_from_dict(data)
