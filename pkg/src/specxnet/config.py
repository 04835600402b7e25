"""Model and training configuration, plus the ``key = value`` config file format."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass
class BlockConfig:
    c_in: int
    c_out: int
    kernel: int = 3
    pool_stride: int = 2
    alpha: float = 0.5


@dataclass
class ModelConfig:
    input_shape: tuple[int, int, int] = (3, 64, 64)
    stem_channels: int = 16
    blocks: list[BlockConfig] = field(default_factory=list)
    num_classes: int = 2
    dtype: str = "float64"
    seed: int = 0
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    cross_paths: bool = True
    per_bin_spectral: bool = False
    spectral_stride: int = 1
    lf_pool_ratio: float = 0.5
    lf_crop_ratio: float = 0.5
    attn_reduction: int = 4

    def __post_init__(self):
        self.validate()

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def validate(self) -> None:
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")
        if self.bn_eps <= 0:
            raise ConfigError(f"bn_eps must be positive, got {self.bn_eps}")
        prev = self.stem_channels
        for i, b in enumerate(self.blocks):
            if b.c_in != prev:
                raise ConfigError(f"block {i} expects C_in={b.c_in} but receives {prev} channels")
            if not 0.0 <= b.alpha <= 1.0:
                raise ConfigError(f"block {i} alpha={b.alpha} outside [0, 1]")
            prev = b.c_out

    def with_alpha(self, alpha: float) -> ModelConfig:
        blocks = [BlockConfig(b.c_in, b.c_out, b.kernel, b.pool_stride, alpha) for b in self.blocks]
        return _replace(self, blocks=blocks)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    warmup_epochs: int = 5
    horizon: int = 30
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 0.1
    optimizer: str = "sgd"
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")


def _replace(cfg, **changes):
    values = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    values.update(changes)
    return type(cfg)(**values)


def chain_blocks(stem: int, widths, alphas, kernel: int = 3, pool_strides=2) -> list[BlockConfig]:
    widths = list(widths)
    alphas = list(alphas) if isinstance(alphas, (list, tuple)) else [alphas] * len(widths)
    strides = list(pool_strides) if isinstance(pool_strides, (list, tuple)) else [pool_strides] * len(widths)
    if not (len(alphas) == len(strides) == len(widths)):
        raise ConfigError("block_widths, alphas and pool_strides must have equal length")
    blocks, prev = [], stem
    for w, a, s in zip(widths, alphas, strides):
        blocks.append(BlockConfig(prev, w, kernel, s, a))
        prev = w
    return blocks


def desk_config(alpha: float = 0.5, seed: int = 0, dtype: str = "float64") -> ModelConfig:
    """4 blocks, widths 16 -> 32 -> 64 -> 64, 3x64x64 input."""
    return ModelConfig(input_shape=(3, 64, 64), stem_channels=16,
                       blocks=chain_blocks(16, [16, 32, 64, 64], alpha), seed=seed, dtype=dtype)


def xception_full_config(alpha: float = 0.5, seed: int = 0, dtype: str = "float32") -> ModelConfig:
    """Xception entry/middle/exit widths at 224x224; not a desk-scale target."""
    widths = [128, 256, 728] + [728] * 8 + [1024, 1536, 2048]
    strides = [2, 2, 2] + [1] * 8 + [2, 1, 1]
    return ModelConfig(input_shape=(3, 224, 224), stem_channels=64,
                       blocks=chain_blocks(64, widths, alpha, pool_strides=strides), seed=seed, dtype=dtype)


def ablation_config(alpha: float = 0.5, seed: int = 0, dtype: str = "float32") -> ModelConfig:
    """Small grayscale model for the alpha sweep: stem 8, blocks 8 -> 16 -> 16, 1x64x64 input."""
    return ModelConfig(input_shape=(1, 64, 64), stem_channels=8,
                       blocks=chain_blocks(8, [8, 16, 16], alpha), seed=seed, dtype=dtype)


PRESETS = {"desk": desk_config, "xception-full": xception_full_config, "ablation": ablation_config}


# -- config file -------------------------------------------------------------------------

def _ints(v: str) -> list[int]:
    return [int(t) for t in v.split(",") if t.strip()]


def _floats(v: str) -> list[float]:
    return [float(t) for t in v.split(",") if t.strip()]


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


_MODEL_SCALARS = {
    "stem_channels": int, "num_classes": int, "dtype": str, "seed": int, "bn_eps": float,
    "bn_momentum": float, "cross_paths": _bool, "per_bin_spectral": _bool, "spectral_stride": int,
    "lf_pool_ratio": float, "lf_crop_ratio": float, "attn_reduction": int,
}
_TRAIN_KEYS = {
    "epochs": int, "batch_size": int, "lr": float, "momentum": float, "weight_decay": float,
    "warmup_epochs": int, "horizon": int, "decay_epochs": lambda v: tuple(_ints(v)),
    "decay_factor": float, "optimizer": str, "train_seed": int,
}


def parse_config_text(text: str) -> tuple[ModelConfig, TrainConfig]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value
    known = set(_MODEL_SCALARS) | set(_TRAIN_KEYS) | {
        "input_shape", "block_widths", "alphas", "alpha", "kernel_size", "pool_strides"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    model_kw = {k: conv(raw[k]) for k, conv in _MODEL_SCALARS.items() if k in raw}
    if "input_shape" in raw:
        shape = _ints(raw["input_shape"])
        if len(shape) != 3:
            raise ConfigError(f"input_shape needs 3 values, got {raw['input_shape']!r}")
        model_kw["input_shape"] = tuple(shape)
    widths = _ints(raw.get("block_widths", "16,32,64,64"))
    alpha_src = raw.get("alphas", raw.get("alpha", "0.5"))
    alphas = _floats(alpha_src)
    if len(alphas) == 1:
        alphas = alphas * len(widths)
    strides = _ints(raw.get("pool_strides", "2"))
    if len(strides) == 1:
        strides = strides * len(widths)
    try:
        model_kw["blocks"] = chain_blocks(model_kw.get("stem_channels", 16), widths, alphas,
                                          int(raw.get("kernel_size", 3)), strides)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    train_kw = {}
    for k, conv in _TRAIN_KEYS.items():
        if k in raw:
            train_kw["seed" if k == "train_seed" else k] = conv(raw[k])
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def load_config(path: str | os.PathLike) -> tuple[ModelConfig, TrainConfig]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def dump_config(model: ModelConfig, train: TrainConfig | None = None) -> str:
    kernels = {b.kernel for b in model.blocks}
    if len(kernels) > 1:
        raise ConfigError("config file format supports a single kernel size")
    lines = ["# model",
             f"input_shape = {','.join(map(str, model.input_shape))}",
             f"block_widths = {','.join(str(b.c_out) for b in model.blocks)}",
             f"alphas = {','.join(repr(b.alpha) for b in model.blocks)}",
             f"pool_strides = {','.join(str(b.pool_stride) for b in model.blocks)}",
             f"kernel_size = {kernels.pop() if kernels else 3}"]
    for k in _MODEL_SCALARS:
        v = getattr(model, k)
        lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
    if train is not None:
        lines.append("# training")
        for k in _TRAIN_KEYS:
            v = getattr(train, "seed" if k == "train_seed" else k)
            if isinstance(v, tuple):
                v = ",".join(map(str, v))
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
