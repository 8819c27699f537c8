"""Configuration dataclasses and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for inconsistent shapes, counts or config keys."""


@dataclass
class EncoderConfig:
    patch_size: int = 4
    embed_dim: int = 32
    num_heads: int = 4
    num_layers: int = 1
    frame_count: int = 6
    image_size: int = 32
    vocab_size: int = 64
    mlp_ratio: int = 2

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.num_heads:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.frame_count < 2:
            raise ConfigError("frame_count must be >= 2")
        if min(self.patch_size, self.num_layers, self.vocab_size, self.mlp_ratio) < 1:
            raise ConfigError("encoder counts must be positive")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2


@dataclass
class LossWeights:
    lam: float = 0.5  # text term in the similarity loss and the inference score
    beta1: float = 0.7  # graph loss
    beta2: float = 0.3  # mining loss
    margin: float = 0.2

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"loss weight {f.name}={v} must be finite and >= 0")


@dataclass
class TrainConfig:
    lr: float = 3e-4
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    k_mine: int = 4
    k_conn: int = 0  # 0 -> ceil(L / 2)
    alpha: float = 0.5  # text weight inside the mining similarity
    mask_rule: str = "mean_topk"
    use_text: bool = True
    use_tmc: bool = True
    use_gci: bool = True
    use_smf: bool = True
    mask_prob: float = 0.5
    mask_ratio_max: float = 0.9
    weight_decay: float = 0.0
    num_threads: int = 1

    def __post_init__(self) -> None:
        if self.lr <= 0 or not math.isfinite(self.lr):
            raise ConfigError("lr must be positive")
        if self.epochs < 0 or self.batch_size < 2:
            raise ConfigError("epochs must be >= 0 and batch_size >= 2")
        if not 1 <= self.conn_k <= self.encoder.frame_count:
            raise ConfigError(f"k_conn={self.k_conn} outside [1, L]")
        if self.k_mine < 1 or self.k_mine > self.batch_size:
            raise ConfigError(f"k_mine={self.k_mine} outside [1, batch_size]")
        if self.mask_rule not in ("mean_topk", "literal"):
            raise ConfigError(f"unknown mask_rule {self.mask_rule!r}")
        if not (0.0 <= self.mask_prob <= 1.0 and 0.0 <= self.mask_ratio_max <= 1.0):
            raise ConfigError("masking probabilities must lie in [0, 1]")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.num_threads < 1:
            raise ConfigError("num_threads must be >= 1")

    @property
    def conn_k(self) -> int:
        """Connections kept per similarity column; ``k_conn=0`` means ceil(L/2)."""
        return self.k_conn or math.ceil(self.encoder.frame_count / 2)


_NESTED = {"weights": LossWeights, "encoder": EncoderConfig}


def to_flat(cfg: TrainConfig) -> dict[str, Any]:
    """Flatten a TrainConfig; nested fields keep their own names."""
    out: dict[str, Any] = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _NESTED:
            out.update(dataclasses.asdict(v))
        else:
            out[f.name] = v
    return out


def _flat_types() -> dict[str, tuple[str | None, type]]:
    types: dict[str, tuple[str | None, type]] = {}
    for f in fields(TrainConfig):
        if f.name in _NESTED:
            for g in fields(_NESTED[f.name]):
                types[g.name] = (f.name, type(getattr(_NESTED[f.name](), g.name)))
        else:
            types[f.name] = (None, type(getattr(TrainConfig(), f.name)))
    return types


def _coerce(key: str, raw: Any, typ: type) -> Any:
    if isinstance(raw, typ) and not (typ is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def from_flat(values: dict[str, Any], base: TrainConfig | None = None) -> TrainConfig:
    """Build a TrainConfig from flat key/values, rejecting unknown keys."""
    types = _flat_types()
    flat = to_flat(base) if base is not None else to_flat(TrainConfig())
    for key, raw in values.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        flat[key] = _coerce(key, raw, types[key][1])
    nested: dict[str, dict[str, Any]] = {name: {} for name in _NESTED}
    top: dict[str, Any] = {}
    for key, v in flat.items():
        parent = types[key][0]
        if parent is None:
            top[key] = v
        else:
            nested[parent][key] = v
    for name, cls in _NESTED.items():
        top[name] = cls(**nested[name])
    return TrainConfig(**top)


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> TrainConfig:
    values = parse_config_text(Path(path).read_text())
    values.update(overrides or {})
    return from_flat(values)


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for key, v in to_flat(cfg).items():
        lines.append(f"{key} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg))
