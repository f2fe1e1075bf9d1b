"""Configuration dataclasses and JSON round-trip helpers."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class ModelConfig:
    base_channels: int = 32
    blocks_per_stage: list[int] = field(default_factory=lambda: [2, 2, 2, 2, 2, 2])
    fdsm_kernels: list[int] = field(default_factory=lambda: [3, 5, 7])
    mpsrm_pool_rates: list[int] = field(default_factory=lambda: [4, 2])
    spga_enabled: bool = True
    spga_skip_enabled: bool = True
    mpsrm_tail_conv_enabled: bool = True
    fdsm_fft_enabled: bool = True
    fdsm_modulation_pw_enabled: bool = True
    num_input_scales: int = 3

    def __post_init__(self):
        if self.base_channels < 1:
            raise ConfigError("base_channels must be positive")
        if len(self.blocks_per_stage) != 6:
            raise ConfigError("blocks_per_stage must have exactly 6 entries")
        if any(b < 1 for b in self.blocks_per_stage):
            raise ConfigError("blocks_per_stage entries must be >= 1")
        if not self.fdsm_kernels:
            raise ConfigError("fdsm_kernels must not be empty")
        if any(k < 1 or k % 2 == 0 for k in self.fdsm_kernels):
            raise ConfigError("fdsm_kernels must all be odd and positive")
        for a, b in zip(self.mpsrm_pool_rates, self.mpsrm_pool_rates[1:]):
            if a <= b:
                raise ConfigError("mpsrm_pool_rates must be strictly decreasing")
        if any(not _is_power_of_two(r) for r in self.mpsrm_pool_rates):
            raise ConfigError("mpsrm_pool_rates must be powers of two")
        if self.num_input_scales not in (1, 2, 3):
            raise ConfigError("num_input_scales must be 1, 2 or 3")


@dataclass
class TrainConfig:
    lr0: float = 2e-4
    warmup_epochs: int = 3
    total_epochs: int = 5
    batch: int = 12
    patch: int = 64
    lambda_freq: float = 0.1
    eta_min: float = 1e-6
    seed: int = 0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    ckpt_interval: int = 0  # steps between checkpoints; 0 = final only

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        if not (self.warmup_epochs < self.total_epochs):
            raise ConfigError("warmup_epochs must be < total_epochs")
        if not (self.lr0 > self.eta_min >= 0):
            raise ConfigError("need lr0 > eta_min >= 0")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.patch % 4 != 0:
            raise ConfigError("patch must be divisible by 4")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data_root: str = "data"
    out_dir: str = "out"
    tile: int = 64
    overlap: int = 16

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if self.tile % 4 != 0 or self.tile < 16:
            raise ConfigError("tile must be >= 16 and divisible by 4")
        if not (0 <= self.overlap < self.tile):
            raise ConfigError("overlap must satisfy 0 <= overlap < tile")


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg) -> str:
    """Stable hash over the fully resolved config; changes iff a field changes."""
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_run_config(path: str | Path) -> RunConfig:
    with open(path) as f:
        raw = json.load(f)
    try:
        return RunConfig(**raw)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(to_dict(cfg), f, indent=2, sort_keys=True)
