"""Dual-domain multi-scale single-image deraining."""

from .config import ModelConfig, RunConfig, TrainConfig, config_hash
from .model import DMSRNet, build_pyramid_batch, param_count

__all__ = [
    "DMSRNet",
    "ModelConfig",
    "RunConfig",
    "TrainConfig",
    "build_pyramid_batch",
    "config_hash",
    "param_count",
]
