"""Binary checkpoint directory: manifest.json + weights.bin (+ optimizer state).

weights.bin holds little-endian float32 tensors concatenated in lexicographic
name order; manifest.json records name -> {shape, dtype, offset} plus the full
model config. Round-trips are bitwise. BatchNorm running statistics are
serialized like weights; the integer num_batches_tracked counter is excluded
(unused with fixed-momentum BN).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, to_dict


class CheckpointError(RuntimeError):
    """Raised when a checkpoint directory is inconsistent or truncated."""


def _named_tensors(model: torch.nn.Module) -> list[tuple[str, torch.Tensor]]:
    items = [(k, v) for k, v in model.state_dict().items()
             if not k.endswith("num_batches_tracked")]
    return sorted(items, key=lambda kv: kv[0])


def _write_bin(path: Path, tensors: list[tuple[str, torch.Tensor]]) -> dict:
    entries = {}
    offset = 0
    with open(path, "wb") as f:
        for name, t in tensors:
            arr = t.detach().cpu().to(torch.float32).numpy().astype("<f4")
            f.write(arr.tobytes())
            entries[name] = {"shape": list(t.shape), "dtype": "float32", "offset": offset}
            offset += arr.nbytes
    return entries


def _read_bin(path: Path, entries: dict) -> dict[str, torch.Tensor]:
    blob = path.read_bytes()
    expected = sum(int(np.prod(e["shape"])) * 4 for e in entries.values())
    if len(blob) != expected:
        raise CheckpointError(
            f"{path.name}: expected {expected} bytes, found {len(blob)} (corrupt?)")
    out = {}
    for name, e in entries.items():
        n = int(np.prod(e["shape"]))
        start = e["offset"]
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=start)
        out[name] = torch.from_numpy(arr.copy()).reshape(e["shape"])
    return out


def save_weights(model: torch.nn.Module, cfg: ModelConfig, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = _write_bin(path / "weights.bin", _named_tensors(model))
    manifest = {"tensors": entries, "model_config": to_dict(cfg)}
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def load_weights(path: str | Path) -> tuple[dict[str, torch.Tensor], ModelConfig]:
    path = Path(path)
    try:
        with open(path / "manifest.json") as f:
            manifest = json.load(f)
    except FileNotFoundError as e:
        raise CheckpointError(f"missing manifest.json in {path}") from e
    tensors = _read_bin(path / "weights.bin", manifest["tensors"])
    return tensors, ModelConfig(**manifest["model_config"])


def apply_weights(model: torch.nn.Module, tensors: dict[str, torch.Tensor]) -> None:
    state = dict(_named_tensors(model))
    if set(state) != set(tensors):
        missing = sorted(set(state) ^ set(tensors))
        raise CheckpointError(f"tensor name mismatch, e.g. {missing[0]}")
    for name, t in tensors.items():
        if tuple(state[name].shape) != tuple(t.shape):
            raise CheckpointError(
                f"shape mismatch for {name}: model {tuple(state[name].shape)} "
                f"vs checkpoint {tuple(t.shape)}")
    model.load_state_dict({**model.state_dict(), **tensors})


def save_checkpoint(model: torch.nn.Module, optimizer: torch.optim.Optimizer,
                    step: int, cfg: ModelConfig, path: str | Path) -> None:
    path = Path(path)
    save_weights(model, cfg, path)
    named = {id(p): n for n, p in model.named_parameters()}
    opt_tensors = []
    opt_steps = {}
    for group in optimizer.param_groups:
        for p in group["params"]:
            st = optimizer.state.get(p)
            if not st:
                continue
            name = named[id(p)]
            opt_tensors.append((f"{name}.exp_avg", st["exp_avg"]))
            opt_tensors.append((f"{name}.exp_avg_sq", st["exp_avg_sq"]))
            opt_steps[name] = float(st["step"])
    opt_tensors.sort(key=lambda kv: kv[0])
    entries = _write_bin(path / "optim.bin", opt_tensors)
    with open(path / "state.json", "w") as f:
        json.dump({"step": step, "optim_tensors": entries, "optim_steps": opt_steps},
                  f, indent=2, sort_keys=True)


def load_checkpoint(model: torch.nn.Module, optimizer: torch.optim.Optimizer,
                    path: str | Path) -> int:
    """Restores weights + Adam state in place; returns the saved step counter."""
    path = Path(path)
    tensors, _ = load_weights(path)
    apply_weights(model, tensors)
    try:
        with open(path / "state.json") as f:
            state = json.load(f)
    except FileNotFoundError as e:
        raise CheckpointError(f"missing state.json in {path}") from e
    opt_tensors = _read_bin(path / "optim.bin", state["optim_tensors"])
    for name, p in model.named_parameters():
        if name in state["optim_steps"]:
            optimizer.state[p] = {
                "step": torch.tensor(state["optim_steps"][name]),
                "exp_avg": opt_tensors[f"{name}.exp_avg"].clone(),
                "exp_avg_sq": opt_tensors[f"{name}.exp_avg_sq"].clone(),
            }
    return int(state["step"])
