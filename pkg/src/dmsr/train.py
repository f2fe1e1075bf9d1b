"""Loss, LR schedule, and the deterministic training loop."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import ModelConfig, TrainConfig
from .data import PyramidSample, sample_patch, to_tensor_batch
from .model import DMSRNet


class NonFiniteError(RuntimeError):
    """Raised when a forward/backward pass produces NaN or Inf."""


@dataclass
class LossReport:
    total: torch.Tensor
    per_scale_l1: list[float]
    per_scale_freq: list[float]

    @property
    def total_value(self) -> float:
        return float(self.total.detach())


def loss_fn(outs, gts, lambda_freq: float) -> LossReport:
    """Multi-scale L1 plus frequency-domain L1 on stacked real/imag parts."""
    l1_terms, freq_terms = [], []
    for out, gt in zip(outs, gts):
        if out.shape != gt.shape:
            raise ValueError(f"loss_fn: shape mismatch {tuple(out.shape)} vs {tuple(gt.shape)}")
        l1_terms.append((out - gt).abs().mean())
        so, sg = torch.fft.rfft2(out), torch.fft.rfft2(gt)
        diff = torch.cat([(so.real - sg.real), (so.imag - sg.imag)], dim=1)
        freq_terms.append(diff.abs().mean())
    total = sum(l1_terms) + lambda_freq * sum(freq_terms)
    return LossReport(total,
                      [float(t.detach()) for t in l1_terms],
                      [float(t.detach()) for t in freq_terms])


def lr_at(step: int, steps_per_epoch: int, tc: TrainConfig) -> float:
    """Linear warmup to lr0, then cosine annealing down to eta_min."""
    warm = tc.warmup_epochs * steps_per_epoch
    if step < warm:
        return tc.lr0 * (step + 1) / warm
    # anneal from the last warmup step (lr0) to the last training step (eta_min)
    total = tc.total_epochs * steps_per_epoch - warm
    t = min(step - (warm - 1), total)
    return tc.eta_min + 0.5 * (tc.lr0 - tc.eta_min) * (1.0 + math.cos(math.pi * t / total))


def _first_nonfinite(model: DMSRNet, outs) -> str:
    for i, o in enumerate(outs):
        if not torch.isfinite(o).all():
            return f"output[{i}]"
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            return name
        if p.grad is not None and not torch.isfinite(p.grad).all():
            return f"{name}.grad"
    return "loss"


def train_step(model: DMSRNet, optimizer: torch.optim.Optimizer,
               rainy, clean, tc: TrainConfig, step: int,
               steps_per_epoch: int) -> LossReport:
    """One forward/backward/Adam update at the scheduled learning rate."""
    lr = lr_at(step, steps_per_epoch, tc)
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.zero_grad(set_to_none=True)
    outs = model(*rainy)
    report = loss_fn(outs, clean, tc.lambda_freq)
    if not torch.isfinite(report.total):
        raise NonFiniteError(f"non-finite loss; first offender: {_first_nonfinite(model, outs)}")
    report.total.backward()
    optimizer.step()
    return report


def make_optimizer(model: DMSRNet, tc: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=tc.lr0,
                            betas=tc.adam_betas, eps=tc.adam_eps)


def _sample_for_step(pairs: list[tuple[np.ndarray, np.ndarray]], tc: TrainConfig,
                     global_index: int) -> PyramidSample:
    # each sample owns an rng stream derived from (seed, sample index)
    rng = np.random.default_rng([tc.seed, global_index])
    rainy, clean = pairs[int(rng.integers(0, len(pairs)))]
    patch = min(tc.patch, rainy.shape[0], rainy.shape[1])
    patch -= patch % 4
    return sample_patch(rainy, clean, patch, rng)


def train_loop(model: DMSRNet, pairs: list[tuple[np.ndarray, np.ndarray]],
               cfg: ModelConfig, tc: TrainConfig, out_dir: str | Path,
               total_steps: int | None = None,
               steps_per_epoch: int | None = None) -> list[LossReport]:
    """Deterministic training over in-memory rainy/clean pairs.

    Writes a per-step CSV log and checkpoints (every ckpt_interval steps if
    set, plus a final one) under out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if steps_per_epoch is None:
        steps_per_epoch = max(1, math.ceil(len(pairs) / tc.batch))
    if total_steps is None:
        total_steps = tc.total_epochs * steps_per_epoch

    torch.manual_seed(tc.seed)
    optimizer = make_optimizer(model, tc)
    reports = []
    with open(out_dir / "train_log.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "lr", "total",
                         "l1_full", "l1_half", "l1_quarter",
                         "freq_full", "freq_half", "freq_quarter"])
        sample_index = 0
        for step in range(total_steps):
            samples = []
            for _ in range(tc.batch):
                samples.append(_sample_for_step(pairs, tc, sample_index))
                sample_index += 1
            rainy, clean = to_tensor_batch(samples)
            report = train_step(model, optimizer, rainy, clean, tc, step, steps_per_epoch)
            reports.append(report)
            writer.writerow([step, f"{lr_at(step, steps_per_epoch, tc):.8e}",
                             f"{report.total_value:.8e}",
                             *(f"{v:.8e}" for v in report.per_scale_l1),
                             *(f"{v:.8e}" for v in report.per_scale_freq)])
            if tc.ckpt_interval and (step + 1) % tc.ckpt_interval == 0:
                save_checkpoint(model, optimizer, step + 1, cfg,
                                out_dir / f"ckpt_{step + 1:06d}")
    save_checkpoint(model, optimizer, total_steps, cfg, out_dir / "ckpt_final")
    return reports
