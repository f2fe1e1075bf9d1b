"""Paired dataset scanning, procedural rain synthesis, and pyramid sampling.

Images are H x W x 3 float32 arrays in [0, 1]; PNG 8-bit is the on-disk
format, decoded as v / 255.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import cv2
import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage


class DatasetError(ValueError):
    """Raised for malformed dataset layouts (orphan files, bad dims)."""


def load_image(path: str | Path) -> np.ndarray:
    img = PILImage.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def save_image(img: np.ndarray, path: str | Path) -> None:
    arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(arr).save(path)


def scan_pair_dataset(root: str | Path) -> list[tuple[Path, Path]]:
    """Deterministic lexicographic pairing of root/rain/* with root/gt/*."""
    root = Path(root)
    rain_dir, gt_dir = root / "rain", root / "gt"
    rain = {p.name: p for p in rain_dir.glob("*.png")} if rain_dir.is_dir() else {}
    gt = {p.name: p for p in gt_dir.glob("*.png")} if gt_dir.is_dir() else {}
    for name in sorted(set(rain) | set(gt)):
        if name not in gt:
            raise DatasetError(f"orphan rainy image without ground truth: {name}")
        if name not in rain:
            raise DatasetError(f"orphan ground truth without rainy image: {name}")
    return [(rain[name], gt[name]) for name in sorted(rain)]


@dataclass
class RainParams:
    streak_count: int = 80
    angle_deg: float = 10.0
    length_px: int = 12
    intensity: float = 0.25
    blur_sigma: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.streak_count < 0:
            raise ValueError("streak_count must be >= 0")
        if not -30.0 <= self.angle_deg <= 30.0:
            raise ValueError("angle_deg must lie in [-30, 30]")
        if self.length_px < 1:
            raise ValueError("length_px must be positive")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("intensity must lie in [0, 1]")
        if self.blur_sigma < 0:
            raise ValueError("blur_sigma must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


def synth_rain(clean: np.ndarray, p: RainParams) -> np.ndarray:
    """Adds a deterministic additive streak layer: clamp(clean + streaks, 0, 1)."""
    if p.intensity == 0.0 or p.streak_count == 0:
        return clean.copy()
    h, w = clean.shape[:2]
    rng = np.random.default_rng(p.seed)
    layer = np.zeros((h, w), dtype=np.float32)
    theta = math.radians(90.0 - p.angle_deg)  # angle measured from vertical
    dx = math.cos(theta) * p.length_px
    dy = math.sin(theta) * p.length_px
    for _ in range(p.streak_count):
        x0 = rng.uniform(-p.length_px, w + p.length_px)
        y0 = rng.uniform(-p.length_px, h + p.length_px)
        brightness = rng.uniform(0.4, 1.0)
        cv2.line(layer,
                 (int(round(x0)), int(round(y0))),
                 (int(round(x0 + dx)), int(round(y0 + dy))),
                 float(brightness), 1, cv2.LINE_AA)
    if p.blur_sigma > 0:
        k = 2 * int(math.ceil(3 * p.blur_sigma)) + 1
        layer = cv2.GaussianBlur(layer, (k, k), p.blur_sigma)
    rainy = clean + p.intensity * layer[..., None]
    return np.clip(rainy, 0.0, 1.0).astype(np.float32)


@dataclass
class PyramidSample:
    rainy: tuple[np.ndarray, np.ndarray, np.ndarray]  # S1, S2, S3
    clean: tuple[np.ndarray, np.ndarray, np.ndarray]  # G1, G2, G3


def _downscale(img: np.ndarray, factor: float) -> np.ndarray:
    t = torch.from_numpy(img).permute(2, 0, 1)[None]
    out = F.interpolate(t, scale_factor=factor, mode="bilinear", align_corners=False)
    return out[0].permute(1, 2, 0).contiguous().numpy()


def build_pyramid(rainy: np.ndarray, clean: np.ndarray) -> PyramidSample:
    h, w = rainy.shape[:2]
    if h % 4 or w % 4:
        raise DatasetError(f"pyramid needs dims divisible by 4, got {h}x{w}")
    if rainy.shape != clean.shape:
        raise DatasetError("rainy/clean shape mismatch")
    return PyramidSample(
        rainy=(rainy, _downscale(rainy, 0.5), _downscale(rainy, 0.25)),
        clean=(clean, _downscale(clean, 0.5), _downscale(clean, 0.25)),
    )


def sample_patch(rainy: np.ndarray, clean: np.ndarray, patch: int,
                 rng: np.random.Generator, augment: bool = True) -> PyramidSample:
    """Random aligned crop + consistent flips, then pyramid construction."""
    h, w = rainy.shape[:2]
    if patch % 4:
        raise ValueError("patch must be divisible by 4")
    if patch > min(h, w):
        raise ValueError(f"patch {patch} exceeds image size {h}x{w}")
    y = int(rng.integers(0, h - patch + 1))
    x = int(rng.integers(0, w - patch + 1))
    r = rainy[y:y + patch, x:x + patch]
    c = clean[y:y + patch, x:x + patch]
    if augment:
        if rng.integers(0, 2):
            r, c = r[:, ::-1], c[:, ::-1]
        if rng.integers(0, 2):
            r, c = r[::-1], c[::-1]
    return build_pyramid(np.ascontiguousarray(r), np.ascontiguousarray(c))


def _random_clean_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth colorful background: blurred noise plus a soft gradient."""
    base = rng.uniform(0.1, 0.9, size=(size // 8, size // 8, 3)).astype(np.float32)
    img = cv2.resize(base, (size, size), interpolation=cv2.INTER_CUBIC)
    gy = np.linspace(-0.1, 0.1, size, dtype=np.float32)
    img = img + gy[:, None, None]
    return np.clip(img, 0.0, 1.0)


def make_synthetic_dataset(out_root: str | Path, count: int, seed: int,
                           size: int = 64) -> list[RainParams]:
    """Writes root/rain, root/gt PNG pairs plus rainparams.json."""
    out_root = Path(out_root)
    (out_root / "rain").mkdir(parents=True, exist_ok=True)
    (out_root / "gt").mkdir(parents=True, exist_ok=True)
    used = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        clean = _random_clean_image(rng, size)
        p = RainParams(
            streak_count=int(rng.integers(40, 120)),
            angle_deg=float(rng.uniform(-30, 30)),
            length_px=int(rng.integers(6, 20)),
            intensity=float(rng.uniform(0.15, 0.35)),
            blur_sigma=float(rng.uniform(0.4, 1.0)),
            seed=int(rng.integers(0, 2**63)),
        )
        rainy = synth_rain(clean, p)
        save_image(clean, out_root / "gt" / f"{i:04d}.png")
        save_image(rainy, out_root / "rain" / f"{i:04d}.png")
        used.append(p)
    with open(out_root / "rainparams.json", "w") as f:
        json.dump([asdict(p) for p in used], f, indent=2)
    return used


def to_tensor_batch(samples: list[PyramidSample]):
    """Stacks PyramidSamples into (S1,S2,S3), (G1,G2,G3) B x 3 x H x W tensors."""
    def stack(images):
        return torch.stack([torch.from_numpy(im).permute(2, 0, 1) for im in images])
    rainy = tuple(stack([s.rainy[i] for s in samples]) for i in range(3))
    clean = tuple(stack([s.clean[i] for s in samples]) for i in range(3))
    return rainy, clean
