"""Y-channel (BT.601 studio-swing) PSNR / SSIM and histogram analysis."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

# studio-swing BT.601: Y_255 = 16 + 65.481 R + 128.553 G + 24.966 B, RGB in [0,1]
_Y_COEFFS = np.array([65.481, 128.553, 24.966], dtype=np.float64)
_Y_OFFSET = 16.0


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """H x W x 3 RGB in [0,1] -> H x W luminance in [0,1]."""
    if img.min() < -1e-6 or img.max() > 1 + 1e-6:
        raise ValueError("rgb_to_y expects values in [0, 1]")
    return (_Y_OFFSET + img.astype(np.float64) @ _Y_COEFFS) / 255.0


def psnr_y(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB over the Y channel, peak 1.0; +inf for identical inputs."""
    if a.shape != b.shape:
        raise ValueError("psnr_y: shape mismatch")
    mse = float(np.mean((rgb_to_y(a) - rgb_to_y(b)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(coords**2) / (2 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim_y(a: np.ndarray, b: np.ndarray, window: int = 11,
           sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Single-scale SSIM on Y: Gaussian window, dynamic range 1, valid positions."""
    if a.shape != b.shape:
        raise ValueError("ssim_y: shape mismatch")
    x, y = rgb_to_y(a), rgb_to_y(b)
    if min(x.shape) < window:
        raise ValueError(f"ssim_y needs min(H, W) >= {window}")
    win = _gaussian_window(window, sigma)
    c1, c2 = k1**2, k2**2

    def filt(z):
        return convolve2d(z, win, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x**2
    syy = filt(y * y) - mu_y**2
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def y_histogram(img: np.ndarray, bins: int) -> np.ndarray:
    """Uniform-width histogram of Y values over [0,1]; last bin right-inclusive."""
    if bins < 2:
        raise ValueError("y_histogram needs bins >= 2")
    counts, _ = np.histogram(rgb_to_y(img), bins=bins, range=(0.0, 1.0))
    return counts
