"""Image similarity metrics on BT.601 luma."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


def to_gray(img) -> np.ndarray:
    """Float luma in [0, 1]; uint8 input is divided by 255, float input taken as is."""
    a = np.asarray(getattr(img, "pixels", img))
    a = a / 255.0 if a.dtype == np.uint8 else a.astype(np.float64)
    if a.ndim == 3:
        if a.shape[2] != 3:
            raise ValueError("colour images must have 3 channels")
        a = a @ np.array([0.299, 0.587, 0.114])
    if a.ndim != 2:
        raise ValueError("expected a 2D or RGB image")
    return a


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    w = np.exp(-x * x / (2 * sigma * sigma))
    return w / w.sum()


def _filter_valid(a, w):
    r = len(w) // 2
    out = correlate1d(correlate1d(a, w, axis=0, mode="constant"), w, axis=1, mode="constant")
    return out[r:a.shape[0] - r, r:a.shape[1] - r]


def ssim(a, b) -> float:
    """Mean SSIM over all fully contained 11x11 Gaussian windows, dynamic range 1."""
    x, y = to_gray(a), to_gray(b)
    if x.shape != y.shape:
        raise ValueError(f"image dimensions differ: {x.shape} vs {y.shape}")
    if min(x.shape) < WINDOW:
        raise ValueError(f"images must be at least {WINDOW}x{WINDOW}")
    w = gaussian_window()
    mx, my = _filter_valid(x, w), _filter_valid(y, w)
    sxx = _filter_valid(x * x, w) - mx * mx
    syy = _filter_valid(y * y, w) - my * my
    sxy = _filter_valid(x * y, w) - mx * my
    c1, c2 = K1**2, K2**2
    s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    return float(s.mean())


def image_metrics(a, b, psnr_ceiling: float = 100.0) -> dict:
    """``{"ssim", "mae", "psnr"}`` of two equally sized images."""
    x, y = to_gray(a), to_gray(b)
    if x.shape != y.shape:
        raise ValueError(f"image dimensions differ: {x.shape} vs {y.shape}")
    diff = x - y
    mse = float(np.mean(diff * diff))
    psnr = psnr_ceiling if mse == 0 else min(psnr_ceiling, 10.0 * np.log10(1.0 / mse))
    return {"ssim": ssim(x, y), "mae": float(np.mean(np.abs(diff))), "psnr": float(psnr)}
