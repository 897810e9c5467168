"""Image and surface metrics: PSNR, SSIM, altitude MAE."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

PSNR_IDENTICAL = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """10·log10(1/MSE) for images in [0, 1]; identical inputs give 99."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _gray(img):
    return img.mean(axis=-1) if img.ndim == 3 else img


def ssim(a, b) -> float:
    """Mean SSIM over all fully contained 11×11 Gaussian windows.

    Color images are reduced to gray by averaging channels.
    """
    a, b = _pair(a, b)
    a, b = _gray(a), _gray(b)
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image of shape {a.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w = gaussian_window()

    def filt(x):
        return convolve2d(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a ** 2
    sbb = filt(b * b) - mu_b ** 2
    sab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * sab + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (saa + sbb + SSIM_C2)
    return float(np.mean(num / den))


def altitude_mae(pred, true, pred_valid=None, true_valid=None) -> float:
    """Mean |Δz| over cells valid in both grids.

    Grids may be arrays (NaN marks invalid) or objects with ``z``/``valid``.
    """
    if hasattr(pred, "z"):
        pred_valid = pred.valid if pred_valid is None else pred_valid
        pred = pred.z
    if hasattr(true, "z"):
        true_valid = true.valid if true_valid is None else true_valid
        true = true.z
    p, t = _pair(pred, true)
    valid = np.isfinite(p) & np.isfinite(t)
    if pred_valid is not None:
        valid &= np.asarray(pred_valid, bool)
    if true_valid is not None:
        valid &= np.asarray(true_valid, bool)
    if not valid.any():
        raise ValueError("no jointly valid cells")
    return float(np.mean(np.abs(p[valid] - t[valid])))
