"""Gaze-weighted PSNR/SSIM.

Weights fall off as a Gaussian of the pixel distance to the gaze point.
EWPSNR is PSNR of the weight-averaged squared error; EWSSIM is the
weight-averaged SSIM map over 8x8 sliding windows, each window weighted by
the weight at its center.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import FovSpec

PSNR_CAP = 99.0
SSIM_WINDOW = 8
K1, K2 = 0.01, 0.03
_LUMA = np.array([0.299, 0.587, 0.114])


def to_luma(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.ndim == 3:
        return frame.astype(np.float64) @ _LUMA
    return frame.astype(np.float64)


def default_sigma(fov: FovSpec, width: int, degrees: float = 5.0) -> float:
    """Pixels subtending ``degrees`` of visual angle at the view axis."""
    return degrees * fov.pixels_per_degree(width)


def foveation_weights(shape, gaze, sigma: float) -> np.ndarray:
    """``exp(-r^2 / 2 sigma^2)`` over an ``(H, W)`` grid, r measured from ``gaze``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, w = shape[:2]
    gx, gy = (gaze.x, gaze.y) if hasattr(gaze, "x") else gaze
    # separable: exp(-(dx^2 + dy^2)/2s^2) = exp(-dx^2/2s^2) * exp(-dy^2/2s^2)
    wx = np.exp(-((np.arange(w) - gx) ** 2) / (2.0 * sigma * sigma))
    wy = np.exp(-((np.arange(h) - gy) ** 2) / (2.0 * sigma * sigma))
    return np.outer(wy, wx)


def _check(ref, test):
    ref, test = np.asarray(ref), np.asarray(test)
    if ref.shape != test.shape:
        raise ValueError(f"frame shapes differ: {ref.shape} vs {test.shape}")
    return to_luma(ref), to_luma(test)


def _psnr_from_mse(mse: float) -> float:
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0 ** 2 / mse))


def psnr(ref, test) -> float:
    a, b = _check(ref, test)
    return _psnr_from_mse(float(np.mean((a - b) ** 2)))


def ewpsnr(ref, test, weights: np.ndarray) -> float:
    a, b = _check(ref, test)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != a.shape:
        raise ValueError("weight map does not match frame size")
    return _psnr_from_mse(float(np.sum(w * (a - b) ** 2) / np.sum(w)))


def ssim_map(ref, test, window: int = SSIM_WINDOW) -> np.ndarray:
    """SSIM index of every full ``window x window`` patch, top-left anchored."""
    a, b = _check(ref, test)
    if min(a.shape) < window:
        raise ValueError(f"frames smaller than the {window}-pixel SSIM window")
    c1, c2 = (K1 * 255) ** 2, (K2 * 255) ** 2
    n = float(window * window)

    def mean(x):
        # box sums of every valid window from a zero-padded integral image
        ii = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
        ii[1:, 1:] = x.cumsum(0).cumsum(1)
        return (ii[window:, window:] - ii[:-window, window:]
                - ii[window:, :-window] + ii[:-window, :-window]) / n

    mu_a, mu_b = mean(a), mean(b)
    var_a = mean(a * a) - mu_a ** 2
    var_b = mean(b * b) - mu_b ** 2
    cov = mean(a * b) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def window_center_weights(weights: np.ndarray, window: int = SSIM_WINDOW) -> np.ndarray:
    """Weight map sampled at the centers of the valid windows (bilinear for even windows)."""
    w = np.asarray(weights, dtype=np.float64)
    h, wd = w.shape
    nh, nw = h - window + 1, wd - window + 1
    half = (window - 1) / 2.0
    if window % 2:
        c = int(half)
        return w[c:c + nh, c:c + nw]
    c = window // 2 - 1
    return 0.25 * (w[c:c + nh, c:c + nw] + w[c + 1:c + 1 + nh, c:c + nw]
                   + w[c:c + nh, c + 1:c + 1 + nw] + w[c + 1:c + 1 + nh, c + 1:c + 1 + nw])


def ssim(ref, test) -> float:
    return float(np.clip(ssim_map(ref, test).mean(), 0.0, 1.0))


def ewssim(ref, test, weights: np.ndarray) -> float:
    smap = ssim_map(ref, test)
    w = window_center_weights(weights)
    return float(np.clip(np.sum(w * smap) / np.sum(w), 0.0, 1.0))


def frame_quality(ref, test, weights: np.ndarray) -> dict:
    """All four scores in one pass over the SSIM map."""
    a, b = _check(ref, test)
    w = np.asarray(weights, dtype=np.float64)
    err = (a - b) ** 2
    smap = ssim_map(a, b)
    wc = window_center_weights(w)
    return dict(
        ewpsnr=_psnr_from_mse(float(np.sum(w * err) / np.sum(w))),
        ewssim=float(np.clip(np.sum(wc * smap) / np.sum(wc), 0.0, 1.0)),
        psnr=_psnr_from_mse(float(err.mean())),
        ssim=float(np.clip(smap.mean(), 0.0, 1.0)),
    )
