"""Image-quality metrics on images scaled to a peak value of 1."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def mse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a, b, max_val=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    err = mse(a, b)
    if err == 0:
        return float("inf")
    # written so that max_val=1 gives exactly -10*log10(mse)
    return -10.0 * math.log10(err) + 20.0 * math.log10(max_val)


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


class SSIMResult(NamedTuple):
    value: float
    window: tuple
    truncated: bool


def ssim_detail(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Mean SSIM over all positions where the Gaussian window fits.

    Images smaller than the window use a window cropped to the image size
    (renormalized) and report ``truncated=True``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"ssim needs two equal 2D images, got {a.shape} and {b.shape}")
    wh, ww = min(window, a.shape[0]), min(window, a.shape[1])
    gh = _centered(gaussian_window(window, sigma), wh)
    gw = _centered(gaussian_window(window, sigma), ww)

    def filt(img):
        rows = sliding_window_view(img, wh, axis=0) @ gh
        return sliding_window_view(rows, ww, axis=1) @ gw

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return SSIMResult(float(np.mean(num / den)), (wh, ww), (wh, ww) != (window, window))


def _centered(g, n):
    if n == g.size:
        return g
    start = (g.size - n) // 2
    g = g[start:start + n]
    return g / g.sum()


def ssim(a, b, **kwargs):
    return ssim_detail(a, b, **kwargs).value
