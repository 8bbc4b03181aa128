"""Image-quality metrics: PSNR, NMSE, SSIM and dataset aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pair(i_hat, i_ref):
    i_hat = np.asarray(i_hat, dtype=np.float64)
    i_ref = np.asarray(i_ref, dtype=np.float64)
    if i_hat.shape != i_ref.shape:
        raise ValueError(f"shape mismatch {i_hat.shape} vs {i_ref.shape}")
    return i_hat, i_ref


def peak(i_ref) -> float:
    i_ref = np.asarray(i_ref, dtype=np.float64)
    return float(i_ref.max() - i_ref.min())


def psnr(i_hat, i_ref) -> float:
    """``10 log10(peak^2 / MSE)`` with ``peak = max(ref) - min(ref)``; +inf if identical."""
    i_hat, i_ref = _pair(i_hat, i_ref)
    mse = float(np.mean((i_hat - i_ref) ** 2))
    if mse == 0.0:
        return math.inf
    p = peak(i_ref)
    if p == 0.0:
        raise ValueError("reference image is constant; PSNR peak is zero")
    return 10.0 * math.log10(p * p / mse)


def nmse(i_hat, i_ref, squared: bool = False) -> float:
    """``||i_hat - i_ref|| / ||i_ref||`` (or its square with ``squared=True``)."""
    i_hat, i_ref = _pair(i_hat, i_ref)
    den = float(np.linalg.norm(i_ref))
    if den == 0.0:
        raise ValueError("reference image has zero norm")
    ratio = float(np.linalg.norm(i_hat - i_ref)) / den
    return ratio * ratio if squared else ratio


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    rows = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


@dataclass(frozen=True)
class SSIMTerms:
    ssim: float
    luminance: float  # mean local (2 mu_x mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
    contrast_structure: float  # mean local (2 cov + C2) / (var_x + var_y + C2)


def ssim_terms(i_hat, i_ref, window: int = 11, sigma: float = 1.5, k1: float = 0.01,
               k2: float = 0.03, data_range: float | None = None) -> SSIMTerms:
    """Gaussian-window SSIM over the valid region (no padding)."""
    i_hat, i_ref = _pair(i_hat, i_ref)
    if min(i_hat.shape) < window:
        raise ValueError(f"images must be at least {window} pixels on each side")
    if data_range is None:
        data_range = peak(i_ref)
    if data_range == 0.0:
        data_range = 1.0
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    g = gaussian_window(window, sigma)
    mu_x, mu_y = _filter_valid(i_hat, g), _filter_valid(i_ref, g)
    var_x = _filter_valid(i_hat * i_hat, g) - mu_x * mu_x
    var_y = _filter_valid(i_ref * i_ref, g) - mu_y * mu_y
    cov = _filter_valid(i_hat * i_ref, g) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2.0 * cov + c2) / (var_x + var_y + c2)
    return SSIMTerms(float(np.mean(lum * cs)), float(np.mean(lum)), float(np.mean(cs)))


def ssim(i_hat, i_ref, **kwargs) -> float:
    return ssim_terms(i_hat, i_ref, **kwargs).ssim


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    nmse: float
    ssim: float

    def as_row(self) -> dict:
        return {"psnr_db": self.psnr, "nmse": self.nmse, "ssim": self.ssim}


def evaluate(i_hat, i_ref, nmse_squared: bool = False) -> MetricReport:
    return MetricReport(psnr(i_hat, i_ref), nmse(i_hat, i_ref, nmse_squared), ssim(i_hat, i_ref))


def aggregate(values) -> tuple:
    """``(mean, sample standard deviation)``; std is 0 for a single value."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot aggregate an empty sequence")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std
