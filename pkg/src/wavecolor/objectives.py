"""Training losses and full-reference image metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .wavelet import HighFreqTriplet

__all__ = [
    "LossBreakdown",
    "loss_noise",
    "loss_details",
    "loss_content",
    "loss_total",
    "ssim",
    "psnr",
    "gaussian_window",
]

Reduction = Literal["mean", "sum"]


@dataclass
class LossBreakdown:
    noise: torch.Tensor
    details: torch.Tensor
    content: torch.Tensor
    total: torch.Tensor
    lam: float = 0.1

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in ("noise", "details", "content", "total")}


def _check_shapes(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def _reduce(x: torch.Tensor, reduction: Reduction) -> torch.Tensor:
    if reduction == "mean":
        return x.mean()
    if reduction == "sum":
        return x.sum()
    raise ValueError(f"unknown reduction {reduction!r}")


def loss_noise(eps_true: torch.Tensor, eps_pred: torch.Tensor,
               reduction: Reduction = "mean") -> torch.Tensor:
    _check_shapes(eps_true, eps_pred)
    return _reduce((eps_true - eps_pred) ** 2, reduction)


def loss_details(refined: Sequence[HighFreqTriplet], reference: Sequence[HighFreqTriplet],
                 reduction: Reduction = "mean") -> torch.Tensor:
    """Sum over levels of the squared error between refined and reference triplets."""
    if len(refined) != len(reference):
        raise ValueError(f"level count mismatch: {len(refined)} vs {len(reference)}")
    total = None
    for k, (r, g) in enumerate(zip(refined, reference), start=1):
        a = torch.cat(list(r.bands()), dim=1)
        b = torch.cat(list(g.bands()), dim=1)
        if a.shape != b.shape:
            raise ValueError(f"level {k}: shape {tuple(a.shape)} vs {tuple(b.shape)}")
        term = _reduce((a - b) ** 2, reduction)
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return total


def gaussian_window(size: int = 11, sigma: float = 1.5, dtype=torch.float32) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g).to(dtype)


def ssim(a: torch.Tensor, b: torch.Tensor, value_range: tuple[float, float] = (-1.0, 1.0),
         window: int = 11, sigma: float = 1.5) -> torch.Tensor:
    """Mean local SSIM of two ``(B, C, H, W)`` (or ``(C, H, W)``) tensors.

    Inputs are mapped from ``value_range`` to [0, 1] so the dynamic range is 1.
    Statistics use a valid-mode Gaussian window; the result is averaged over
    positions, channels and batch.
    """
    _check_shapes(a, b)
    if a.dim() == 3:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < window:
        raise ValueError(f"image {tuple(a.shape[-2:])} smaller than the {window}x{window} window")
    lo, hi = value_range
    a = (a - lo) / (hi - lo)
    b = (b - lo) / (hi - lo)
    c1, c2 = 0.01**2, 0.03**2
    ch = a.shape[1]
    w = gaussian_window(window, sigma, a.dtype).to(a.device).expand(ch, 1, window, window)

    def filt(x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, w, groups=ch)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return (num / den).mean()


def loss_content(x0_hat_low: torch.Tensor, x0_low: torch.Tensor,
                 value_range: tuple[float, float] = (-1.0, 1.0),
                 reduction: Reduction = "mean") -> torch.Tensor:
    """L1 distance plus ``1 - SSIM`` between the restored and clean low bands.

    ``value_range`` is the nominal range of the bands for SSIM; a level-K Haar
    low band of a [-1, 1] image spans ``[-2**K, 2**K]``.
    """
    _check_shapes(x0_hat_low, x0_low)
    l1 = _reduce((x0_hat_low - x0_low).abs(), reduction)
    return l1 + (1.0 - ssim(x0_hat_low, x0_low, value_range))


def loss_total(noise: torch.Tensor, details: torch.Tensor, content: torch.Tensor,
               lam: float = 0.1) -> LossBreakdown:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    total = noise + lam * details + content
    return LossBreakdown(noise=noise, details=details, content=content, total=total, lam=lam)


def psnr(a, b, peak: float = 255.0, cap: float = 100.0) -> float:
    """Peak signal-to-noise ratio in dB; ``cap`` when the images are identical."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    a = np.asarray(a.detach().cpu() if torch.is_tensor(a) else a, dtype=np.float64)
    b = np.asarray(b.detach().cpu() if torch.is_tensor(b) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * math.log10(peak**2 / mse))
