"""Non-reference underwater quality scores (UCIQE, UIQM) and metric reports.

Images are ``(H, W, 3)`` RGB arrays on the [0, 255] scale.  Weight constants
come from ``data/metric_weights.yaml``; pass a different mapping to
:func:`load_weights` consumers to override them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import yaml
from skimage import color, filters

__all__ = [
    "load_weights",
    "uciqe",
    "uiqm",
    "uicm",
    "uism",
    "uiconm",
    "MetricReport",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("file", "psnr", "ssim", "uciqe", "uiqm")


@lru_cache(maxsize=None)
def _default_weights() -> str:
    return resources.files("wavecolor").joinpath("data/metric_weights.yaml").read_text()


def load_weights(path: str | Path | None = None) -> dict[str, Any]:
    text = Path(path).read_text() if path is not None else _default_weights()
    return yaml.safe_load(text)


def _as_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    return img


def uciqe(img: np.ndarray, weights: Mapping[str, Any] | None = None) -> float:
    """Weighted chroma spread, luminance contrast and mean saturation in CIELab."""
    w = (weights or load_weights())["uciqe"]
    rgb = _as_rgb(img)
    lab = color.rgb2lab(np.clip(rgb / 255.0, 0.0, 1.0))
    lum = lab[..., 0]
    chroma = np.hypot(lab[..., 1], lab[..., 2])
    sigma_c = float(np.std(chroma))

    flat = np.sort(lum, axis=None)
    n_tail = max(1, int(round(w["contrast_tail"] * flat.size)))
    con_l = float(flat[-n_tail:].mean() - flat[:n_tail].mean())

    with np.errstate(divide="ignore", invalid="ignore"):
        sat = np.where((chroma > 0) & (lum > 0), chroma / lum, 0.0)
    mu_s = float(sat.mean())
    return w["c_chroma_std"] * sigma_c + w["c_luma_contrast"] * con_l + w["c_saturation"] * mu_s


def _trimmed_stats(x: np.ndarray, low: float, high: float) -> tuple[float, float]:
    x = np.sort(x, axis=None)
    n = x.size
    lo, hi = int(math.ceil(low * n)), int(math.floor(high * n))
    kept = x[lo:n - hi] if n - hi > lo else x
    mu = float(kept.mean())
    return mu, float(np.mean((kept - mu) ** 2))


def uicm(img: np.ndarray, weights: Mapping[str, Any] | None = None) -> float:
    """Colorfulness from alpha-trimmed statistics of the RG and YB opponent channels."""
    w = (weights or load_weights())["uiqm"]["uicm"]
    rgb = _as_rgb(img)
    rg = rgb[..., 0] - rgb[..., 1]
    yb = 0.5 * (rgb[..., 0] + rgb[..., 1]) - rgb[..., 2]
    mu_rg, var_rg = _trimmed_stats(rg, w["trim_low"], w["trim_high"])
    mu_yb, var_yb = _trimmed_stats(yb, w["trim_low"], w["trim_high"])
    return w["c_mean"] * math.hypot(mu_rg, mu_yb) + w["c_std"] * math.sqrt(var_rg + var_yb)


def _blocks(shape: tuple[int, int], size: int) -> Iterable[tuple[slice, slice]]:
    """Tile an image into ``size`` blocks; the last row/column absorbs the remainder."""
    ny, nx = math.ceil(shape[0] / size), math.ceil(shape[1] / size)
    for i in range(ny):
        ys = slice(i * size, (i + 1) * size if i < ny - 1 else shape[0])
        for j in range(nx):
            yield ys, slice(j * size, (j + 1) * size if j < nx - 1 else shape[1])


def _eme(ch: np.ndarray, block: int) -> float:
    ny, nx = math.ceil(ch.shape[0] / block), math.ceil(ch.shape[1] / block)
    total = 0.0
    for ys, xs in _blocks(ch.shape, block):
        b = ch[ys, xs]
        lo, hi = float(b.min()), float(b.max())
        # empty edge responses count as a flat block
        lo = lo if lo > 0 else 1.0
        hi = hi if hi > 0 else 1.0
        total += math.log(hi / lo)
    return 2.0 * total / (ny * nx)


def uism(img: np.ndarray, weights: Mapping[str, Any] | None = None) -> float:
    """Sharpness: EME of Sobel-weighted channels, combined with luminance weights."""
    w = (weights or load_weights())["uiqm"]["uism"]
    rgb = _as_rgb(img)
    score = 0.0
    for c, lam in enumerate(w["channel_weights"]):
        ch = rgb[..., c]
        edge = ch * filters.sobel(ch / 255.0)
        edge = np.clip(np.round(edge), 0, 255)
        score += lam * _eme(edge, w["block"])
    return score


def _plip_sub(a: float, b: float, gamma: float) -> float:
    return gamma * (a - b) / (gamma - b)


def _plip_sum(a: float, b: float, gamma: float) -> float:
    return a + b - a * b / gamma


def _plip_scalar_mult(c: float, a: float, gamma: float) -> float:
    return gamma - gamma * (1.0 - a / gamma) ** c


def uiconm(img: np.ndarray, weights: Mapping[str, Any] | None = None) -> float:
    """Contrast: PLIP log-AMEE of the [0, 255] grayscale image."""
    w = (weights or load_weights())["uiqm"]["uiconm"]
    gamma = w["plip_gamma"]
    gray = color.rgb2gray(np.clip(_as_rgb(img) / 255.0, 0.0, 1.0)) * 255.0
    ny, nx = math.ceil(gray.shape[0] / w["block"]), math.ceil(gray.shape[1] / w["block"])
    s = 0.0
    for ys, xs in _blocks(gray.shape, w["block"]):
        b = gray[ys, xs]
        hi, lo = float(b.max()), float(b.min())
        bottom = _plip_sum(hi, lo, gamma)
        m = _plip_sub(hi, lo, gamma) / bottom if bottom != 0 else 0.0
        if m > 0:
            s += m * math.log(m)
    return _plip_scalar_mult(1.0 / (ny * nx), s, gamma)


def uiqm(img: np.ndarray, weights: Mapping[str, Any] | None = None) -> float:
    weights = weights or load_weights()
    w = weights["uiqm"]
    return (w["c_uicm"] * uicm(img, weights) + w["c_uism"] * uism(img, weights)
            + w["c_uiconm"] * uiconm(img, weights))


@dataclass
class MetricReport:
    """Per-image metric rows plus their column means."""

    rows: list[dict[str, Any]] = field(default_factory=list)
    weights_version: int | None = None
    config: dict[str, Any] = field(default_factory=dict)

    def add(self, file: str, uciqe: float, uiqm: float, psnr: float | None = None,
            ssim: float | None = None) -> None:
        self.rows.append({"file": file, "psnr": psnr, "ssim": ssim, "uciqe": uciqe, "uiqm": uiqm})

    @property
    def columns(self) -> list[str]:
        has_ref = any(r["psnr"] is not None for r in self.rows)
        return [c for c in REPORT_COLUMNS if has_ref or c not in ("psnr", "ssim")]

    @property
    def aggregate(self) -> dict[str, float]:
        out = {}
        for c in self.columns[1:]:
            vals = [r[c] for r in self.rows if r[c] is not None]
            if vals:
                out[c] = float(np.mean(vals))
        return out

    def write_table(self, path: str | Path, delimiter: str = "\t") -> None:
        cols = self.columns
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter=delimiter)
            writer.writerow(cols)
            for r in self.rows:
                writer.writerow([r["file"]] + [f"{r[c]:.6f}" for c in cols[1:]])
            agg = self.aggregate
            writer.writerow(["mean"] + [f"{agg[c]:.6f}" for c in cols[1:]])

    def to_dict(self) -> dict[str, Any]:
        cols = self.columns
        return {
            "columns": cols,
            "per_image": [{c: r[c] for c in cols} for r in self.rows],
            "aggregate": self.aggregate,
            "weights_version": self.weights_version,
            "config": self.config,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
