"""Synthetic underwater pairs built from bundled natural images.

Degradation follows the usual image-formation model: each channel keeps a
fraction ``transmission[c]`` of the scene radiance and fills the rest with
veiling light, after a mild blur from forward scattering.  Red is attenuated
most, as in real water.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage import data as skdata
from skimage.transform import resize

__all__ = ["natural_images", "natural_patches", "underwater_degrade", "color_cast",
           "synthetic_pairs", "gray_balance", "cast_corpus", "channel_gap"]

_SOURCES = ("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry", "retina")


def natural_images() -> list[np.ndarray]:
    return [getattr(skdata, name)() for name in _SOURCES]


def natural_patches(n: int, size: int, rng: np.random.Generator,
                    scale: float = 0.5) -> list[np.ndarray]:
    """Random ``size x size`` uint8 crops from downscaled natural images."""
    imgs = []
    for img in natural_images():
        h, w = img.shape[:2]
        small = resize(img, (int(h * scale), int(w * scale)), anti_aliasing=True,
                       preserve_range=True)
        imgs.append(small.astype(np.float64))
    out = []
    for _ in range(n):
        img = imgs[int(rng.integers(len(imgs)))]
        y = int(rng.integers(0, img.shape[0] - size + 1))
        x = int(rng.integers(0, img.shape[1] - size + 1))
        out.append(np.clip(np.rint(img[y:y + size, x:x + size]), 0, 255).astype(np.uint8))
    return out


def underwater_degrade(img: np.ndarray, transmission=(0.35, 0.7, 0.8),
                       veil=(0.05, 0.4, 0.5), blur: float = 0.8) -> np.ndarray:
    x = img.astype(np.float64) / 255.0
    if blur > 0:
        x = ndimage.gaussian_filter(x, sigma=(blur, blur, 0))
    t = np.asarray(transmission)
    out = x * t + np.asarray(veil) * (1.0 - t)
    return np.clip(np.rint(out * 255.0), 0, 255).astype(np.uint8)


def color_cast(img: np.ndarray, gains) -> np.ndarray:
    """Scale each channel by its gain (values in [0, 1] attenuate)."""
    out = img.astype(np.float64) * np.asarray(gains)[None, None, :]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def synthetic_pairs(n: int, size: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(degraded, reference)`` uint8 pairs with mildly varied water parameters."""
    rng = np.random.default_rng(seed)
    pairs = []
    for ref in natural_patches(n, size, rng):
        t = np.array([0.35, 0.7, 0.8]) + rng.uniform(-0.05, 0.05, 3)
        veil = np.array([0.05, 0.4, 0.5]) + rng.uniform(-0.05, 0.05, 3)
        pairs.append((underwater_degrade(ref, t, veil), ref))
    return pairs


def gray_balance(img: np.ndarray) -> np.ndarray:
    """Scale channels so their means match the overall mean (gray-world)."""
    x = img.astype(np.float64)
    means = x.reshape(-1, 3).mean(axis=0)
    target = means.mean()
    out = x * (target / np.maximum(means, 1e-6))[None, None, :]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def cast_corpus(n: int, size: int, seed: int = 0, gain_range=(0.4, 1.0)):
    """``(cast, balanced_reference, gains)`` triples with random per-channel gains."""
    rng = np.random.default_rng(seed)
    out = []
    for patch in natural_patches(n, size, rng):
        ref = gray_balance(patch)
        gains = rng.uniform(*gain_range, 3)
        out.append((color_cast(ref, gains), ref, gains))
    return out


def channel_gap(img) -> float:
    """Mean absolute pairwise difference of the three channel means."""
    m = np.asarray(img, dtype=np.float64).reshape(-1, 3).mean(axis=0)
    return float((abs(m[0] - m[1]) + abs(m[0] - m[2]) + abs(m[1] - m[2])) / 3)
