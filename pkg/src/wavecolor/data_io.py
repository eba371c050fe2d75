"""Paired dataset indexing, patch sampling, normalization and channel statistics.

Directory convention: two flat directories of 8-bit PNG/JPEG files, one for
degraded inputs and one for references, paired by identical file stem
(``raw/0001.png`` <-> ``ref/0001.jpg``).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "IMAGE_SUFFIXES",
    "DataError",
    "PairedIndex",
    "Patch",
    "load_image",
    "save_image",
    "list_images",
    "index_pairs",
    "normalize",
    "denormalize",
    "pad_to_multiple",
    "sample_patch",
    "channel_histogram",
    "ChannelStats",
]

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class DataError(RuntimeError):
    """Unreadable or inconsistent input data."""


def load_image(path: str | Path) -> np.ndarray:
    """Decode an 8-bit image to an ``(H, W, 3)`` uint8 RGB array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc


def save_image(img: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path)


def list_images(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass(frozen=True)
class PairedIndex:
    entries: tuple[tuple[Path, Path], ...]
    degraded_dir: Path
    reference_dir: Path
    skipped: tuple[str, ...] = ()

    @property
    def count(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def index_pairs(degraded_dir: str | Path, reference_dir: str | Path,
                verify: bool = True) -> PairedIndex:
    """Match files by stem, in lexicographic order; unmatched stems are skipped."""
    deg = {p.stem: p for p in list_images(degraded_dir)}
    ref = {p.stem: p for p in list_images(reference_dir)}
    common = sorted(deg.keys() & ref.keys())
    skipped = tuple(sorted(deg.keys() ^ ref.keys()))
    for stem in skipped:
        log.warning("skipping unmatched image %r", stem)
    if not common:
        raise DataError(f"no matched pairs between {degraded_dir} and {reference_dir}")
    entries = tuple((deg[s], ref[s]) for s in common)
    if verify:
        for d, r in entries:
            a, b = load_image(d), load_image(r)
            if a.shape != b.shape:
                raise DataError(f"pair {d.name}/{r.name} differs in size: {a.shape} vs {b.shape}")
    return PairedIndex(entries, Path(degraded_dir), Path(reference_dir), skipped)


def normalize(img: np.ndarray) -> np.ndarray:
    """Map [0, 255] to [-1, 1] as float32."""
    return np.asarray(img, dtype=np.float32) / 127.5 - 1.0


def denormalize(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize`, rounded and clipped to uint8."""
    return np.clip(np.rint((np.asarray(x, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def pad_to_multiple(img: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Edge-replicate the bottom/right of an ``(H, W, C)`` image; returns the original (H, W)."""
    h, w = img.shape[:2]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        img = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return img, (h, w)


@dataclass
class Patch:
    degraded: np.ndarray  # (P, P, 3) float32 in [-1, 1]
    reference: np.ndarray
    source: str
    offset: tuple[int, int]
    flipped: bool


def sample_patch(pair: tuple[np.ndarray, np.ndarray] | tuple[Path, Path], patch_size: int,
                 rng: np.random.Generator, levels: int = 2, source: str = "") -> Patch:
    """Aligned random crop + optional horizontal flip of one degraded/reference pair."""
    deg, ref = pair
    if not isinstance(deg, np.ndarray):
        source = source or Path(deg).stem
        deg, ref = load_image(deg), load_image(ref)
    if deg.shape != ref.shape:
        raise DataError(f"pair {source!r} differs in size: {deg.shape} vs {ref.shape}")
    h, w = deg.shape[:2]
    if h < patch_size or w < patch_size:
        ph, pw = max(0, patch_size - h), max(0, patch_size - w)
        pad = ((0, ph), (0, pw), (0, 0))
        deg, ref = np.pad(deg, pad, mode="edge"), np.pad(ref, pad, mode="edge")
        h, w = deg.shape[:2]
    y = int(rng.integers(0, h - patch_size + 1))
    x = int(rng.integers(0, w - patch_size + 1))
    flip = bool(rng.random() < 0.5)
    crops = []
    for img in (deg, ref):
        c = img[y:y + patch_size, x:x + patch_size]
        if flip:
            c = c[:, ::-1]
        c, _ = pad_to_multiple(np.ascontiguousarray(c), 2**levels)
        crops.append(normalize(c))
    return Patch(crops[0], crops[1], source, (y, x), flip)


@dataclass
class ChannelStats:
    bin_edges: np.ndarray
    histograms: np.ndarray  # (3, bins), mean counts per image
    means: np.ndarray  # (3,)
    n_images: int

    def write_table(self, path: str | Path, delimiter: str = "\t") -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter=delimiter)
            writer.writerow(["# channel_means", *(f"{m:.6f}" for m in self.means)])
            writer.writerow(["bin_lo", "bin_hi", "r", "g", "b"])
            for i in range(self.histograms.shape[1]):
                writer.writerow([f"{self.bin_edges[i]:.4f}", f"{self.bin_edges[i + 1]:.4f}",
                                 *(f"{v:.6f}" for v in self.histograms[:, i])])

    def plot(self, path: str | Path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for c, name in enumerate("rgb"):
            ax.plot(centers, self.histograms[c], color=name,
                    label=f"{name.upper()} (mean {self.means[c]:.1f})")
        ax.set_xlabel("intensity")
        ax.set_ylabel("mean pixel count")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def channel_histogram(images, bins: int = 256) -> ChannelStats:
    """Per-channel histograms averaged over images, plus mean channel intensities.

    ``images`` is a :class:`PairedIndex` (degraded side is used), a list of
    paths, or a list of uint8 arrays.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    if isinstance(images, PairedIndex):
        images = [d for d, _ in images.entries]
    images = list(images)
    if not images:
        raise DataError("no images to summarize")
    edges = np.linspace(0.0, 256.0, bins + 1)
    hist = np.zeros((3, bins))
    sums = np.zeros(3)
    npix = 0
    for item in images:
        img = item if isinstance(item, np.ndarray) else load_image(item)
        for c in range(3):
            hist[c] += np.histogram(img[..., c], bins=edges)[0]
        sums += img.reshape(-1, 3).sum(axis=0)
        npix += img.shape[0] * img.shape[1]
    return ChannelStats(edges, hist / len(images), sums / npix, len(images))
