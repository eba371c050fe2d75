"""Orthonormal 2-D Haar transform and its exact inverse.

All functions work on numpy arrays and torch tensors alike, with the two
spatial axes last: ``(..., H, W)``.  Channel and batch axes ride along in
the leading dimensions, so ``(C, H, W)`` planes and ``(B, C, H, W)`` batches
are both fine.  Nothing here copies to a particular backend, which keeps
the torch path differentiable.

Kernels are applied by stride-2 *correlation* (no flipping).  For a 2x2
block ``[[a, b], [c, d]]`` the four outputs are::

    low = ( a + b + c + d) / 2
    v   = (-a - b + c + d) / 2      # H^T L, sign change across rows
    h   = (-a + b - c + d) / 2      # L^T H, sign change across columns
    d   = ( a - b - c + d) / 2      # H^T H
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "KernelSet",
    "SubbandQuad",
    "HighFreqTriplet",
    "WaveletPyramid",
    "haar_kernels",
    "dwt_level",
    "idwt_level",
    "dwt",
    "idwt",
]

Array = Any  # np.ndarray or torch.Tensor


@dataclass(frozen=True)
class KernelSet:
    k_ll: np.ndarray
    k_v: np.ndarray
    k_h: np.ndarray
    k_d: np.ndarray

    def as_tuple(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.k_ll, self.k_v, self.k_h, self.k_d


@dataclass
class HighFreqTriplet:
    """Vertical, horizontal and diagonal detail bands at one level."""

    v: Array
    h: Array
    d: Array

    def __post_init__(self) -> None:
        if not (self.v.shape == self.h.shape == self.d.shape):
            raise ValueError(
                f"detail bands differ in shape: v={tuple(self.v.shape)}, "
                f"h={tuple(self.h.shape)}, d={tuple(self.d.shape)}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.v.shape)

    def bands(self) -> tuple[Array, Array, Array]:
        return self.v, self.h, self.d


@dataclass
class SubbandQuad:
    low: Array
    v: Array
    h: Array
    d: Array

    def __post_init__(self) -> None:
        shapes = {tuple(b.shape) for b in (self.low, self.v, self.h, self.d)}
        if len(shapes) != 1:
            raise ValueError(f"subbands must share one shape, got {sorted(shapes)}")

    @property
    def highs(self) -> HighFreqTriplet:
        return HighFreqTriplet(self.v, self.h, self.d)


@dataclass
class WaveletPyramid:
    """Coarsest low band plus one detail triplet per level.

    ``highs[0]`` is the finest level (k = 1), ``highs[-1]`` the coarsest
    (k = K), so ``highs[k - 1]`` has spatial size ``(H / 2**k, W / 2**k)``.
    """

    low: Array
    highs: list[HighFreqTriplet] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.highs)

    def validate(self) -> None:
        low_hw = tuple(self.low.shape[-2:])
        if not self.highs:
            return
        if tuple(self.highs[-1].shape[-2:]) != low_hw:
            raise ValueError(
                f"coarsest detail level has size {self.highs[-1].shape[-2:]}, "
                f"low band has {low_hw}"
            )
        for fine, coarse in zip(self.highs[:-1], self.highs[1:]):
            fh, fw = fine.shape[-2:]
            ch, cw = coarse.shape[-2:]
            if (fh, fw) != (2 * ch, 2 * cw):
                raise ValueError(
                    f"detail levels do not halve: {(fh, fw)} followed by {(ch, cw)}"
                )
            if fine.shape[:-2] != coarse.shape[:-2]:
                raise ValueError("detail levels disagree on leading dimensions")


def haar_kernels() -> KernelSet:
    """Return the four stride-2 Haar kernels as outer products of L and H."""
    lo = np.array([1.0, 1.0]) / math.sqrt(2.0)
    hi = np.array([-1.0, 1.0]) / math.sqrt(2.0)
    return KernelSet(
        k_ll=np.outer(lo, lo),
        k_v=np.outer(hi, lo),
        k_h=np.outer(lo, hi),
        k_d=np.outer(hi, hi),
    )


def _check_even(x: Array) -> None:
    height, width = x.shape[-2], x.shape[-1]
    if height % 2:
        raise ValueError(f"height (axis -2) must be even, got {height}")
    if width % 2:
        raise ValueError(f"width (axis -1) must be even, got {width}")


def dwt_level(plane: Array) -> SubbandQuad:
    """One level of the Haar analysis transform; halves both spatial dims."""
    _check_even(plane)
    a = plane[..., 0::2, 0::2]
    b = plane[..., 0::2, 1::2]
    c = plane[..., 1::2, 0::2]
    d = plane[..., 1::2, 1::2]
    return SubbandQuad(
        low=(a + b + c + d) * 0.5,
        v=(c + d - a - b) * 0.5,
        h=(b + d - a - c) * 0.5,
        d=(a + d - b - c) * 0.5,
    )


def _interleave(a: Array, b: Array, c: Array, d: Array) -> Array:
    """Place four quarter-size planes back on the 2x2 polyphase grid."""
    *lead, height, width = a.shape
    if isinstance(a, np.ndarray):
        top = np.stack([a, b], axis=-1).reshape(*lead, height, 2 * width)
        bottom = np.stack([c, d], axis=-1).reshape(*lead, height, 2 * width)
        return np.stack([top, bottom], axis=-2).reshape(*lead, 2 * height, 2 * width)
    import torch

    top = torch.stack([a, b], dim=-1).reshape(*lead, height, 2 * width)
    bottom = torch.stack([c, d], dim=-1).reshape(*lead, height, 2 * width)
    return torch.stack([top, bottom], dim=-2).reshape(*lead, 2 * height, 2 * width)


def idwt_level(quad: SubbandQuad) -> Array:
    """Adjoint (and exact inverse) of :func:`dwt_level`."""
    low, v, h, d = quad.low, quad.v, quad.h, quad.d
    return _interleave(
        (low - v - h + d) * 0.5,
        (low - v + h - d) * 0.5,
        (low + v - h - d) * 0.5,
        (low + v + h + d) * 0.5,
    )


def dwt(plane: Array, levels: int) -> WaveletPyramid:
    """Apply :func:`dwt_level` ``levels`` times to the successive low bands."""
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    factor = 2**levels
    height, width = plane.shape[-2], plane.shape[-1]
    for axis, size in (("height", height), ("width", width)):
        if size % factor:
            raise ValueError(f"{axis} {size} is not divisible by 2**{levels} = {factor}")
    highs = []
    low = plane
    for _ in range(levels):
        quad = dwt_level(low)
        highs.append(quad.highs)
        low = quad.low
    return WaveletPyramid(low=low, highs=highs)


def idwt(pyramid: WaveletPyramid) -> Array:
    """Fold :func:`idwt_level` from the coarsest level out to full resolution."""
    pyramid.validate()
    low = pyramid.low
    for trip in reversed(pyramid.highs):
        if tuple(trip.shape) != tuple(low.shape):
            raise ValueError(
                f"detail level of shape {tuple(trip.shape)} cannot combine "
                f"with low band of shape {tuple(low.shape)}"
            )
        low = idwt_level(SubbandQuad(low, trip.v, trip.h, trip.d))
    return low
