"""Cross-spectral refinement of the wavelet detail bands.

The vertical and horizontal bands query the diagonal band through two
cross-attention layers; the fused diagonal feature and the v/h features
then each go through a dilated conv stack before being projected back to
image channels.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .wavelet import HighFreqTriplet

__all__ = [
    "DILATIONS",
    "CrossAttention",
    "DilatedStack",
    "CSDR",
    "cross_attention",
    "attention_weights",
    "receptive_field",
    "csdr_forward",
]

DILATIONS = (1, 2, 3, 2, 1)


def attention_weights(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    """Row-stochastic attention ``softmax(q k^T / sqrt(d))`` over sequence axis -2."""
    d = q.shape[-1]
    if d == 0:
        raise ValueError("key dimension must be positive")
    return torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(d), dim=-1)


def cross_attention(
    q_source: torch.Tensor,
    kv_source: torch.Tensor,
    w_q: torch.Tensor,
    w_k: torch.Tensor,
    w_v: torch.Tensor,
) -> torch.Tensor:
    """Cross attention between two ``(B, C, H, W)`` feature maps.

    Spatial positions form the sequence.  ``w_q`` and ``w_k`` are ``(d, C)``
    projection matrices, ``w_v`` is ``(C_out, C)``.  Returns ``(B, C_out, H, W)``.
    """
    if q_source.shape != kv_source.shape:
        raise ValueError(
            f"query and key/value maps differ: {tuple(q_source.shape)} vs {tuple(kv_source.shape)}"
        )
    b, _, hgt, wid = q_source.shape
    qs = q_source.flatten(2).transpose(1, 2)  # (B, N, C)
    kvs = kv_source.flatten(2).transpose(1, 2)
    attn = attention_weights(qs @ w_q.T, kvs @ w_k.T)
    out = attn @ (kvs @ w_v.T)
    return out.transpose(1, 2).reshape(b, -1, hgt, wid)


class CrossAttention(nn.Module):
    """Learned cross attention; long sequences are split into square tiles."""

    def __init__(self, channels: int, key_dim: int | None = None, max_positions: int = 4096,
                 tile: int = 64):
        super().__init__()
        key_dim = key_dim or channels
        if key_dim <= 0:
            raise ValueError("key_dim must be positive")
        self.query = nn.Linear(channels, key_dim, bias=False)
        self.key = nn.Linear(channels, key_dim, bias=False)
        self.value = nn.Linear(channels, channels, bias=False)
        self.max_positions = max_positions
        self.tile = tile

    def _attend(self, q_src: torch.Tensor, kv_src: torch.Tensor) -> torch.Tensor:
        return cross_attention(q_src, kv_src, self.query.weight, self.key.weight, self.value.weight)

    def forward(self, q_src: torch.Tensor, kv_src: torch.Tensor) -> torch.Tensor:
        hgt, wid = q_src.shape[-2:]
        if hgt * wid <= self.max_positions:
            return self._attend(q_src, kv_src)
        rows = []
        for y in range(0, hgt, self.tile):
            cols = []
            for x in range(0, wid, self.tile):
                sl = (..., slice(y, y + self.tile), slice(x, x + self.tile))
                cols.append(self._attend(q_src[sl], kv_src[sl]))
            rows.append(torch.cat(cols, dim=-1))
        return torch.cat(rows, dim=-2)


class DilatedStack(nn.Module):
    """Five same-padded 3x3 convs with dilations 1, 2, 3, 2, 1, SiLU after each."""

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.convs = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, padding=d, dilation=d) for d in DILATIONS
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[1]}")
        for conv in self.convs:
            x = F.silu(conv(x))
        return x


def receptive_field(dilations=DILATIONS, kernel: int = 3) -> int:
    return 1 + sum((kernel - 1) * d for d in dilations)


def _branch_in(c_in: int, c_int: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_int, 3, padding=1), nn.SiLU(), nn.Conv2d(c_int, c_int, 1)
    )


def _branch_out(c_int: int, c_out: int) -> nn.Sequential:
    head = nn.Conv2d(c_int, c_out, 1)
    nn.init.zeros_(head.weight)
    nn.init.zeros_(head.bias)
    return nn.Sequential(nn.Conv2d(c_int, c_int, 3, padding=1), nn.SiLU(), head)


class CSDR(nn.Module):
    """Refines one level's (v, h, d) triplet; every band is ``(B, C, h, w)``.

    With ``residual=True`` the input triplet is added to the output, so the
    zero-initialized output heads make a fresh module an exact identity.
    """

    def __init__(self, channels: int = 3, c_int: int = 64, residual: bool = True,
                 max_positions: int = 4096, tile: int = 64):
        super().__init__()
        self.channels = channels
        self.residual = residual
        self.in_v = _branch_in(channels, c_int)
        self.in_h = _branch_in(channels, c_int)
        self.in_d = _branch_in(channels, c_int)
        self.attn_vd = CrossAttention(c_int, max_positions=max_positions, tile=tile)
        self.attn_hd = CrossAttention(c_int, max_positions=max_positions, tile=tile)
        self.fuse = nn.Conv2d(2 * c_int, c_int, 1)
        self.dil_v = DilatedStack(c_int)
        self.dil_h = DilatedStack(c_int)
        self.dil_d = DilatedStack(c_int)
        self.out_v = _branch_out(c_int, channels)
        self.out_h = _branch_out(c_int, channels)
        self.out_d = _branch_out(c_int, channels)

    def forward(self, trip: HighFreqTriplet) -> HighFreqTriplet:
        fv, fh, fd = self.in_v(trip.v), self.in_h(trip.h), self.in_d(trip.d)
        f_vd = self.attn_vd(fv, fd)
        f_hd = self.attn_hd(fh, fd)
        fd = fd + self.fuse(torch.cat([f_vd, f_hd], dim=1))
        v = self.out_v(self.dil_v(fv))
        h = self.out_h(self.dil_h(fh))
        d = self.out_d(self.dil_d(fd))
        if self.residual:
            v, h, d = v + trip.v, h + trip.h, d + trip.d
        return HighFreqTriplet(v, h, d)


def csdr_forward(trip: HighFreqTriplet, module: CSDR) -> HighFreqTriplet:
    return module(trip)
