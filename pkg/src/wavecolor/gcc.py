"""Global color correction with condition-driven feature modulation.

A small strided encoder summarizes the whole low band into a 32-d
condition vector.  Per-block linear generators turn that vector (plus a
time embedding) into channel scales and shifts for a pointwise baseline
network, so each pixel is corrected independently under a global prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .denoiser import time_embed

__all__ = ["FmParams", "fm_apply", "ConditionNet", "GCC", "COND_DIM"]

COND_DIM = 32


@dataclass
class FmParams:
    """Per-channel scale and shift, ``(B, C)`` or ``(C,)``."""

    gamma: torch.Tensor
    beta: torch.Tensor


def fm_apply(x: torch.Tensor, params: FmParams) -> torch.Tensor:
    """``gamma * x + beta`` per channel of a ``(B, C, H, W)`` map; no normalization."""
    gamma, beta = params.gamma, params.beta
    if gamma.shape[-1] != x.shape[1] or beta.shape[-1] != x.shape[1]:
        raise ValueError(
            f"modulation length {gamma.shape[-1]}/{beta.shape[-1]} does not match "
            f"{x.shape[1]} feature channels"
        )
    if gamma.dim() == 1:
        gamma, beta = gamma[None], beta[None]
    return gamma[:, :, None, None] * x + beta[:, :, None, None]


class ConditionNet(nn.Module):
    """Three stride-2 convs (7x7, 3x3, 3x3; 32 ch) and global average pooling.

    Replicate padding keeps spatially constant inputs constant through every
    layer, so the pooled vector of a flat image does not depend on its size.
    """

    def __init__(self, in_channels: int = 3, embed_dim: int = 128):
        super().__init__()
        self.convs = nn.ModuleList([
            nn.Conv2d(in_channels, COND_DIM, 7, stride=2, padding=3, padding_mode="replicate"),
            nn.Conv2d(COND_DIM, COND_DIM, 3, stride=2, padding=1, padding_mode="replicate"),
            nn.Conv2d(COND_DIM, COND_DIM, 3, stride=2, padding=1, padding_mode="replicate"),
        ])
        self.time_proj = nn.Linear(embed_dim, COND_DIM)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != 3:
            raise ValueError(f"condition input needs 3 channels, got {x.shape[1]}")
        if min(x.shape[-2:]) < 8:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} too small for three stride-2 layers (need >= 8)"
            )
        h = x
        for conv in self.convs:
            h = F.silu(conv(h))
        return h.mean(dim=(-2, -1)) + self.time_proj(temb)


class GCC(nn.Module):
    """Condition network plus a 1x1 baseline network with FM blocks.

    The baseline predicts a correction that is added to the input; its last
    layer starts at zero so an untrained module passes samples through.
    """

    def __init__(self, width: int = 64, fm_blocks: int = 3, embed_dim: int = 128,
                 channels: int = 3):
        super().__init__()
        self.embed_dim = embed_dim
        self.condition = ConditionNet(channels, embed_dim)
        self.time_proj = nn.Linear(embed_dim, COND_DIM)
        self.convs = nn.ModuleList(
            nn.Conv2d(channels if i == 0 else width, width, 1) for i in range(fm_blocks)
        )
        self.generators = nn.ModuleList(
            nn.Linear(2 * COND_DIM, 2 * width) for _ in range(fm_blocks)
        )
        for gen in self.generators:
            nn.init.zeros_(gen.weight)
            nn.init.zeros_(gen.bias)
        self.head = nn.Conv2d(width, channels, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def embed(self, t: torch.Tensor | int, batch: int, like: torch.Tensor) -> torch.Tensor:
        t = torch.as_tensor(t).reshape(-1)
        if t.numel() == 1:
            t = t.expand(batch)
        return time_embed(t, self.embed_dim).to(like)

    def condition_encode(self, x: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
        return self.condition(x, self.embed(t, x.shape[0], x))

    def fm_params(self, cond: torch.Tensor, temb: torch.Tensor) -> list[FmParams]:
        z = torch.cat([cond, self.time_proj(temb)], dim=-1)
        params = []
        for gen in self.generators:
            dg, beta = gen(z).chunk(2, dim=-1)
            params.append(FmParams(gamma=1.0 + dg, beta=beta))
        return params

    def baseline(self, x: torch.Tensor, params: list[FmParams]) -> torch.Tensor:
        """Pointwise network under fixed modulation; equivariant to pixel permutations."""
        h = x
        for conv, p in zip(self.convs, params):
            h = F.silu(fm_apply(conv(h), p))
        return x + self.head(h)

    def forward(self, x: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
        temb = self.embed(t, x.shape[0], x)
        cond = self.condition(x, temb)
        return self.baseline(x, self.fm_params(cond, temb))


def condition_encode(x: torch.Tensor, t: torch.Tensor | int, module: GCC) -> torch.Tensor:
    return module.condition_encode(x, t)


def gcc_forward(x_low: torch.Tensor, t: torch.Tensor | int, module: GCC) -> torch.Tensor:
    return module(x_low, t)
