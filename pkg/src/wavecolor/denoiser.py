"""Conditional U-shaped noise estimator over the coarsest wavelet band."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = ["time_embed", "DenoiserInput", "Denoiser"]


def time_embed(t: torch.Tensor | int, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal timestep features ``[sin(t / w_j), cos(t / w_j)]``.

    ``w_j`` is spaced geometrically from 1 to ``max_period`` over ``dim / 2``
    frequencies.  Scalar ``t`` gives a ``(dim,)`` vector, a ``(B,)`` tensor
    gives ``(B, dim)``.
    """
    if dim % 2:
        raise ValueError(f"embedding dim must be even, got {dim}")
    scalar = not torch.is_tensor(t) or t.dim() == 0
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    if (t < 0).any():
        raise ValueError("timesteps must be >= 0")
    half = dim // 2
    exponents = torch.arange(half, dtype=torch.float64) / max(half - 1, 1)
    periods = max_period**exponents
    args = t[:, None] / periods[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1).float()
    return emb[0] if scalar else emb


def _groups(channels: int) -> int:
    for g in (8, 4, 2):
        if channels % g == 0:
            return g
    return 1


@dataclass
class DenoiserInput:
    x_t: torch.Tensor  # (B, 3, h, w)
    cond_low: torch.Tensor  # (B, 3, h, w)
    cond_high: torch.Tensor  # (B, 9, h, w), refined (v, h, d) of the coarsest level
    t: torch.Tensor  # (B,) integer timesteps

    def stacked(self) -> torch.Tensor:
        shapes = {tuple(p.shape[-2:]) for p in (self.x_t, self.cond_low, self.cond_high)}
        if len(shapes) != 1:
            raise ValueError(f"denoiser inputs disagree on spatial size: {sorted(shapes)}")
        if self.x_t.shape[1] != 3 or self.cond_low.shape[1] != 3:
            raise ValueError("x_t and cond_low must have 3 channels")
        if self.cond_high.shape[1] != 9:
            raise ValueError(f"cond_high must have 9 channels, got {self.cond_high.shape[1]}")
        return torch.cat([self.x_t, self.cond_low, self.cond_high], dim=1)


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, temb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.temb = nn.Linear(temb_dim, out_ch)
        self.norm2 = nn.GroupNorm(_groups(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class Denoiser(nn.Module):
    """Noise predictor taking ``x_t || cond_low || cond_high`` (15 channels).

    ``scales`` resolution levels with ``blocks`` residual blocks each and one
    concatenated skip per level.  Spatial input size must be divisible by
    ``2 ** (scales - 1)``.
    """

    in_channels = 15

    def __init__(
        self,
        base_width: int = 64,
        scales: int = 3,
        blocks: int = 2,
        channel_mult: tuple[int, ...] | None = None,
        embed_dim: int = 128,
    ):
        super().__init__()
        mult = channel_mult or tuple(min(2**i, 2) for i in range(scales))
        if len(mult) != scales:
            raise ValueError("channel_mult needs one entry per scale")
        self.scales = scales
        self.embed_dim = embed_dim
        self.temb = nn.Sequential(
            nn.Linear(embed_dim, embed_dim), nn.SiLU(), nn.Linear(embed_dim, embed_dim)
        )
        self.conv_in = nn.Conv2d(self.in_channels, base_width, 3, padding=1)

        widths = [base_width * m for m in mult]
        self.down = nn.ModuleList()
        self.downsample = nn.ModuleList()
        ch = base_width
        for i, w in enumerate(widths):
            stage = nn.ModuleList()
            for _ in range(blocks):
                stage.append(ResBlock(ch, w, embed_dim))
                ch = w
            self.down.append(stage)
            if i < scales - 1:
                self.downsample.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))

        self.mid = ResBlock(ch, ch, embed_dim)

        self.up = nn.ModuleList()
        self.upsample = nn.ModuleList()
        for i, w in reversed(list(enumerate(widths))):
            stage = nn.ModuleList()
            stage.append(ResBlock(ch + w, w, embed_dim))
            for _ in range(blocks - 1):
                stage.append(ResBlock(w, w, embed_dim))
            ch = w
            self.up.append(stage)
            if i > 0:
                self.upsample.append(nn.Conv2d(ch, widths[i - 1], 3, padding=1))
                ch = widths[i - 1]

        self.norm_out = nn.GroupNorm(_groups(ch), ch)
        self.conv_out = nn.Conv2d(ch, 3, 3, padding=1)
        nn.init.zeros_(self.conv_out.weight)
        nn.init.zeros_(self.conv_out.bias)

    def forward(self, inp: DenoiserInput) -> torch.Tensor:
        x = inp.stacked()
        factor = 2 ** (self.scales - 1)
        if x.shape[-2] % factor or x.shape[-1] % factor:
            raise ValueError(
                f"spatial size {tuple(x.shape[-2:])} not divisible by {factor}"
            )
        t = torch.as_tensor(inp.t, device=x.device).reshape(-1)
        if t.numel() == 1 and x.shape[0] > 1:
            t = t.expand(x.shape[0])
        temb = self.temb(time_embed(t, self.embed_dim).to(x))

        h = self.conv_in(x)
        skips = []
        for i, stage in enumerate(self.down):
            for block in stage:
                h = block(h, temb)
            skips.append(h)
            if i < len(self.downsample):
                h = self.downsample[i](h)
        h = self.mid(h, temb)
        for j, stage in enumerate(self.up):
            h = torch.cat([h, skips.pop()], dim=1)
            for block in stage:
                h = block(h, temb)
            if j < len(self.upsample):
                h = F.interpolate(h, scale_factor=2.0, mode="nearest")
                h = self.upsample[j](h)
        return self.conv_out(F.silu(self.norm_out(h)))


def eps_predict(inp: DenoiserInput, net: Denoiser) -> torch.Tensor:
    return net(inp)


def count_flops(net: Denoiser, height: int, width: int) -> int:
    """Forward FLOPs of one single-image evaluation at the given band size."""
    from torch.utils.flop_counter import FlopCounterMode

    z = torch.zeros(1, 3, height, width)
    inp = DenoiserInput(z, z, torch.zeros(1, 9, height, width), torch.tensor([1]))
    with torch.no_grad(), FlopCounterMode(display=False) as counter:
        net(inp)
    return int(counter.get_total_flops())

