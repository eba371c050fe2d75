"""Training and inference in the wavelet domain.

Training (one optimizer step per batch):
  DWT both images -> refine degraded detail bands -> noise the clean low band
  at a random t -> noise loss; restore the low band with the skip-sampled
  reverse loop (or the one-shot x0 estimate) -> content loss; detail loss on
  the refined bands; step on the weighted total.

Inference mirrors the reverse loop: S denoiser calls, each followed by color
correction, then IDWT with the refined detail bands.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Literal

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint as ckpt_io
from .csdr import CSDR
from .data_io import PairedIndex, Patch, denormalize, load_image, normalize, sample_patch
from .denoiser import Denoiser, DenoiserInput
from .diffusion import NoiseSchedule, make_schedule, p_step, predict_x0, q_sample, skip_grid
from .gcc import GCC
from .objectives import LossBreakdown, loss_content, loss_details, loss_noise, loss_total
from .wavelet import HighFreqTriplet, WaveletPyramid, dwt, idwt

__all__ = [
    "TrainConfig",
    "SampleConfig",
    "RestorationModel",
    "build_model",
    "schedule_for",
    "train_step",
    "reverse_loop",
    "fit",
    "enhance",
    "lr_at",
    "make_checkpoint",
    "restore",
]

log = logging.getLogger(__name__)

ContentMode = Literal["full_loop", "x0_shortcut"]


@dataclass
class TrainConfig:
    T: int = 200
    S: int = 10
    K: int = 2
    batch: int = 16
    patch: int = 256
    lr: float = 1e-4
    lr_decay: float = 0.8
    lr_decay_every: int = 50
    epochs: int = 500
    lam: float = 0.1
    beta_start: float = 1e-4
    beta_end: float = 0.02
    content_mode: ContentMode = "full_loop"
    # reverse steps (counted from the end) that keep gradients in full_loop mode
    grad_steps: int = 2
    train_sampling: Literal["stochastic", "deterministic"] = "stochastic"
    reduction: Literal["mean", "sum"] = "mean"
    base_width: int = 32
    scales: int = 3
    c_int: int = 64
    gcc_width: int = 64
    embed_dim: int = 128
    attn_max_positions: int = 4096
    use_gcc: bool = True
    use_csdr: bool = True
    seed: int = 0
    checkpoint_every: int = 10

    def validate(self) -> "TrainConfig":
        if self.T % self.S:
            raise ValueError(f"T={self.T} must be divisible by S={self.S}")
        if self.patch % (2**self.K):
            raise ValueError(f"patch {self.patch} must be divisible by 2**K={2**self.K}")
        if self.content_mode not in ("full_loop", "x0_shortcut"):
            raise ValueError(f"unknown content_mode {self.content_mode!r}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.grad_steps < 1:
            raise ValueError("grad_steps must be >= 1")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()


@dataclass
class SampleConfig:
    S: int = 10
    mode: Literal["stochastic", "deterministic"] = "stochastic"
    use_gcc: bool = True
    use_csdr: bool = True
    seed: int = 0


def schedule_for(cfg: TrainConfig) -> NoiseSchedule:
    return make_schedule(cfg.T, cfg.beta_start, cfg.beta_end)


class RestorationModel(nn.Module):
    """Denoiser, color correction and one detail refiner per wavelet level."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.levels = cfg.K
        self.denoiser = Denoiser(cfg.base_width, cfg.scales, embed_dim=cfg.embed_dim)
        self.gcc = GCC(cfg.gcc_width, embed_dim=cfg.embed_dim)
        self.csdr = nn.ModuleList(
            CSDR(3, cfg.c_int, max_positions=cfg.attn_max_positions) for _ in range(cfg.K)
        )
        self.use_gcc = cfg.use_gcc
        self.use_csdr = cfg.use_csdr

    @property
    def pad_multiple(self) -> int:
        return 2 ** (self.levels + self.denoiser.scales - 1)

    def refine(self, highs: list[HighFreqTriplet]) -> list[HighFreqTriplet]:
        if not self.use_csdr:
            return list(highs)
        return [m(trip) for m, trip in zip(self.csdr, highs)]

    @staticmethod
    def cond_high(refined: list[HighFreqTriplet]) -> torch.Tensor:
        return torch.cat(list(refined[-1].bands()), dim=1)

    def eps(self, x_t: torch.Tensor, cond_low: torch.Tensor, cond_high: torch.Tensor,
            t: torch.Tensor | int) -> torch.Tensor:
        t = torch.as_tensor(t).reshape(-1)
        if t.numel() == 1:
            t = t.expand(x_t.shape[0])
        return self.denoiser(DenoiserInput(x_t, cond_low, cond_high, t))

    def correct(self, x: torch.Tensor, t: int) -> torch.Tensor:
        return self.gcc(x, t) if self.use_gcc else x


def build_model(cfg: TrainConfig) -> RestorationModel:
    """Construct a model with weights drawn from a generator seeded by ``cfg.seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        return RestorationModel(cfg)


def _randn(shape, generator: torch.Generator, like: torch.Tensor) -> torch.Tensor:
    return torch.randn(shape, generator=generator, dtype=like.dtype).to(like.device)


def reverse_loop(model: RestorationModel, cond_low: torch.Tensor, cond_high: torch.Tensor,
                 sched: NoiseSchedule, S: int, generator: torch.Generator,
                 mode: str = "stochastic", grad_steps: int | None = None) -> torch.Tensor:
    """Skip-sampled reverse chain from Gaussian noise to a restored low band.

    Only the last ``grad_steps`` iterations are recorded for autograd
    (``None`` keeps all of them).  Color correction runs after every step,
    conditioned on the time the sample has just reached.
    """
    grid = skip_grid(sched.T, S)
    x = _randn(cond_low.shape, generator, cond_low)
    n = len(grid)
    for i, (t, t_prev) in enumerate(grid):
        track = torch.is_grad_enabled() and (grad_steps is None or i >= n - grad_steps)
        with torch.set_grad_enabled(track):
            if not track:
                x = x.detach()
            eps_hat = model.eps(x, cond_low, cond_high, t)
            x = p_step(x, eps_hat, t, t_prev, sched, mode,
                       noise_source=lambda: _randn(x.shape, generator, x))
            x = model.correct(x, t_prev)
    return x


def _to_batch(patches: list[Patch]) -> tuple[torch.Tensor, torch.Tensor]:
    deg = torch.from_numpy(np.stack([p.degraded for p in patches])).permute(0, 3, 1, 2)
    ref = torch.from_numpy(np.stack([p.reference for p in patches])).permute(0, 3, 1, 2)
    return deg.contiguous(), ref.contiguous()


def compute_losses(model: RestorationModel, degraded: torch.Tensor, reference: torch.Tensor,
                   sched: NoiseSchedule, cfg: TrainConfig,
                   generator: torch.Generator) -> LossBreakdown:
    """Forward pass of one training step; returns differentiable loss terms."""
    pyr_d = dwt(degraded, cfg.K)
    pyr_0 = dwt(reference, cfg.K)
    refined = model.refine(pyr_d.highs)
    cond_high = model.cond_high(refined)
    x0 = pyr_0.low
    b = x0.shape[0]

    t = torch.randint(1, sched.T + 1, (b,), generator=generator)
    eps = _randn(x0.shape, generator, x0)
    x_t = q_sample(x0, t, eps, sched)
    eps_hat = model.eps(x_t, pyr_d.low, cond_high, t)
    l_noise = loss_noise(eps, eps_hat, cfg.reduction)

    if cfg.content_mode == "full_loop":
        x0_hat = reverse_loop(model, pyr_d.low, cond_high, sched, cfg.S, generator,
                              cfg.train_sampling, cfg.grad_steps)
    else:
        x0_hat = model.correct(predict_x0(x_t, eps_hat, t, sched), 0)
    gain = float(2**cfg.K)
    l_content = loss_content(x0_hat, x0, (-gain, gain), cfg.reduction)
    l_details = loss_details(refined, pyr_0.highs, cfg.reduction)
    return loss_total(l_noise, l_details, l_content, cfg.lam)


def train_step(model: RestorationModel, optimizer: torch.optim.Optimizer,
               batch: list[Patch] | tuple[torch.Tensor, torch.Tensor], sched: NoiseSchedule,
               cfg: TrainConfig, generator: torch.Generator) -> LossBreakdown:
    """One optimizer step on the total objective; returns detached loss terms."""
    degraded, reference = _to_batch(batch) if isinstance(batch, list) else batch
    model.train()
    parts = compute_losses(model, degraded, reference, sched, cfg, generator)
    for name in ("noise", "details", "content", "total"):
        value = getattr(parts, name).detach()
        if not torch.isfinite(value):
            raise FloatingPointError(f"non-finite {name} loss: {value.item()}")
    optimizer.zero_grad(set_to_none=True)
    parts.total.backward()
    optimizer.step()
    return LossBreakdown(*(getattr(parts, k).detach() for k in ("noise", "details", "content", "total")),
                         lam=parts.lam)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Learning rate for a 1-based epoch: decayed by ``lr_decay`` every ``lr_decay_every``."""
    return cfg.lr * cfg.lr_decay ** ((epoch - 1) // cfg.lr_decay_every)


def make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.lr)


@dataclass
class TrainState:
    model: RestorationModel
    optimizer: torch.optim.Optimizer
    generator: torch.Generator
    rng: np.random.Generator
    epoch: int = 0
    history: list[dict[str, float]] = field(default_factory=list)


def make_checkpoint(state: TrainState, cfg: TrainConfig) -> ckpt_io.Checkpoint:
    return ckpt_io.Checkpoint(
        model=state.model.state_dict(),
        optimizer=state.optimizer.state_dict(),
        config=cfg.to_dict(),
        epoch=state.epoch,
        torch_rng=state.generator.get_state(),
        numpy_rng=state.rng.bit_generator.state,
    )


def restore(ckpt: ckpt_io.Checkpoint, cfg: TrainConfig | None = None) -> tuple[TrainState, TrainConfig]:
    cfg = cfg or TrainConfig.from_dict(ckpt.config)
    model = build_model(cfg)
    model.load_state_dict(ckpt.model)
    optimizer = make_optimizer(model, cfg)
    if ckpt.optimizer is not None:
        optimizer.load_state_dict(ckpt.optimizer)
    gen = torch.Generator()
    if ckpt.torch_rng is not None:
        gen.set_state(ckpt.torch_rng)
    rng = np.random.default_rng()
    if ckpt.numpy_rng is not None:
        rng.bit_generator.state = ckpt.numpy_rng
    return TrainState(model, optimizer, gen, rng, ckpt.epoch), cfg


def fresh_state(cfg: TrainConfig) -> TrainState:
    model = build_model(cfg)
    return TrainState(model, make_optimizer(model, cfg), torch.Generator().manual_seed(cfg.seed),
                      np.random.default_rng(cfg.seed))


def fit(index: PairedIndex | list[tuple[np.ndarray, np.ndarray]], cfg: TrainConfig,
        out_dir: str | Path | None = None, resume: ckpt_io.Checkpoint | str | Path | None = None,
        log_path: str | Path | None = None) -> Iterator[ckpt_io.Checkpoint]:
    """Epoch loop; yields a checkpoint every ``checkpoint_every`` epochs and at the end.

    Checkpoints are also written to ``out_dir`` (``epoch_NNNN.ckpt`` and
    ``last.ckpt``) when given.  One line per epoch is appended to ``log_path``.
    """
    cfg.validate()
    if isinstance(index, PairedIndex):
        pairs = [(load_image(d), load_image(r)) for d, r in index.entries]
        names = [d.stem for d, _ in index.entries]
    else:
        pairs = list(index)
        names = [str(i) for i in range(len(pairs))]
    if not pairs:
        raise ValueError("cannot train on an empty index")

    if resume is not None:
        if not isinstance(resume, ckpt_io.Checkpoint):
            resume = ckpt_io.load_checkpoint(resume)
        state, _ = restore(resume, cfg)
    else:
        state = fresh_state(cfg)
    sched = schedule_for(cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if log_path is not None and not Path(log_path).exists():
        Path(log_path).write_text("epoch\tstep\tlr\tnoise\tdetails\tcontent\ttotal\n")

    step = 0
    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        lr = lr_at(epoch, cfg)
        for group in state.optimizer.param_groups:
            group["lr"] = lr
        order = state.rng.permutation(len(pairs))
        sums = np.zeros(4)
        nb = 0
        for start in range(0, len(order), cfg.batch):
            batch = [sample_patch(pairs[i], cfg.patch, state.rng, cfg.K, names[i])
                     for i in order[start:start + cfg.batch]]
            parts = train_step(state.model, state.optimizer, batch, sched, cfg, state.generator)
            vals = parts.as_floats()
            sums += [vals["noise"], vals["details"], vals["content"], vals["total"]]
            nb += 1
            step += 1
        state.epoch = epoch
        mean = sums / nb
        row = {"epoch": epoch, "lr": lr, "noise": mean[0], "details": mean[1],
               "content": mean[2], "total": mean[3]}
        state.history.append(row)
        log.info("epoch %d lr %.3g total %.5f", epoch, lr, mean[3])
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(f"{epoch}\t{step}\t{lr:.6g}\t" + "\t".join(f"{v:.6f}" for v in mean) + "\n")
        if epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs:
            ck = make_checkpoint(state, cfg)
            if out is not None:
                ckpt_io.save_checkpoint(ck, out / f"epoch_{epoch:04d}.ckpt")
                ckpt_io.save_checkpoint(ck, out / "last.ckpt")
            yield ck


@torch.no_grad()
def enhance_tensor(degraded: torch.Tensor, model: RestorationModel, sched: NoiseSchedule,
                   sample: SampleConfig, generator: torch.Generator) -> torch.Tensor:
    """Restore a ``(B, 3, H, W)`` batch in [-1, 1]; H and W must suit the model's padding."""
    model.eval()
    use_gcc, use_csdr = model.use_gcc, model.use_csdr
    model.use_gcc, model.use_csdr = sample.use_gcc, sample.use_csdr
    try:
        pyr = dwt(degraded, model.levels)
        refined = model.refine(pyr.highs)
        low = reverse_loop(model, pyr.low, model.cond_high(refined), sched, sample.S,
                           generator, sample.mode)
        return idwt(WaveletPyramid(low, refined))
    finally:
        model.use_gcc, model.use_csdr = use_gcc, use_csdr


def enhance(image: np.ndarray, model: RestorationModel, sched: NoiseSchedule,
            sample: SampleConfig | None = None,
            generator: torch.Generator | None = None) -> np.ndarray:
    """Restore one ``(H, W, 3)`` uint8 image; output has the input's size."""
    sample = sample or SampleConfig()
    if generator is None:
        generator = torch.Generator().manual_seed(sample.seed)
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {img.shape}")
    h, w = img.shape[:2]
    m = model.pad_multiple
    min_side = max(m, 8 * 2**model.levels)
    ph = max(-(-h // m) * m, min_side) - h
    pw = max(-(-w // m) * m, min_side) - w
    x = normalize(np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge"))
    xt = torch.from_numpy(x).permute(2, 0, 1)[None].contiguous()
    try:
        out = enhance_tensor(xt, model, sched, sample, generator)
    except FloatingPointError as exc:
        raise FloatingPointError(f"enhance failed: {exc}") from exc
    return denormalize(out[0].permute(1, 2, 0).numpy()[:h, :w])
