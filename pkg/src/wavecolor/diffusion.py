"""Noise schedule, closed-form forward noising and the skip-sampled reverse step.

Timesteps are 1-based: ``t`` runs over ``1..T`` and ``alpha_bar(0) == 1``.
The arithmetic only uses Python floats as coefficients, so every function
accepts numpy arrays or torch tensors for the image arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Literal

import numpy as np

__all__ = [
    "NoiseSchedule",
    "TimeGrid",
    "make_schedule",
    "q_sample",
    "skip_grid",
    "p_step",
    "predict_x0",
]

Array = Any
SamplingMode = Literal["stochastic", "deterministic"]


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """Cumulative product up to ``t``; ``alpha_bar(0)`` is 1 by convention."""
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 1..{self.T}")

    @classmethod
    def from_betas(cls, betas: np.ndarray) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) == 0:
            raise ValueError("betas must be a non-empty vector")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("every beta must lie strictly inside (0, 1)")
        alphas = 1.0 - betas
        return cls(betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))


@dataclass(frozen=True)
class TimeGrid:
    """Ordered ``(t, t_prev)`` pairs visited by the reverse sampler."""

    pairs: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def start(self) -> int:
        return self.pairs[0][0]


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from ``beta_start`` to ``beta_end`` over ``T`` steps."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, T, dtype=np.float64))


def _same_shape(a: Array, b: Array, what: str) -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def _batch_coef(values: np.ndarray, t, like: Array) -> Array:
    """Gather per-sample coefficients for a 1-D batch of timesteps, shaped to broadcast."""
    idx = np.asarray(t.detach().cpu() if hasattr(t, "detach") else t, dtype=np.int64)
    if idx.ndim != 1 or len(idx) != like.shape[0]:
        raise ValueError("batched timesteps need one entry per leading-axis sample")
    coef = values[idx].reshape(-1, *([1] * (like.ndim - 1)))
    if isinstance(like, np.ndarray):
        return coef.astype(like.dtype)
    import torch

    return torch.as_tensor(coef, dtype=like.dtype, device=like.device)


def _alpha_bar_for(sched: NoiseSchedule, t, like: Array):
    if np.ndim(t.detach().cpu() if hasattr(t, "detach") else t) == 0:
        t = int(t)
        sched._check_t(t)
        return sched.alpha_bar(t)
    idx = np.asarray(t.detach().cpu() if hasattr(t, "detach") else t, dtype=np.int64)
    if idx.min() < 1 or idx.max() > sched.T:
        raise ValueError(f"timesteps outside 1..{sched.T}")
    return _batch_coef(np.concatenate([[1.0], sched.alpha_bars]), idx, like)


def q_sample(x0: Array, t, eps: Array, sched: NoiseSchedule) -> Array:
    """Draw from q(x_t | x_0) given explicit Gaussian noise ``eps``.

    ``t`` is an int, or a 1-D batch of ints matching the leading axis of ``x0``.
    """
    _same_shape(x0, eps, "q_sample")
    ab = _alpha_bar_for(sched, t, x0)
    return ab**0.5 * x0 + (1.0 - ab) ** 0.5 * eps


def predict_x0(x_t: Array, eps_hat: Array, t, sched: NoiseSchedule) -> Array:
    """Invert the forward closed form for x_0 given a noise estimate."""
    _same_shape(x_t, eps_hat, "predict_x0")
    ab = _alpha_bar_for(sched, t, x_t)
    return (x_t - (1.0 - ab) ** 0.5 * eps_hat) / ab**0.5


def skip_grid(T: int, S: int) -> TimeGrid:
    """Reverse-time pairs ``t = (i-1)T/S + 1`` for ``i = S..1``, ending at ``t_prev = 0``."""
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    if T % S:
        raise ValueError(f"T={T} is not divisible by S={S}")
    stride = T // S
    pairs = []
    for i in range(S, 0, -1):
        t = (i - 1) * stride + 1
        t_prev = (i - 2) * stride + 1 if i > 1 else 0
        pairs.append((t, t_prev))
    return TimeGrid(tuple(pairs))


def step_coefficients(t: int, t_prev: int, sched: NoiseSchedule) -> tuple[float, float, float]:
    """Return ``(1/sqrt(alpha_t), (1-alpha_t)/sqrt(1-alpha_bar_t), sigma)`` for one step."""
    if not 0 <= t_prev < t:
        raise ValueError(f"invalid step pair ({t}, {t_prev})")
    a = sched.alpha(t)
    ab = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t_prev)
    var = (1.0 - a) * (1.0 - ab_prev) / (1.0 - ab)
    return 1.0 / math.sqrt(a), (1.0 - a) / math.sqrt(1.0 - ab), math.sqrt(var)


def p_step(
    x_t: Array,
    eps_hat: Array,
    t: int,
    t_prev: int,
    sched: NoiseSchedule,
    mode: SamplingMode = "stochastic",
    noise_source: Callable[[], Array] | None = None,
) -> Array:
    """One reverse update from ``t`` to ``t_prev``.

    ``noise_source`` is a zero-argument callable returning a standard normal
    draw shaped like ``x_t``; it is only called in stochastic mode when the
    step variance is non-zero.
    """
    _same_shape(x_t, eps_hat, "p_step")
    inv_sqrt_a, eps_coef, sigma = step_coefficients(t, t_prev, sched)
    mean = inv_sqrt_a * (x_t - eps_coef * eps_hat)
    if mode not in ("stochastic", "deterministic"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    if mode == "stochastic" and sigma > 0.0:
        if noise_source is None:
            raise ValueError("stochastic p_step needs a noise_source")
        z = noise_source()
        _same_shape(x_t, z, "p_step noise")
        out = mean + sigma * z
    else:
        out = mean
    _check_finite(out, t)
    return out


def _check_finite(x: Array, t: int) -> None:
    if isinstance(x, np.ndarray):
        ok = bool(np.isfinite(x).all())
    else:
        ok = bool(x.detach().isfinite().all())
    if not ok:
        raise FloatingPointError(f"non-finite sample produced at step t={t}")
