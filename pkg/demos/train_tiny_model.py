"""
Overfitting a tiny restoration model
====================================

Trains the full model (denoiser, color correction and detail refinement) on
four simulated underwater pairs for a few hundred steps, then restores them
with a five-step deterministic sampler.  This takes a few minutes on a CPU
and lifts PSNR from about 11 dB to about 25 dB; the 2,000-step run in the
acceptance suite reaches about 34 dB.
"""

import numpy as np
import torch

from wavecolor import SampleConfig, TrainConfig, enhance, psnr
from wavecolor.data_io import normalize
from wavecolor.pipeline import fresh_state, schedule_for, train_step
from wavecolor.synthetic import synthetic_pairs

# With only T=50 diffusion steps the noise schedule is scaled up so that the
# last step is (almost) pure noise.
cfg = TrainConfig(T=50, S=5, K=2, batch=4, patch=64, base_width=32, c_int=16, gcc_width=32,
                  lr=5e-4, beta_start=0.002, beta_end=0.4).validate()
pairs = synthetic_pairs(4, 64, seed=0)


def to_tensor(imgs):
    return torch.from_numpy(np.stack([normalize(i) for i in imgs])).permute(0, 3, 1, 2).contiguous()


degraded = to_tensor([d for d, _ in pairs])
reference = to_tensor([r for _, r in pairs])

state = fresh_state(cfg)
sched = schedule_for(cfg)
for step in range(1, 401):
    parts = train_step(state.model, state.optimizer, (degraded, reference), sched, cfg, state.generator)
    if step % 100 == 0:
        print(step, {k: round(v, 4) for k, v in parts.as_floats().items()})

sample = SampleConfig(S=cfg.S, mode="deterministic")
for i, (d, r) in enumerate(pairs):
    restored = enhance(d, state.model, sched, sample)
    print(f"pair {i}: PSNR degraded {psnr(d, r):.2f} dB, restored {psnr(restored, r):.2f} dB")
