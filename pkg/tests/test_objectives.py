import math

import numpy as np
import pytest
import torch
from skimage.metrics import structural_similarity

from wavecolor.objectives import (
    loss_content,
    loss_details,
    loss_noise,
    loss_total,
    psnr,
    ssim,
)
from wavecolor.wavelet import HighFreqTriplet


def trip(*vals, shape=(1, 3, 4, 4)):
    return HighFreqTriplet(*(torch.full(shape, float(v)) for v in vals))


def test_loss_noise_cases():
    x = torch.randn(2, 3, 4, 4)
    assert loss_noise(x, x) == 0
    assert loss_noise(x, x + 2.0).item() == pytest.approx(4.0)
    assert loss_noise(x, torch.zeros_like(x)).item() == pytest.approx((x**2).mean().item())
    assert loss_noise(x, x + 1.0, "sum").item() == pytest.approx(x.numel())
    with pytest.raises(ValueError):
        loss_noise(x, x[:1])


def test_loss_details_cases():
    a = [trip(1, 2, 3), trip(0, 0, 0, shape=(1, 3, 2, 2))]
    assert loss_details(a, a) == 0
    b = [trip(1.5, 2.5, 3.5), trip(0, 0, 0, shape=(1, 3, 2, 2))]
    assert loss_details(a, b).item() == pytest.approx(0.25)
    # extra identical levels add nothing
    assert loss_details(a + a, b + a).item() == pytest.approx(0.25)
    with pytest.raises(ValueError):
        loss_details(a, a[:1])
    with pytest.raises(ValueError):
        loss_details([a[0]], [a[1]])


def skimage_ssim(a, b):
    """Reference SSIM on (C, H, W) arrays already mapped to [0, 1]."""
    return structural_similarity(a, b, channel_axis=0, data_range=1.0, gaussian_weights=True,
                                 sigma=1.5, use_sample_covariance=False)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ssim_matches_reference_implementation(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(3, 24, 20))
    b = np.clip(a + rng.normal(scale=0.2, size=a.shape), 0, 1)
    ours = ssim(torch.tensor(a), torch.tensor(b), value_range=(0.0, 1.0)).item()
    assert ours == pytest.approx(skimage_ssim(a, b), abs=1e-10)


def test_ssim_identity_and_symmetry():
    x = torch.rand(1, 3, 16, 16, dtype=torch.float64) * 2 - 1
    y = torch.rand(1, 3, 16, 16, dtype=torch.float64) * 2 - 1
    assert ssim(x, x).item() == 1.0
    assert ssim(x, y).item() == pytest.approx(ssim(y, x).item(), abs=1e-15)


def test_ssim_checkerboard_anticorrelated():
    board = (np.indices((16, 16)).sum(axis=0) % 2).astype(np.float64)[None]
    x = torch.tensor(board)
    value = ssim(x, 1 - x, value_range=(0.0, 1.0)).item()
    assert value < 0
    # golden value, cross-checked against the reference implementation
    assert value == pytest.approx(skimage_ssim(board, 1 - board), abs=1e-10)
    assert value == pytest.approx(-0.9964064683569569, abs=1e-9)


def test_ssim_window_guard():
    with pytest.raises(ValueError):
        ssim(torch.zeros(1, 3, 8, 8), torch.zeros(1, 3, 8, 8))


def test_loss_content_cases():
    x = torch.rand(1, 3, 16, 16) * 2 - 1
    assert loss_content(x, x).item() == pytest.approx(0.0, abs=1e-7)
    y = torch.rand(1, 3, 16, 16) * 2 - 1
    assert loss_content(x, y).item() >= 0


def test_loss_content_flat_offset():
    c = 0.2
    a = torch.zeros(1, 3, 16, 16, dtype=torch.float64)
    b = a + c
    # flat images: SSIM reduces to the luminance term on [0, 1]-mapped means
    mu_a, mu_b = 0.5, 0.5 + c / 2
    c1 = 0.01**2
    flat_ssim = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    assert loss_content(b, a).item() == pytest.approx(c + 1 - flat_ssim, abs=1e-12)


def test_loss_total_cases():
    t = lambda v: torch.tensor(v)
    assert loss_total(t(1.0), t(2.0), t(3.0), 0.1).total.item() == pytest.approx(4.2)
    assert loss_total(t(1.0), t(2.0), t(3.0), 0.0).total.item() == pytest.approx(4.0)
    assert loss_total(t(0.0), t(0.0), t(0.0)).total.item() == 0
    with pytest.raises(ValueError):
        loss_total(t(0.0), t(0.0), t(0.0), -1.0)


def test_loss_total_linear_in_lambda():
    t = lambda v: torch.tensor(v, dtype=torch.float64)
    f = [loss_total(t(0.3), t(1.7), t(0.5), lam).total.item() for lam in (0.0, 0.5, 1.0)]
    assert f[1] - f[0] == pytest.approx(f[2] - f[1])


def test_psnr_cases():
    a = np.full((4, 4, 3), 100.0)
    assert psnr(a, a) == 100.0
    assert psnr(a, a + 10) == pytest.approx(20 * math.log10(255 / 10))
    assert psnr(a, a + 10) == pytest.approx(28.13, abs=0.01)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, 255, (8, 8, 3)), rng.uniform(0, 255, (8, 8, 3))
    assert psnr(x, y) == psnr(y, x)
    with pytest.raises(ValueError):
        psnr(a, a, peak=0)


def _gradcheck(fn, *shapes, seed=0):
    g = torch.Generator().manual_seed(seed)
    inputs = [torch.randn(s, generator=g, dtype=torch.float64, requires_grad=True) for s in shapes]
    return torch.autograd.gradcheck(fn, inputs, eps=1e-6, atol=1e-6, rtol=1e-3)


def test_gradients_noise_and_details():
    assert _gradcheck(loss_noise, (1, 3, 4, 4), (1, 3, 4, 4))

    def details(a, b):
        return loss_details([HighFreqTriplet(*a.chunk(3, dim=1))], [HighFreqTriplet(*b.chunk(3, dim=1))])

    assert _gradcheck(details, (1, 9, 4, 4), (1, 9, 4, 4))


def test_gradients_ssim_and_content():
    assert _gradcheck(lambda a, b: ssim(a, b), (1, 3, 12, 12), (1, 3, 12, 12))
    # random inputs keep the L1 term away from its kink
    assert _gradcheck(lambda a, b: loss_content(a, b), (1, 3, 12, 12), (1, 3, 12, 12), seed=4)
