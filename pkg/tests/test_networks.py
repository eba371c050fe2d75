import pytest
import torch

from wavecolor.csdr import (
    CSDR,
    CrossAttention,
    DilatedStack,
    attention_weights,
    cross_attention,
    csdr_forward,
    receptive_field,
)
from wavecolor.denoiser import Denoiser, DenoiserInput, count_flops, time_embed
from wavecolor.gcc import GCC, COND_DIM, ConditionNet, FmParams, fm_apply, gcc_forward
from wavecolor.wavelet import HighFreqTriplet


def randomize(module: torch.nn.Module, seed: int = 0, scale: float = 0.3) -> torch.nn.Module:
    """Overwrite every parameter (including zero-initialized heads) with noise."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * scale)
    return module


def rand_triplet(shape=(1, 3, 4, 4), dtype=torch.float32, seed=0):
    g = torch.Generator().manual_seed(seed)
    return HighFreqTriplet(*(torch.randn(shape, generator=g, dtype=dtype) for _ in range(3)))


# ---- cross attention ---------------------------------------------------------

def test_attention_single_position_returns_value():
    g = torch.Generator().manual_seed(0)
    q, kv = torch.randn(1, 4, 1, 1, generator=g), torch.randn(1, 4, 1, 1, generator=g)
    wq, wk, wv = (torch.randn(4, 4, generator=g) for _ in range(3))
    out = cross_attention(q, kv, wq, wk, wv)
    torch.testing.assert_close(out[0, :, 0, 0], wv @ kv[0, :, 0, 0])


def test_attention_rows_stochastic():
    g = torch.Generator().manual_seed(1)
    w = attention_weights(torch.randn(2, 30, 8, generator=g) * 5, torch.randn(2, 30, 8, generator=g) * 5)
    torch.testing.assert_close(w.sum(-1), torch.ones(2, 30), atol=1e-6, rtol=0)


def test_attention_equal_keys_average_values():
    eye = torch.eye(2)
    q = torch.tensor([[[[1.0, -3.0]], [[0.5, 2.0]]]])  # (1, 2 ch, 1, 2 positions)
    kv = torch.tensor([[[[1.0, 1.0]], [[3.0, 5.0]]]])
    drop_second = torch.tensor([[1.0, 0.0], [0.0, 0.0]])  # keys become equal: [1, 0]
    out = cross_attention(q, kv, eye, drop_second, eye)
    expected = torch.tensor([1.0, 4.0])
    for pos in range(2):
        torch.testing.assert_close(out[0, :, 0, pos], expected)


def test_attention_shape_errors():
    with pytest.raises(ValueError):
        cross_attention(torch.zeros(1, 2, 2, 2), torch.zeros(1, 2, 2, 3), *(torch.eye(2),) * 3)
    with pytest.raises(ValueError):
        attention_weights(torch.zeros(1, 3, 0), torch.zeros(1, 3, 0))


def test_attention_tiles_long_sequences():
    attn = randomize(CrossAttention(4, max_positions=16, tile=4))
    x, y = torch.randn(1, 4, 8, 8), torch.randn(1, 4, 8, 8)
    out = attn(x, y)
    assert out.shape == x.shape
    tile = attn._attend(x[..., :4, 4:], y[..., :4, 4:])
    torch.testing.assert_close(out[..., :4, 4:], tile)


# ---- dilated stack -----------------------------------------------------------

def test_dilated_stack_zero_weights():
    stack = DilatedStack(4)
    for p in stack.parameters():
        torch.nn.init.zeros_(p)
    assert torch.count_nonzero(stack(torch.randn(1, 4, 7, 9))) == 0


@pytest.mark.parametrize("hw", [(3, 3), (5, 11), (16, 16)])
def test_dilated_stack_preserves_shape(hw):
    assert DilatedStack(4)(torch.randn(2, 4, *hw)).shape == (2, 4, *hw)


def test_receptive_field():
    assert receptive_field() == 19
    # impulse response support of a stack of linear dilated convs
    stack = DilatedStack(1)
    with torch.no_grad():
        for conv in stack.convs:
            conv.weight.fill_(1.0)
            conv.bias.zero_()
    x = torch.zeros(1, 1, 41, 41)
    x[..., 20, 20] = 1.0
    support = (stack(x)[0, 0].abs() > 0).nonzero()
    assert support[:, 0].max() - support[:, 0].min() + 1 == 19


def test_dilated_stack_channel_check():
    with pytest.raises(ValueError):
        DilatedStack(4)(torch.zeros(1, 3, 4, 4))


# ---- csdr --------------------------------------------------------------------

def test_csdr_shapes_and_identity_init():
    m = CSDR(3, c_int=8)
    t = rand_triplet((2, 3, 6, 10))
    out = csdr_forward(t, m)
    for a, b in zip(out.bands(), t.bands()):
        assert a.shape == b.shape
        torch.testing.assert_close(a, b)


def test_csdr_zero_heads_without_residual():
    m = CSDR(3, c_int=8, residual=False)
    out = m(rand_triplet())
    for band in out.bands():
        assert torch.count_nonzero(band) == 0


def test_csdr_deterministic():
    m = randomize(CSDR(3, c_int=8))
    t = rand_triplet()
    a, b = m(t), m(t)
    for x, y in zip(a.bands(), b.bands()):
        assert torch.equal(x, y)


def test_csdr_diagonal_uses_vertical_and_horizontal():
    m = randomize(CSDR(3, c_int=8, residual=False), seed=2)
    t = rand_triplet(seed=3)
    t2 = HighFreqTriplet(t.v + 1.0, t.h, t.d)
    assert not torch.allclose(m(t).d, m(t2).d)


def test_csdr_gradcheck():
    m = randomize(CSDR(1, c_int=4), seed=5).double()
    g = torch.Generator().manual_seed(6)
    bands = [torch.randn(1, 1, 4, 4, generator=g, dtype=torch.float64, requires_grad=True)
             for _ in range(3)]

    def f(v, h, d):
        out = m(HighFreqTriplet(v, h, d))
        return torch.cat(list(out.bands()), dim=1)

    assert torch.autograd.gradcheck(f, bands, eps=1e-6, atol=1e-6, rtol=1e-3)


# ---- gcc ---------------------------------------------------------------------

def test_fm_apply_cases():
    x = torch.randn(2, 3, 4, 4)
    torch.testing.assert_close(fm_apply(x, FmParams(torch.ones(3), torch.zeros(3))), x)
    b = torch.tensor([1.0, -2.0, 0.5])
    out = fm_apply(x, FmParams(torch.zeros(3), b))
    torch.testing.assert_close(out, b[None, :, None, None].expand_as(x))
    three = torch.full((1, 1, 1, 1), 3.0)
    assert fm_apply(three, FmParams(torch.tensor([2.0]), torch.tensor([-1.0]))).item() == 5.0
    with pytest.raises(ValueError):
        fm_apply(x, FmParams(torch.ones(2), torch.zeros(2)))


def test_condition_vector_length():
    gcc = GCC(width=16)
    for hw in [(8, 8), (16, 24), (33, 17)]:
        assert gcc.condition_encode(torch.randn(2, 3, *hw), 5).shape == (2, COND_DIM)


def test_condition_zero_weights():
    net = ConditionNet()
    for p in net.parameters():
        torch.nn.init.zeros_(p)
    out = net(torch.randn(1, 3, 16, 16), torch.zeros(1, 128))
    assert torch.count_nonzero(out) == 0


def test_condition_constant_input_size_invariant():
    net = randomize(ConditionNet(), seed=1)
    temb = torch.zeros(1, 128)
    a = net(torch.full((1, 3, 16, 16), 0.4), temb)
    b = net(torch.full((1, 3, 40, 24), 0.4), temb)
    torch.testing.assert_close(a, b)


def test_condition_input_checks():
    net = ConditionNet()
    with pytest.raises(ValueError):
        net(torch.zeros(1, 4, 16, 16), torch.zeros(1, 128))
    with pytest.raises(ValueError):
        net(torch.zeros(1, 3, 4, 16), torch.zeros(1, 128))


def test_gcc_identity_at_init_and_shape():
    gcc = GCC(width=16)
    x = torch.randn(2, 3, 8, 12)
    out = gcc_forward(x, 7, gcc)
    assert out.shape == x.shape
    torch.testing.assert_close(out, x)


def test_gcc_baseline_is_pointwise():
    gcc = randomize(GCC(width=16), seed=2)
    x = torch.randn(1, 3, 8, 8)
    params = gcc.fm_params(gcc.condition_encode(x, 3), gcc.embed(3, 1, x))
    perm = torch.randperm(64, generator=torch.Generator().manual_seed(0))
    xp = x.flatten(2)[..., perm].reshape_as(x)
    out = gcc.baseline(x, params)
    out_p = gcc.baseline(xp, params)
    torch.testing.assert_close(out.flatten(2)[..., perm].reshape_as(x), out_p)


def test_gcc_gradcheck():
    gcc = randomize(GCC(width=8, embed_dim=16), seed=3).double()
    x = torch.randn(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda z: gcc(z, 4), [x], eps=1e-6, atol=1e-6, rtol=1e-3)


# ---- denoiser ----------------------------------------------------------------

def test_time_embed_cases():
    e0 = time_embed(0, 16)
    torch.testing.assert_close(e0[:8], torch.zeros(8))
    torch.testing.assert_close(e0[8:], torch.ones(8))
    torch.testing.assert_close(time_embed(5, 16), time_embed(5, 16))
    assert torch.linalg.norm(time_embed(1, 16) - time_embed(2, 16)) > 0
    assert time_embed(torch.tensor([1, 2, 3]), 16).shape == (3, 16)
    with pytest.raises(ValueError):
        time_embed(1, 15)


def make_input(b=2, hw=(8, 8), seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    r = lambda c: torch.randn(b, c, *hw, generator=g, dtype=dtype)
    return DenoiserInput(r(3), r(3), r(9), torch.full((b,), 5))


def test_denoiser_contract():
    net = Denoiser(base_width=8)
    assert net.conv_in.in_channels == 15
    inp = make_input(hw=(8, 12))
    out = net(inp)
    assert out.shape == inp.x_t.shape
    assert torch.count_nonzero(out) == 0  # zero-initialized head


def test_denoiser_input_checks():
    net = Denoiser(base_width=8)
    with pytest.raises(ValueError):
        net(make_input(hw=(6, 8)))
    bad = make_input()
    bad.cond_high = bad.cond_high[:, :6]
    with pytest.raises(ValueError):
        net(bad)


def test_denoiser_sensitivity():
    net = randomize(Denoiser(base_width=8), seed=1, scale=0.2)
    inp = make_input()
    base = net(inp)
    swapped = DenoiserInput(inp.x_t, inp.cond_high[:, :3], torch.cat([inp.cond_low, inp.cond_high[:, 3:]], 1), inp.t)
    assert not torch.allclose(base, net(swapped))
    later = DenoiserInput(inp.x_t, inp.cond_low, inp.cond_high, torch.full((2,), 40))
    assert not torch.allclose(base, net(later))


def test_denoiser_gradcheck():
    net = randomize(Denoiser(base_width=8), seed=2, scale=0.2).double()
    inp = make_input(b=1, dtype=torch.float64)
    leaves = [p.clone().requires_grad_(True) for p in (inp.x_t, inp.cond_low, inp.cond_high)]

    def f(x, cl, ch):
        return net(DenoiserInput(x, cl, ch, inp.t))

    assert torch.autograd.gradcheck(f, leaves, eps=1e-6, atol=1e-6, rtol=1e-3)


def test_flops_scale_with_area():
    net = Denoiser(base_width=8)
    assert count_flops(net, 16, 16) * 15 < count_flops(net, 64, 64)
