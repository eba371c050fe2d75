import json
import struct

import numpy as np
import pytest
import torch

from wavecolor.checkpoint import (
    FORMAT_VERSION,
    Checkpoint,
    CheckpointCorruptError,
    CheckpointVersionError,
    from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
)


def make():
    net = torch.nn.Sequential(torch.nn.Linear(3, 4), torch.nn.Linear(4, 2))
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    net(torch.randn(5, 3)).sum().backward()
    opt.step()
    return Checkpoint(
        model=net.state_dict(),
        optimizer=opt.state_dict(),
        config={"T": 200, "lam": 0.1},
        epoch=7,
        torch_rng=torch.get_rng_state(),
        numpy_rng=np.random.default_rng(3).bit_generator.state,
        extra={"note": "x"},
    )


def test_round_trip_bit_equal(tmp_path):
    ck = make()
    save_checkpoint(ck, tmp_path / "a.ckpt")
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.epoch == 7 and back.config == ck.config and back.extra == ck.extra
    assert back.numpy_rng == ck.numpy_rng
    assert torch.equal(back.torch_rng, ck.torch_rng)
    for k, v in ck.model.items():
        assert torch.equal(back.model[k], v) and back.model[k].dtype == v.dtype
    for pid, state in ck.optimizer["state"].items():
        for k, v in state.items():
            assert torch.equal(back.optimizer["state"][pid][k], v)
    # JSON stores tuples as lists; the optimizer accepts either
    assert back.optimizer["param_groups"] == json.loads(json.dumps(ck.optimizer["param_groups"]))
    net = torch.nn.Sequential(torch.nn.Linear(3, 4), torch.nn.Linear(4, 2))
    torch.optim.Adam(net.parameters()).load_state_dict(back.optimizer)


def test_save_load_save_identical(tmp_path):
    ck = make()
    save_checkpoint(ck, tmp_path / "a.ckpt")
    save_checkpoint(load_checkpoint(tmp_path / "a.ckpt"), tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


@pytest.mark.parametrize("cut", [1, 10, 100])
def test_truncation_detected(tmp_path, cut):
    data = to_bytes(make())
    with pytest.raises(CheckpointCorruptError):
        from_bytes(data[:-cut])


def test_bit_flip_detected():
    data = bytearray(to_bytes(make()))
    data[len(data) // 2] ^= 0x01
    with pytest.raises(CheckpointCorruptError):
        from_bytes(bytes(data))


def test_bad_magic():
    with pytest.raises(CheckpointCorruptError):
        from_bytes(b"NOTACKPT" + b"\0" * 64)


def test_version_mismatch_is_distinct():
    data = to_bytes(make(), version=FORMAT_VERSION + 1)
    with pytest.raises(CheckpointVersionError):
        from_bytes(data)
    version = struct.unpack_from("<I", data, 8)[0]
    assert version == FORMAT_VERSION + 1


def test_empty_optimizer_and_rng():
    ck = Checkpoint(model={"w": torch.arange(4.0)})
    back = from_bytes(to_bytes(ck))
    assert back.optimizer is None and back.torch_rng is None
    assert torch.equal(back.model["w"], ck.model["w"])
