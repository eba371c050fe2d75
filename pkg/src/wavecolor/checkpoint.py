"""Versioned single-file checkpoint container.

Layout (little endian)::

    b"WAVECKPT"            8-byte magic
    uint32                 format version
    uint64                 header length N
    N bytes                UTF-8 JSON header (metadata + tensor table)
    ...                    raw tensor bytes, concatenated in table order
    32 bytes               SHA-256 of everything above

The header is serialized with sorted keys and tensors keep their insertion
order, so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

__all__ = [
    "FORMAT_VERSION",
    "Checkpoint",
    "CheckpointError",
    "CheckpointCorruptError",
    "CheckpointVersionError",
    "save_checkpoint",
    "load_checkpoint",
    "to_bytes",
    "from_bytes",
]

MAGIC = b"WAVECKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<IQ")
_DIGEST = 32


class CheckpointError(RuntimeError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model: dict[str, torch.Tensor]
    optimizer: dict[str, Any] | None = None
    config: dict[str, Any] = field(default_factory=dict)
    epoch: int = 0
    torch_rng: torch.Tensor | None = None
    numpy_rng: dict[str, Any] | None = None
    extra: dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _flatten(ck: Checkpoint) -> tuple[dict[str, Any], list[tuple[str, torch.Tensor]]]:
    tensors: list[tuple[str, torch.Tensor]] = [(f"model/{k}", v) for k, v in ck.model.items()]
    meta: dict[str, Any] = {
        "config": ck.config,
        "epoch": ck.epoch,
        "numpy_rng": ck.numpy_rng,
        "extra": ck.extra,
        "has_torch_rng": ck.torch_rng is not None,
        "optimizer": None,
    }
    if ck.torch_rng is not None:
        tensors.append(("rng/torch", ck.torch_rng))
    if ck.optimizer is not None:
        scalars: dict[str, dict[str, Any]] = {}
        for pid, st in ck.optimizer["state"].items():
            for key, val in st.items():
                if torch.is_tensor(val):
                    tensors.append((f"optim/{pid}/{key}", val))
                else:
                    scalars.setdefault(str(pid), {})[key] = val
        meta["optimizer"] = {"param_groups": ck.optimizer["param_groups"], "scalars": scalars}
    return meta, tensors


def to_bytes(ck: Checkpoint, version: int | None = None) -> bytes:
    meta, tensors = _flatten(ck)
    table = []
    blobs = []
    offset = 0
    for name, t in tensors:
        arr = t.detach().cpu().contiguous().numpy()
        raw = arr.tobytes()
        table.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    meta["tensors"] = table
    header = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    body = (MAGIC + _PREFIX.pack(version or ck.version, len(header)) + header
            + b"".join(blobs))
    return body + hashlib.sha256(body).digest()


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + _PREFIX.size + _DIGEST or not data.startswith(MAGIC):
        raise CheckpointCorruptError("not a checkpoint file (bad magic or truncated)")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointCorruptError("checkpoint digest mismatch (file truncated or corrupted)")
    version, hlen = _PREFIX.unpack_from(body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    start = len(MAGIC) + _PREFIX.size
    meta = json.loads(body[start:start + hlen].decode())
    payload = memoryview(body)[start + hlen:]

    model: dict[str, torch.Tensor] = {}
    optim_state: dict[int, dict[str, Any]] = {}
    torch_rng = None
    for entry in meta["tensors"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        t = torch.from_numpy(arr)
        name = entry["name"]
        if name.startswith("model/"):
            model[name[len("model/"):]] = t
        elif name == "rng/torch":
            torch_rng = t
        elif name.startswith("optim/"):
            _, pid, key = name.split("/", 2)
            optim_state.setdefault(int(pid), {})[key] = t
        else:
            raise CheckpointCorruptError(f"unexpected tensor entry {name!r}")

    optimizer = None
    if meta["optimizer"] is not None:
        for pid, vals in meta["optimizer"]["scalars"].items():
            optim_state.setdefault(int(pid), {}).update(vals)
        optimizer = {"state": optim_state, "param_groups": meta["optimizer"]["param_groups"]}
    return Checkpoint(model=model, optimizer=optimizer, config=meta["config"],
                      epoch=meta["epoch"], torch_rng=torch_rng, numpy_rng=meta["numpy_rng"],
                      extra=meta["extra"], version=version)


def save_checkpoint(ck: Checkpoint, path: str | Path, version: int | None = None) -> None:
    path = Path(path)
    try:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(to_bytes(ck, version))
        tmp.replace(path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(data)
