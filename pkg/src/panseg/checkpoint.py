"""Checkpoint I/O: a flat name -> float32 tensor map in a single binary file.

Layout (all integers little-endian):
    magic   8 bytes  b"PSEGWTS1"
    count   uint32   number of entries
    entry*  repeated:
        name_len uint16, name utf-8 bytes
        ndim     uint8,  dims uint32 * ndim
        data     float32 * prod(dims), little-endian, C order
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

MAGIC = b"PSEGWTS1"


class CheckpointError(RuntimeError):
    pass


def _serializable_state(model: nn.Module) -> dict[str, torch.Tensor]:
    # num_batches_tracked is irrelevant with a fixed batch-norm momentum.
    return {name: tensor for name, tensor in model.state_dict().items()
            if not name.endswith("num_batches_tracked")}


def save_weights(model: nn.Module, path: str | Path) -> None:
    state = _serializable_state(model)
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(state)))
            for name, tensor in state.items():
                data = tensor.detach().cpu().numpy().astype("<f4")
                name_bytes = name.encode("utf-8")
                fh.write(struct.pack("<H", len(name_bytes)))
                fh.write(name_bytes)
                fh.write(struct.pack("<B", data.ndim))
                fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
                fh.write(np.ascontiguousarray(data).tobytes())
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def read_weight_map(path: str | Path) -> dict[str, np.ndarray]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a weights file (bad magic)")
    offset = 8
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    weights: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f4", count=size, offset=offset).reshape(shape)
        offset += 4 * size
        weights[name] = data.copy()
    if offset != len(blob):
        raise CheckpointError(f"{path} has {len(blob) - offset} trailing bytes")
    return weights


def load_weights(model: nn.Module, path: str | Path) -> None:
    weights = read_weight_map(path)
    expected = _serializable_state(model)
    missing = sorted(set(expected) - set(weights))
    unexpected = sorted(set(weights) - set(expected))
    if missing or unexpected:
        raise CheckpointError(
            f"checkpoint {path} does not match the model: "
            f"missing {missing[:5]}, unexpected {unexpected[:5]}")
    state = {}
    for name, array in weights.items():
        if tuple(array.shape) != tuple(expected[name].shape):
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {array.shape} vs "
                f"model {tuple(expected[name].shape)}")
        state[name] = torch.from_numpy(array).to(expected[name].dtype)
    model.load_state_dict(state, strict=False)
