"""Single-file binary checkpoints.

Layout (all integers little-endian)::

    b"TIPCKPT\\0"            magic, 8 bytes
    u32 version
    u64 n, then n bytes      JSON header (configs, epochs, final loss, graph hash)
    u32 count                number of tensors
    per tensor:
        u32 n, n bytes       UTF-8 name
        u32 ndim, ndim * u64 shape
        prod(shape) * f64    values, row-major
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TIPCKPT\0"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    header: dict
    tensors: dict[str, np.ndarray]

    @property
    def graph_hash(self) -> str | None:
        return self.header.get("graph_hash")


def save_checkpoint(path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    header = dict(header)
    loss = header.get("final_loss")
    if loss is not None and not math.isfinite(loss):
        header["final_loss"] = None
    blob = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(blob)), blob]
    parts.append(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        raw = name.encode()
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Checkpoint:
    rd = _Reader(Path(path).read_bytes())
    if rd.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (version,) = rd.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {VERSION})")
    (n,) = rd.unpack("<Q")
    header = json.loads(rd.take(n).decode())
    (count,) = rd.unpack("<I")
    tensors = {}
    for _ in range(count):
        (n,) = rd.unpack("<I")
        name = rd.take(n).decode()
        (ndim,) = rd.unpack("<I")
        shape = rd.unpack(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(rd.take(8 * size), dtype="<f8").reshape(shape)
        tensors[name] = arr.astype(np.float64)
    if rd.pos != len(rd.data):
        raise CheckpointError("trailing bytes after last tensor")
    return Checkpoint(header=header, tensors=tensors)
