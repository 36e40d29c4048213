"""Binary model checkpoints.

Layout (all integers little-endian uint32, tensor payloads little-endian
float32, row-major):

    magic   8 bytes  b"FTAGCKPT"
    version u32
    config  u32 byte length + UTF-8 JSON
    count   u32
    entry*  u32 name length + UTF-8 name
            u32 rank
            u32 * rank dims
            f32 * prod(dims) values
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"FTAGCKPT"
VERSION = 1


class CheckpointError(ValueError):
    """Raised on bad magic, version, or truncated payload."""


def save_checkpoint(path, tensors: dict, config: dict) -> None:
    """Write named arrays plus a JSON config blob.

    ``tensors`` maps names to numpy arrays or objects with a ``data`` array.
    Values are stored as float32 regardless of in-memory dtype.
    """
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            arr = np.asarray(getattr(value, "data", value))
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (tensors dict of float32 arrays, config)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    view = memoryview(raw)
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}, expected {MAGIC!r}")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    def u32():
        return struct.unpack("<I", take(4))[0]

    version = u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    config = json.loads(bytes(take(u32())).decode("utf-8"))
    tensors = {}
    for _ in range(u32()):
        name = bytes(take(u32())).decode("utf-8")
        rank = u32()
        dims = tuple(u32() for _ in range(rank))
        count = 1
        for d in dims:
            count *= d
        flat = np.frombuffer(take(4 * count), dtype="<f4")
        tensors[name] = flat.reshape(dims).astype(np.float32)
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return tensors, config
