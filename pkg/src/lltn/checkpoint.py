"""LLTN v1 named-tensor archive.

Layout: magic bytes ``LLTN``, u32 LE version, u32 LE tensor count; per tensor
a u32 LE name length, UTF-8 name, u32 LE rank, one u64 LE per dimension, then
row-major float32 LE data. Shared by the VQ and LM checkpoints.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

MAGIC = b"LLTN"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed archive or tensor set that does not match the model."""


def export_tensors(path, tensors: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float32, order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.tobytes(order="C"))


def import_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes, expected {MAGIC!r}")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        offset = 12
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            if len(blob) < offset + name_len:
                raise CheckpointError(f"{path}: truncated while reading tensor name")
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, offset) if rank else ()
            offset += 8 * rank
            size = 1
            for dim in shape:
                size *= dim
            end = offset + 4 * size
            if end > len(blob):
                raise CheckpointError(f"{path}: truncated data for tensor {name!r}")
            data = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape)
            tensors[name] = data.astype(np.float32)
            offset = end
        if offset != len(blob):
            raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
        return tensors
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated archive: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"{path}: malformed tensor name: {exc}") from exc


def validate_tensors(tensors: Mapping[str, np.ndarray], expected: Mapping[str, tuple]) -> None:
    """Check a loaded tensor set against the shapes a model expects."""
    for name in tensors:
        if name not in expected:
            raise CheckpointError(f"unknown tensor name {name!r}")
    for name, shape in expected.items():
        if name not in tensors:
            raise CheckpointError(f"missing tensor {name!r}")
        got = tuple(tensors[name].shape)
        if got != tuple(shape):
            raise CheckpointError(f"tensor {name!r}: shape {got} != expected {tuple(shape)}")
