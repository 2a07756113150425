"""Versioned flat binary checkpoint format.

Layout (all integers little-endian):
    magic   9 bytes  b"SMAUGCKPT"
    version u32      currently 1
    then per parameter, in iteration order:
    name_len u32, name utf-8 bytes, rank u32, dims u64 * rank,
    payload float32 little-endian (prod(dims) entries)

Payloads are float32 regardless of in-memory dtype; a float32 state round
trips bit-exactly. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile
from collections import OrderedDict
from typing import Mapping

import numpy as np

from .tensor import Tensor

__all__ = ["MAGIC", "FORMAT_VERSION", "CheckpointError",
           "save_checkpoint", "load_checkpoint", "load_into"]

MAGIC = b"SMAUGCKPT"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(named_params: Mapping[str, "Tensor | np.ndarray"], path: str):
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    for name, value in named_params.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        # note: ascontiguousarray would promote 0-d arrays to 1-d
        arr = np.asarray(arr, dtype="<f4")
        if not arr.flags.c_contiguous:
            arr = arr.copy()
        name_bytes = name.encode("utf-8")
        blob += struct.pack("<I", len(name_bytes))
        blob += name_bytes
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
        blob += arr.tobytes()
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(bytes(blob))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    while off < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, off) if rank else ()
        off += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(dims)
        off += 4 * count
        out[name] = arr.copy()
    return out


def load_into(named_params: Mapping[str, Tensor], loaded: Mapping[str, np.ndarray]):
    """Copy loaded arrays into live parameters, validating names and shapes."""
    for name, p in named_params.items():
        if name not in loaded:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        arr = loaded[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise CheckpointError(
                f"parameter {name!r} has shape {tuple(p.data.shape)} "
                f"but checkpoint holds {tuple(arr.shape)}"
            )
        p.data[...] = arr.astype(p.data.dtype)
    extra = set(loaded) - set(named_params)
    if extra:
        raise CheckpointError(f"checkpoint holds unknown parameters: {sorted(extra)}")
