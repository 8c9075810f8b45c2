"""Binary tensor container.

Layout (little-endian)::

    b"VCT1" | u16 version (=1) | u8 rank | rank x u32 dims | float32 data, row-major
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .tensor import Tensor

MAGIC = b"VCT1"
VERSION = 1
_HEADER = struct.Struct("<4sHB")


class TensorFileError(ValueError):
    """Malformed tensor container; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int, path: str | None = None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (at byte {offset})")
        self.offset = offset
        self.path = path


def encode(array) -> bytes:
    arr = np.asarray(array.data if isinstance(array, Tensor) else array, dtype="<f4")
    if arr.ndim > 255:
        raise ValueError(f"rank {arr.ndim} does not fit the container header")
    if any(d >= 2**32 for d in arr.shape):
        raise ValueError(f"dimension too large for the container: {arr.shape}")
    head = _HEADER.pack(MAGIC, VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr).tobytes()


def decode(buf: bytes, path: str | None = None) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise TensorFileError(f"truncated header: {len(buf)} bytes", len(buf), path)
    magic, version, rank = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise TensorFileError(f"bad magic {magic!r}", 0, path)
    if version != VERSION:
        raise TensorFileError(f"unsupported version {version}", 4, path)
    off = _HEADER.size
    if len(buf) < off + 4 * rank:
        raise TensorFileError(f"truncated shape: rank {rank} needs {4 * rank} bytes", len(buf), path)
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    count = 1
    for d in dims:
        count *= d
    need = 4 * count
    have = len(buf) - off
    if need != have:
        kind = "truncated data" if have < need else "trailing bytes after data"
        raise TensorFileError(f"{kind}: shape {dims} needs {need} bytes, found {have}", off + min(need, have), path)
    return np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(dims).astype(np.float32)


def save_tensor(path, array) -> None:
    data = encode(array)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_tensor(path) -> Tensor:
    with open(path, "rb") as fh:
        buf = fh.read()
    return Tensor(decode(buf, str(path)), dtype=np.float32)
