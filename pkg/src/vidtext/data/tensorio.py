"""Single-tensor binary container.

Layout (little-endian)::

    b"T4CL" | version u8 | rank u8 | dims u32 * rank | float32 payload, row-major
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"T4CL"
VERSION = 1
_HEADER = struct.Struct("<4sBB")


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim < 1:
        raise FormatError("tensor container needs rank >= 1")
    if arr.ndim > 255:
        raise FormatError("rank does not fit in one byte")
    if any(n < 1 or n > 0xFFFFFFFF for n in arr.shape):
        raise FormatError(f"dims must be in [1, 2^32), got {arr.shape}")
    head = _HEADER.pack(MAGIC, VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(buf: bytes, path=None) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", offset=len(buf), path=path)
    magic, version, rank = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0, path=path)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4, path=path)
    if rank < 1:
        raise FormatError("rank must be >= 1", offset=5, path=path)
    off = _HEADER.size
    if len(buf) < off + 4 * rank:
        raise FormatError("truncated dims", offset=len(buf), path=path)
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    if any(n == 0 for n in dims):
        raise FormatError(f"zero-sized dim in {dims}", offset=_HEADER.size, path=path)
    count = int(np.prod(dims, dtype=np.int64))
    need = off + 4 * count
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(buf)}", offset=len(buf), path=path)
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload", offset=need, path=path)
    return np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(dims).astype(np.float32)


def write_tensor_file(path, arr) -> None:
    data = encode_tensor(arr)
    with open(path, "wb") as fh:
        fh.write(data)


def read_tensor_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_tensor(buf, path=os.fspath(path))
