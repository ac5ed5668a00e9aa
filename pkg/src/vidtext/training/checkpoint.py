"""Named-parameter checkpoint.

Layout::

    b"VTCK" | header length u64 LE | UTF-8 JSON header | float32 LE payload

The header lists every tensor as ``{"name", "dims", "offset", "nbytes"}``
with offsets relative to the start of the payload, in registry order, and
carries the model configuration so a checkpoint is self-describing.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import FormatError

MAGIC = b"VTCK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sQ")


def encode_checkpoint(arrays: Dict[str, np.ndarray], config: Optional[dict] = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        raw = a.tobytes()
        entries.append({"name": name, "dims": list(a.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {"format_version": FORMAT_VERSION, "dtype": "float32", "byte_order": "little",
              "tensors": entries, "config": config or {}}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, len(hbytes)) + hbytes + b"".join(chunks)


def decode_checkpoint(buf: bytes, path=None) -> Tuple[Dict[str, np.ndarray], dict]:
    if len(buf) < _PREFIX.size:
        raise FormatError("truncated checkpoint prefix", offset=len(buf), path=path)
    magic, hlen = _PREFIX.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", offset=0, path=path)
    start = _PREFIX.size
    if len(buf) < start + hlen:
        raise FormatError("truncated checkpoint header", offset=len(buf), path=path)
    try:
        header = json.loads(buf[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError("checkpoint header is not valid JSON", offset=start, path=path) from None
    if header.get("format_version") != FORMAT_VERSION or header.get("dtype") != "float32":
        raise FormatError("unsupported checkpoint version or dtype", offset=start, path=path)
    payload = start + hlen
    arrays = {}
    for e in header["tensors"]:
        lo = payload + e["offset"]
        hi = lo + e["nbytes"]
        count = int(np.prod(e["dims"], dtype=np.int64)) if e["dims"] else 1
        if e["nbytes"] != 4 * count:
            raise FormatError(f"tensor {e['name']!r}: nbytes does not match dims", offset=lo, path=path)
        if hi > len(buf):
            raise FormatError(f"tensor {e['name']!r} truncated", offset=len(buf), path=path)
        arrays[e["name"]] = np.frombuffer(buf, dtype="<f4", count=count, offset=lo).reshape(e["dims"]).astype(np.float32)
    return arrays, header.get("config", {})


def save_checkpoint(path, arrays: Dict[str, np.ndarray], config: Optional[dict] = None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(arrays, config))


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_checkpoint(buf, path=str(path))
