"""Binary parameter container.

Layout (all integers little-endian)::

    magic      8 bytes   b"UNIARRAY"
    version    u32       FORMAT_VERSION
    header     u32 length + UTF-8 JSON (free-form metadata)
    count      u32       number of records
    record*    u16 name length, name (UTF-8), u8 ndim, ndim x u32 shape,
               u8 dtype code (0 float64, 1 float32), raw values in C order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"UNIARRAY"
FORMAT_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1}


class CheckpointFormatError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray], header: dict | None = None) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", FORMAT_VERSION)
    head = json.dumps(header or {}, sort_keys=True).encode()
    buf += struct.pack("<I", len(head)) + head
    buf += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointFormatError(f"{name}: unsupported dtype {arr.dtype}")
        raw_name = name.encode()
        buf += struct.pack("<H", len(raw_name)) + raw_name
        buf += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        code = _CODES[arr.dtype]
        buf += struct.pack("<B", code) + arr.astype(_DTYPES[code]).tobytes()
    Path(path).write_bytes(bytes(buf))


def load_tensors(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a parameter container")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointFormatError(f"{path}: truncated")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (hlen,) = take("<I")
    header = json.loads(data[pos : pos + hlen].decode())
    pos += hlen
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = data[pos : pos + nlen].decode()
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        (code,) = take("<B")
        if code not in _DTYPES:
            raise CheckpointFormatError(f"{path}: bad dtype code {code} for {name}")
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > len(data):
            raise CheckpointFormatError(f"{path}: truncated in {name}")
        tensors[name] = np.frombuffer(data, dtype, count=nbytes // dtype.itemsize, offset=pos).reshape(shape).copy()
        pos += nbytes
    return header, tensors
