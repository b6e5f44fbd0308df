"""AXTF tensor file format.

Binary layout: magic ``AXTF`` (41 58 54 46), version byte 0x01, dtype byte
(0x01 = 32-bit little-endian IEEE float), rank byte, rank 32-bit
little-endian unsigned dims, then the row-major payload. Used for feature
maps, magnification maps, dataset sidecars, and model weights.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AXTF"
VERSION = 0x01
DTYPE_FLOAT32 = 0x01

_DTYPES = {DTYPE_FLOAT32: np.dtype("<f4")}


def write_tensor(path, array) -> None:
    """Write ``array`` to ``path`` as a float32 AXTF tensor."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim > 255:
        raise ValueError("rank exceeds AXTF limit")
    header = MAGIC + bytes([VERSION, DTYPE_FLOAT32, arr.ndim])
    dims = struct.pack("<%dI" % arr.ndim, *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read an AXTF tensor from ``path``."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 7 or data[:4] != MAGIC:
        raise ValueError(f"{path}: not an AXTF file (bad magic)")
    version, dtype_code, rank = data[4], data[5], data[6]
    if version != VERSION:
        raise ValueError(f"{path}: unsupported AXTF version {version}")
    if dtype_code not in _DTYPES:
        raise ValueError(f"{path}: unsupported AXTF dtype 0x{dtype_code:02x}")
    offset = 7
    if len(data) < offset + 4 * rank:
        raise ValueError(f"{path}: truncated AXTF header")
    shape = struct.unpack_from("<%dI" % rank, data, offset)
    offset += 4 * rank
    dtype = _DTYPES[dtype_code]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    if payload.size != count:
        raise ValueError(f"{path}: truncated AXTF payload")
    return payload.reshape(shape).copy()
