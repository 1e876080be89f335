"""Binary ``.mgt`` tensor files.

Layout (little-endian)::

    0  4 bytes  magic b"MGT1"
    4  u8       dtype code (1 = float32, 2 = float64)
    5  u8       rank
    6  2 bytes  zero padding
    8  rank x u64 extents
    .. row-major payload
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import InputError

MAGIC = b"MGT1"
_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def encode(array) -> bytes:
    arr = np.asarray(array)
    if arr.dtype.kind != "f" or arr.dtype.itemsize not in (4, 8):
        arr = arr.astype(np.float64)
    arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
    if arr.ndim == 0:
        arr = arr.reshape(1)
    code = _CODES[arr.dtype]
    header = MAGIC + struct.pack("<BB2x", code, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.tobytes(order="C")


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise InputError("not an MGT1 tensor file (bad magic)")
    code, rank = struct.unpack_from("<BB", blob, 4)
    if code not in _DTYPES:
        raise InputError(f"unknown MGT dtype code {code}")
    if rank < 1:
        raise InputError("MGT rank must be >= 1")
    end = 8 + 8 * rank
    if len(blob) < end:
        raise InputError("truncated MGT header")
    shape = struct.unpack_from(f"<{rank}Q", blob, 8)
    dtype = _DTYPES[code]
    count = int(np.prod(shape))
    if len(blob) != end + count * dtype.itemsize:
        raise InputError(f"MGT payload size mismatch for shape {shape}")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=end).reshape(shape)
    return data.astype(dtype.newbyteorder("="))


def save(path: str | os.PathLike, array) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(array))


def load(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read())
