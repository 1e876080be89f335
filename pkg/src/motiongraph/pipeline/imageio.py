"""Binary PPM (P6, 8-bit) frames."""

from __future__ import annotations

import os
import re

import numpy as np

from ..errors import InputError


def to_bytes(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write an ``H×W×3`` image with values in [0, 1]."""
    data = to_bytes(img)
    if data.ndim != 3 or data.shape[2] != 3:
        raise InputError(f"PPM needs an H×W×3 image, got {data.shape}")
    H, W, _ = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{W} {H}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


_HEADER = re.compile(rb"\AP6\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    """Read a P6 file into float64 values in [0, 1]."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc.strerror}") from None
    m = _HEADER.match(blob)
    if not m:
        raise InputError(f"{path}: not a binary PPM (P6) file")
    W, H, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise InputError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    payload = blob[m.end():]
    if len(payload) != W * H * 3:
        raise InputError(f"{path}: expected {W * H * 3} bytes of pixels, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(H, W, 3).astype(np.float64) / 255.0
