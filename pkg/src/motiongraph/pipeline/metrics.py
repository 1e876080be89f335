"""Training losses and image-quality metrics."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DimensionError
from ..numerics import ops
from ..numerics.tensor import Tensor, as_tensor


def loss(pred: Tensor, target, kind: str = "mse") -> Tensor:
    """Scalar ``mse`` (mean squared) or ``l1`` (mean absolute) difference."""
    target = as_tensor(target, like=pred)
    if pred.shape != target.shape:
        raise DimensionError(f"loss: prediction {pred.shape} vs target {target.shape}")
    if kind == "mse":
        return ops.mse(pred, target)
    if kind == "l1":
        return ops.l1(pred, target)
    raise ValueError(f"unknown loss kind {kind!r}")


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """``10 log10(1 / mse)`` for images in [0, 1]; ``inf`` for identical images."""
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"psnr: {pred.shape} vs {target.shape}")
    err = float(np.mean((pred - target) ** 2))
    return math.inf if err == 0.0 else 10.0 * math.log10(1.0 / err)


def _gaussian(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' filtering over the first two axes."""
    win = np.lib.stride_tricks.sliding_window_view(img, g.size, axis=0)
    img = np.einsum("i...k,k->i...", win, g)
    win = np.lib.stride_tricks.sliding_window_view(img, g.size, axis=1)
    return np.einsum("ij...k,k->ij...", win, g)


def ssim(pred: np.ndarray, target: np.ndarray, *, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM with a Gaussian window, averaged over channels.

    Images smaller than the window use the largest odd window that fits.
    """
    x, y = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"ssim: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    size = min(window, x.shape[0], x.shape[1])
    size -= 1 - size % 2
    g = _gaussian(size, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    mx, my = _filter(x, g), _filter(y, g)
    sxx = _filter(x * x, g) - mx * mx
    syy = _filter(y * y, g) - my * my
    sxy = _filter(x * y, g) - mx * my
    s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    return float(np.mean(s))


def metrics(pred: np.ndarray, target: np.ndarray) -> dict[str, float]:
    return {"psnr": psnr(pred, target), "ssim": ssim(pred, target)}
