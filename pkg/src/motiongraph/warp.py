"""Motion upsampler, motion decoder and multi-flow forward warping.

Warping splats every source pixel of every observed frame along each of its
``k`` vectors.  A target at sub-pixel position ``(tx, ty)`` is shared by its
four surrounding pixels with bilinear fractions; each share carries weight
``exp(w) * gamma**(T-1-t) * fraction``.  Shares landing outside the canvas are
dropped.  The output is the weighted mean colour where the summed weight
exceeds ``eps`` and the last observed frame elsewhere.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, InputError
from .numerics import ops
from .numerics.branches import branch
from .numerics.tensor import Parameter, Tensor, as_tensor
from .params import ParamStore, conv, linear


# -- upsampler and decoder --------------------------------------------------------

def init_upsampler_params(store: ParamStore, channels: int, stages: int) -> None:
    for s in range(1, stages + 1):
        store.conv(f"upsampler.stage{s}.conv_a", channels, channels, 3)
        store.conv(f"upsampler.stage{s}.conv_b", 4 * channels, channels, 3)


def upsample_motion(f: Tensor, params: Mapping[str, Parameter], stages: int, *,
                    slope: float = 0.2, bypass: bool = True,
                    size: tuple[int, int] | None = None) -> Tensor:
    """``T×Hs×Ws×C`` to ``T×(Hs·2^stages)×(Ws·2^stages)×C``.

    Each stage computes ``conv_b(lrelu(conv_a(x)))`` with ``4C`` output channels,
    adds ``x`` repeated four times on the channel axis when ``bypass`` is set,
    and depth-to-space shuffles by 2.  The repeat lands each input value on its
    whole 2×2 output block, so the bypass alone is nearest-neighbour upsampling.
    """
    if f.ndim != 4:
        raise DimensionError(f"expected T×Hs×Ws×C features, got {f.shape}")
    if size is not None and size != (f.shape[1] * 2 ** stages, f.shape[2] * 2 ** stages):
        raise ConfigurationError(
            f"{stages} upsampling stages map {f.shape[1:3]} to "
            f"{(f.shape[1] * 2 ** stages, f.shape[2] * 2 ** stages)}, not {size}")
    x = ops.transpose(f, (0, 3, 1, 2))
    C = x.shape[1]
    repeat = np.repeat(np.arange(C), 4)
    for s in range(1, stages + 1):
        h = ops.leaky_relu(conv(x, params, f"upsampler.stage{s}.conv_a"), slope)
        h = conv(h, params, f"upsampler.stage{s}.conv_b")
        if bypass:
            h = ops.add(h, ops.index(x, (slice(None), repeat)))
        x = ops.pixel_shuffle(h, 2)
    return ops.transpose(x, (0, 2, 3, 1))


def init_decoder_params(store: ParamStore, channels: int, k: int) -> None:
    store.linear("decoder.proj", channels, 3 * k)


def decode_motion(f_sr: Tensor, params: Mapping[str, Parameter], k: int,
                  max_disp: float) -> Tensor:
    """Per-pixel 1×1 projection to ``k`` triplets ``(dx, dy, w)``, shape ``T×H×W×k×3``.

    Displacements are ``tanh * max_disp`` pixels; ``w`` stays a raw logit.
    """
    raw = ops.reshape(linear(f_sr, params, "decoder.proj"), f_sr.shape[:3] + (k, 3))
    disp = ops.mul(ops.tanh(raw[..., :2]), max_disp)
    return ops.concat([disp, raw[..., 2:]], axis=-1)


# -- splatting --------------------------------------------------------------------

@dataclass
class Splat:
    """Flattened in-bounds shares: source pixel row, target pixel, weight."""

    source: np.ndarray
    target: np.ndarray
    weight: Tensor | None          # None when every share left the canvas
    size: int


def _check_field(P: Tensor) -> None:
    if P.ndim != 5 or P.shape[-1] != 3:
        raise DimensionError(f"dynamic vectors must be T×H×W×k×3, got {P.shape}")
    if np.isnan(P.data).any():
        raise InputError("dynamic vector field contains NaN")
    if not np.isfinite(P.data).all():
        raise InputError("dynamic vector field contains infinite entries")


def splat(P: Tensor, gamma: float = 0.5) -> Splat:
    """Bilinear shares of every ``(frame, pixel, vector)`` with their weights."""
    _check_field(P)
    T, H, W, k, _ = P.shape
    t = np.arange(T).reshape(T, 1, 1, 1)
    y = np.arange(H).reshape(1, H, 1, 1)
    x = np.arange(W).reshape(1, 1, W, 1)
    tx = ops.add(P[..., 0], x.astype(P.dtype))
    ty = ops.add(P[..., 1], y.astype(P.dtype))
    x0 = branch(np.floor(tx.data))
    y0 = branch(np.floor(ty.data))
    fx = ops.sub(tx, x0)
    fy = ops.sub(ty, y0)
    gx = ops.sub(1.0, fx)
    gy = ops.sub(1.0, fy)
    recency = (gamma ** (T - 1 - t)).astype(P.dtype)
    base = ops.mul(ops.exp(P[..., 2]), recency)
    shares, targets, valid = [], [], []
    for ox, oy, frac in ((0, 0, ops.mul(gx, gy)), (1, 0, ops.mul(fx, gy)),
                         (0, 1, ops.mul(gx, fy)), (1, 1, ops.mul(fx, fy))):
        cx = (x0 + ox).astype(np.int64)
        cy = (y0 + oy).astype(np.int64)
        shares.append(ops.mul(base, frac))
        valid.append((cx >= 0) & (cx < W) & (cy >= 0) & (cy < H))
        targets.append(np.clip(cy, 0, H - 1) * W + np.clip(cx, 0, W - 1))
    share = ops.reshape(ops.stack(shares, axis=-1), (-1,))
    keep = np.nonzero(np.stack(valid, axis=-1).reshape(-1))[0]
    target = np.stack(targets, axis=-1).reshape(-1)[keep]
    source = np.broadcast_to((t * H + y) * W + x, (T, H, W, k))
    source = np.broadcast_to(source[..., None], (T, H, W, k, 4)).reshape(-1)[keep]
    weight = ops.index(share, keep) if keep.size else None
    return Splat(source=source, target=target, weight=weight, size=H * W)


def forward_warp(frames, P: Tensor, *, gamma: float = 0.5, eps: float = 1e-6,
                 fallback=None) -> Tensor:
    """Warp ``T×H×W×3`` frames to one ``H×W×3`` prediction along ``P``.

    Pixels whose accumulated weight is at most ``eps`` take ``fallback``
    (default: the last observed frame).
    """
    frames = as_tensor(frames, like=P)
    _check_field(P)
    T, H, W, C = frames.shape
    if P.shape[:3] != (T, H, W):
        raise DimensionError(f"field {P.shape} does not match frames {frames.shape}")
    sp = splat(P, gamma)
    fallback = frames[T - 1] if fallback is None else as_tensor(fallback, like=P)
    if fallback.shape != (H, W, C):
        raise DimensionError(f"fallback {fallback.shape} does not match frame {(H, W, C)}")
    if sp.weight is None:
        return fallback
    colours = ops.index(ops.reshape(frames, (T * H * W, C)), sp.source)
    u = ops.reshape(sp.weight, (-1, 1))
    acc = ops.scatter_add(ops.concat([ops.mul(colours, u), u], axis=1), sp.target, sp.size)
    wsum = acc[:, C:]
    hit = branch(wsum.data > eps)
    den = ops.where(hit, wsum, 1.0)
    fallback = ops.reshape(fallback, (H * W, C))
    out = ops.where(np.broadcast_to(hit, (H * W, C)), ops.div(acc[:, :C], den), fallback)
    return ops.reshape(out, (H, W, C))


def effective_weight_sums(P: Tensor, *, gamma: float = 0.5,
                          eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel sum of normalized share weights, and the mask where the total exceeds ``eps``."""
    sp = splat(P, gamma)
    H, W = P.shape[1:3]
    if sp.weight is None:
        return np.zeros((H, W)), np.zeros((H, W), bool)
    u = sp.weight.data.astype(np.float64)
    total = np.bincount(sp.target, weights=u, minlength=sp.size)
    hit = total > eps
    norm = np.where(hit[sp.target], u / np.where(hit, total, 1.0)[sp.target], 0.0)
    return np.bincount(sp.target, weights=norm, minlength=sp.size).reshape(H, W), hit.reshape(H, W)


def predict_rollout(frames: np.ndarray, predict: Callable[[np.ndarray], np.ndarray],
                    steps: int) -> list[np.ndarray]:
    """Autoregressive rollout: predict, append, slide the window by one, repeat."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    window = np.asarray(frames)
    out = []
    for _ in range(steps):
        nxt = np.asarray(predict(window))
        out.append(nxt)
        window = np.concatenate([window[1:], nxt[None]], axis=0)
    return out
