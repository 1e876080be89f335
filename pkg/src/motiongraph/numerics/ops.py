"""Differentiable primitives.

Every function here computes its forward value with numpy and, when a tape is
active and an input requires a gradient, records a closure that maps the output
adjoint to one adjoint per input.  Composite helpers at the bottom of the file
(``linear``, ``cosine_similarity_rows`` ...) are built only from primitives, so
they need no backward rule of their own.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError
from .branches import branch
from .tensor import Tensor, current_tape

DEFAULT_SLOPE = 0.2


def _record(name: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor._wrap(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(name, out, inputs, backward)
    return out


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=like.dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    if not isinstance(b, Tensor):
        b = _lift(b, a)
    return a, b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _record("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data
    return _record("div", out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * out / b.data, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _record("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def absolute(a: Tensor) -> Tensor:
    sign = branch(np.sign(a.data))
    return _record("abs", a.data * sign, (a,), lambda g: (g * sign,))


def square(a: Tensor) -> Tensor:
    return _record("square", a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def leaky_relu(x: Tensor, slope: float = DEFAULT_SLOPE) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    pos = branch(x.data >= 0)
    out = np.where(pos, x.data, x.data * x.dtype.type(slope))
    return _record("leaky_relu", out, (x,),
                   lambda g: (np.where(pos, g, g * x.dtype.type(slope)),))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    keep = branch(x.data >= floor)
    out = np.where(keep, x.data, x.dtype.type(floor))
    return _record("clamp_min", out, (x,), lambda g: (np.where(keep, g, 0.0).astype(g.dtype),))


def where(mask: np.ndarray, a, b) -> Tensor:
    """Select ``a`` where ``mask`` is true, else ``b``; ``mask`` is constant."""
    a, b = _pair(a, b)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, b.data)
    zero = out.dtype.type(0)
    return _record("where", out, (a, b),
                   lambda g: (_unbroadcast(np.where(mask, g, zero), a.shape),
                              _unbroadcast(np.where(mask, zero, g), b.shape)))


# -- reductions -----------------------------------------------------------------

def _expand(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g.reshape(()), shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    return _record("sum", out, (x,),
                   lambda g: (np.array(_expand(g, x.shape, axis, keepdims)),))


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    count = x.size // max(np.size(out), 1)
    return _record("mean", out, (x,),
                   lambda g: (np.array(_expand(g, x.shape, axis, keepdims)) / count,))


def amax(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Maximum along one axis; the gradient goes to the first maximal entry."""
    if axis is None:
        flat = int(branch(np.argmax(x.data)))
        out = x.data.reshape(-1)[flat]

        def backward(g):
            gx = np.zeros(x.size, dtype=g.dtype)
            gx[flat] = g.reshape(-1)[0]
            return (gx.reshape(x.shape),)

        return _record("amax", np.asarray(out), (x,), backward)
    axis = axis % x.ndim
    arg = np.expand_dims(branch(np.argmax(x.data, axis=axis)), axis)
    out = np.take_along_axis(x.data, arg, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, arg, gk, axis=axis)
        return (gx,)

    return _record("amax", out, (x,), backward)


def norm(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``; the subgradient at a zero vector is zero."""
    out = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))

    def backward(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, gk * x.data / safe, 0.0).astype(g.dtype),)

    return _record("norm", out if keepdims else np.squeeze(out, axis=axis), (x,), backward)


# -- shape manipulation ---------------------------------------------------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    return _record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record("transpose", np.ascontiguousarray(x.data.transpose(axes)), (x,),
                   lambda g: (np.ascontiguousarray(g.transpose(inverse)),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    axis = axis % tensors[0].ndim
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(
            f"cannot concatenate shapes {[t.shape for t in tensors]} on axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record("concat", out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    expanded = []
    for t in tensors:
        ax = axis % (t.ndim + 1)
        expanded.append(reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]))
    return concat(expanded, axis=axis)


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis
               for i in items)


def index(x: Tensor, idx) -> Tensor:
    """``x[idx]`` for basic or integer-array indices; repeated indices accumulate."""
    out = x.data[idx]
    basic = _is_basic(idx)

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        target_shape = np.shape(x.data[idx])
        if basic:
            gx[idx] = g.reshape(target_shape)
        else:
            np.add.at(gx, idx, g.reshape(target_shape))
        return (gx,)

    return _record("index", np.array(out), (x,), backward)


def scatter_add(src: Tensor, targets: np.ndarray, size: int) -> Tensor:
    """Sum rows of ``src`` into ``size`` output rows: ``out[targets[i]] += src[i]``."""
    targets = np.asarray(targets, dtype=np.intp)
    if targets.shape != src.shape[:1]:
        raise DimensionError(f"scatter_add: {targets.shape[0]} targets for {src.shape[0]} rows")
    out = np.zeros((size,) + src.shape[1:], dtype=src.dtype)
    cols = src.data.reshape(src.shape[0], -1)
    flat = out.reshape(size, -1)
    for c in range(cols.shape[1]):
        flat[:, c] = np.bincount(targets, weights=cols[:, c], minlength=size)
    return _record("scatter_add", out, (src,), lambda g: (g[targets],))


# -- linear algebra and convolution --------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Dense ``M×K @ K×N`` product."""
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _record("matmul", a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded 2D cross-correlation over ``B×C×H×W`` input with ``O×C×kh×kw`` kernels."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input and kernel, got {x.shape} and {w.shape}")
    B, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if Cw != C:
        raise DimensionError(f"conv2d: input has {C} channels, kernel expects {Cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: invalid stride {stride} / padding {padding}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kh > Hp or kw > Wp:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho, Wo = (Hp - kh) // stride + 1, (Wp - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    wmat = w.data.reshape(O, C * kh * kw)
    out = (cols @ wmat.T).reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
    if bias is not None:
        if bias.shape != (O,):
            raise DimensionError(f"conv2d: bias shape {bias.shape} != ({O},)")
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, O)
        gw = (g2.T @ cols).reshape(w.shape)
        gcols = (g2 @ wmat).reshape(B, Ho, Wo, C, kh, kw)
        gxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
        hs, ws = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + hs:stride, j:j + ws:stride] += \
                    gcols[..., i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, padding:padding + H, padding:padding + W]
        grads = [np.ascontiguousarray(gx), gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    inputs = (x, w) if bias is None else (x, w, bias)
    return _record("conv2d", out, inputs, backward)


def _unshuffle(a: np.ndarray, r: int) -> np.ndarray:
    B, C, H, W = a.shape
    a = a.reshape(B, C, H // r, r, W // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(a.reshape(B, C * r * r, H // r, W // r))


def _shuffle(a: np.ndarray, r: int) -> np.ndarray:
    B, Cr, H, W = a.shape
    C = Cr // (r * r)
    a = a.reshape(B, C, r, r, H, W).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(a.reshape(B, C, H * r, W * r))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Space-to-depth: ``out[b, c*r*r + i*r + j, y, x] = in[b, c, y*r + i, x*r + j]``."""
    if x.ndim != 4:
        raise DimensionError(f"pixel_unshuffle expects B×C×H×W, got {x.shape}")
    if r < 1 or x.shape[2] % r or x.shape[3] % r:
        raise DimensionError(f"pixel_unshuffle: factor {r} does not divide {x.shape[2:]}")
    return _record("pixel_unshuffle", _unshuffle(x.data, r), (x,), lambda g: (_shuffle(g, r),))


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Depth-to-space, the exact inverse of :func:`pixel_unshuffle`."""
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle expects B×C×H×W, got {x.shape}")
    if r < 1 or x.shape[1] % (r * r):
        raise DimensionError(f"pixel_shuffle: {x.shape[1]} channels not divisible by {r * r}")
    return _record("pixel_shuffle", _shuffle(x.data, r), (x,), lambda g: (_unshuffle(g, r),))


# -- composites -------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Apply ``x @ weight + bias`` over the last axis of ``x``; ``weight`` is ``in×out``."""
    lead = x.shape[:-1]
    y = matmul(reshape(x, (-1, x.shape[-1])), weight)
    if bias is not None:
        y = add(y, bias)
    return reshape(y, lead + (weight.shape[1],))


def cosine_similarity_rows(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """``s[i, j] = <a_i, b_j> / (max(|a_i|, eps) * max(|b_j|, eps))``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"cosine_similarity_rows: incompatible shapes {a.shape} and {b.shape}")
    an = div(a, clamp_min(norm(a, axis=1, keepdims=True), eps))
    bn = div(b, clamp_min(norm(b, axis=1, keepdims=True), eps))
    return matmul(an, transpose(bn))


def mse(pred: Tensor, target) -> Tensor:
    diff = sub(pred, target)
    return mean(square(diff))


def l1(pred: Tensor, target) -> Tensor:
    return mean(absolute(sub(pred, target)))
