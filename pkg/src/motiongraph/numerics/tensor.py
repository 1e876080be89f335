"""Dense tensor type and the reverse-mode tape.

A :class:`Tensor` wraps a contiguous row-major numpy buffer of dtype float32 or
float64.  Primitive operations (see :mod:`motiongraph.numerics.ops`) record
themselves on the innermost active :class:`Tape`; :func:`backward` replays the
tape in reverse and accumulates gradients into leaf tensors and parameters.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import DimensionError, StateError

_SUPPORTED = (np.dtype(np.float32), np.dtype(np.float64))
_default_dtype = np.dtype(np.float32)
_tape_stack: list["Tape"] = []


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in _SUPPORTED:
        raise TypeError(f"unsupported dtype {dtype}; expected float32 or float64")
    _default_dtype = dtype


def get_default_dtype() -> np.dtype:
    return _default_dtype


@contextlib.contextmanager
def default_dtype(dtype):
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def _coerce(data, dtype=None, copy: bool = False) -> np.ndarray:
    if dtype is not None:
        dtype = np.dtype(dtype)
        if dtype not in _SUPPORTED:
            raise TypeError(f"unsupported dtype {dtype}; expected float32 or float64")
    arr = np.asarray(data)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in _SUPPORTED else _default_dtype
    arr = np.array(arr, dtype=dtype, order="C", copy=copy or None)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if 0 in arr.shape:
        raise DimensionError(f"tensor extents must be >= 1, got {arr.shape}")
    return arr


class Tensor:
    """Immutable dense array that can participate in reverse-mode differentiation."""

    __array_priority__ = 100

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        # Public construction copies so the caller's buffer never becomes read-only.
        self._set(_coerce(data, dtype, copy=isinstance(data, np.ndarray)), requires_grad)

    def _set(self, arr: np.ndarray, requires_grad: bool = False) -> None:
        self.data = arr
        self.data.flags.writeable = False
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self._index = -1

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out._set(_coerce(arr))
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # Operator sugar; the primitives live in ops.py.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.amax(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    @property
    def T(self):
        return self.transpose()


class Parameter(Tensor):
    """Learnable tensor with a persistent gradient buffer and a dotted name path."""

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, dtype=dtype, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def assign(self, value: np.ndarray) -> None:
        """Replace the value in place (optimizer/checkpoint use only)."""
        value = np.array(value, dtype=self.dtype, order="C")
        if value.shape != self.shape:
            raise DimensionError(f"{self.name}: cannot assign shape {value.shape} to {self.shape}")
        value.flags.writeable = False
        self.data = value

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


@dataclass
class _Op:
    name: str
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass(eq=False)
class Tape:
    """Ordered record of primitive operations for one differentiation pass.

    Use as a context manager; primitives executed inside the block are recorded
    when at least one of their inputs requires a gradient.
    """

    ops: list[_Op] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack.remove(self)

    def __len__(self) -> int:
        return len(self.ops)

    def record(self, name: str, out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        out._tape = self
        out._index = len(self.ops)
        out.requires_grad = True
        self.ops.append(_Op(name, out, inputs, backward))

    def clear(self) -> None:
        for op in self.ops:
            op.out._index = -1
        self.ops.clear()

    def backward(self, loss: Tensor, trace: list[str] | None = None) -> None:
        if loss._tape is not self or not (0 <= loss._index < len(self.ops)) \
                or self.ops[loss._index].out is not loss:
            raise StateError("backward() called on a tensor that is not on this tape")
        if loss.size != 1:
            raise DimensionError(f"backward() needs a scalar loss, got shape {loss.shape}")
        adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for op in reversed(self.ops[: loss._index + 1]):
            if trace is not None:
                trace.append(op.name)
            g = adjoints.pop(id(op.out), None)
            if g is None:
                continue
            for inp, gi in zip(op.inputs, op.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise DimensionError(
                        f"{op.name}: gradient shape {gi.shape} does not match input {inp.shape}")
                if inp._tape is None:
                    if inp.grad is None:
                        inp.grad = np.array(gi, dtype=inp.dtype)
                    else:
                        inp.grad += gi
                else:
                    acc = adjoints.get(id(inp))
                    adjoints[id(inp)] = gi if acc is None else acc + gi
        self.clear()


def current_tape() -> Tape | None:
    return _tape_stack[-1] if _tape_stack else None


@contextlib.contextmanager
def no_grad():
    """Suspend recording on every active tape."""
    saved = list(_tape_stack)
    _tape_stack.clear()
    try:
        yield
    finally:
        _tape_stack.extend(saved)


def backward(loss: Tensor, trace: list[str] | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf, then clear the tape."""
    if loss._tape is None:
        raise StateError("backward() called on a tensor that was not recorded on a tape")
    loss._tape.backward(loss, trace=trace)


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)
