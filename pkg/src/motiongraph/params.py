"""Named parameter storage and the two layer shapes every module uses."""

from __future__ import annotations

from collections.abc import Iterator, Mapping

import numpy as np

from .numerics import ops
from .numerics.tensor import Parameter, Tensor, get_default_dtype


class ParamStore(Mapping[str, Parameter]):
    """Ordered ``name -> Parameter`` map with seeded uniform fan-in initialization.

    Weights and biases are drawn from ``U(-sqrt(1/fan_in), sqrt(1/fan_in))`` in
    creation order, so the same seed and module layout give identical values.
    """

    def __init__(self, seed: int = 0, dtype=None):
        self._params: dict[str, Parameter] = {}
        self._rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype) if dtype is not None else get_default_dtype()

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name}")
        p = Parameter(np.asarray(value, dtype=self.dtype), name=name)
        self._params[name] = p
        return p

    def uniform(self, name: str, shape: tuple[int, ...], fan_in: int) -> Parameter:
        bound = float(np.sqrt(1.0 / fan_in))
        return self.add(name, self._rng.uniform(-bound, bound, size=shape))

    def linear(self, prefix: str, n_in: int, n_out: int) -> None:
        self.uniform(f"{prefix}.weight", (n_in, n_out), n_in)
        self.uniform(f"{prefix}.bias", (n_out,), n_in)

    def conv(self, prefix: str, c_out: int, c_in: int, kernel: int) -> None:
        fan_in = c_in * kernel * kernel
        self.uniform(f"{prefix}.weight", (c_out, c_in, kernel, kernel), fan_in)
        self.uniform(f"{prefix}.bias", (c_out,), fan_in)

    def parameters(self, prefix: str = "") -> list[Parameter]:
        return [p for n, p in self._params.items() if n.startswith(prefix)]

    def count(self, prefix: str = "") -> int:
        return sum(p.size for p in self.parameters(prefix))

    def group_counts(self) -> dict[str, int]:
        """Parameter counts keyed by top-level module name, in creation order."""
        out: dict[str, int] = {}
        for name, p in self._params.items():
            top = name.split(".", 1)[0]
            out[top] = out.get(top, 0) + p.size
        return out

    def zero_(self, prefix: str = "") -> None:
        """Set every matching parameter to zero (test fixtures, ablations)."""
        for p in self.parameters(prefix):
            p.assign(np.zeros(p.shape))


def linear(x: Tensor, params: Mapping[str, Parameter], prefix: str) -> Tensor:
    return ops.linear(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"])


def conv(x: Tensor, params: Mapping[str, Parameter], prefix: str,
         stride: int = 1, padding: int = 1) -> Tensor:
    return ops.conv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"],
                      stride=stride, padding=padding)
