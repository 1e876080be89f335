"""Central finite-difference checks of tape gradients.

A checked function returns a tensor ``y`` of any shape.  It is contracted with
a fixed random cotangent ``r`` so that the scalar ``<r, y>`` is differentiated
on the tape, while its numeric counterpart
``(<r, y(x + h v)> - <r, y(x - h v)>) / 2h`` is reduced in float64.  Random
unit-RMS directions ``v`` are probed for every input, plus single-entry
partials for small float64 inputs.  Float32 uses a wide step whose
truncation error is cancelled by Richardson extrapolation
``(4 D(h) - D(2h)) / 3``.

Errors are relative to ``max(|analytic|, |numeric|, |g|)`` where ``|g|`` is the
Euclidean norm of the input's gradient, the typical size of a directional
derivative along a unit-RMS direction.  Output round-off is of order
``eps * |y| / h`` whatever the direction, so without that floor a direction
nearly orthogonal to the gradient would report noise as error.

The taped pass records every discrete decision (branch masks, argmax
positions, top-k selections, splat cells) and the perturbed evaluations
replay them.  Differences are then taken on the smooth piece containing the
checked point, whose derivative there is the true one, so a probe that
straddles a switch no longer reports a spurious jump.

Model parameters can be weakly coupled to the output (gradient norms of
1e-5 against an output round-off near 1e-14), so :func:`check_parameters`
widens the step until ``h * |g|`` clears round-off and cancels the larger
truncation error by Richardson extrapolation.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from . import ops
from .branches import recording, replaying
from .tensor import Parameter, Tape, Tensor, backward

# output change a parameter probe aims for, and the widest relative step
PROBE_CHANGE = 1e-7
MAX_STEP = 3e-3

# relative steps of the difference ladder in check_parameters
LADDER = 2.0 ** np.arange(-3, 3)

# (step scale, tolerance) per dtype
SETTINGS = {
    np.dtype(np.float64): (1e-6, 1e-6),
    np.dtype(np.float32): (1e-2, 1e-3),
}


def tolerance(dtype) -> float:
    return SETTINGS[np.dtype(dtype)][1]


def rel_err(a: float, b: float, floor: float = 1e-12) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _rms_scale(x: np.ndarray) -> float:
    return max(float(np.sqrt(np.mean(np.square(x, dtype=np.float64)))), 1.0)


def _step(x: np.ndarray, dtype) -> float:
    h, _ = SETTINGS[np.dtype(dtype)]
    return h * _rms_scale(x)


def _scale(grad: np.ndarray) -> float:
    return max(float(np.linalg.norm(grad.astype(np.float64))), 1e-30)


def _central(f: Callable[[float], float], h: float) -> float:
    return (f(h) - f(-h)) / (2 * h)


def _contract(y: Tensor, cotangent: np.ndarray) -> float:
    return float(np.sum(y.data.astype(np.float64) * cotangent))


def check_function(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], *,
                   rng: np.random.Generator, directions: int = 2,
                   elementwise_limit: int = 24) -> float:
    """Max relative error of the gradients of ``fn(*tensors)`` w.r.t. every input."""
    arrays = [np.asarray(a) for a in inputs]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape(), recording() as log:
        y = fn(*leaves)
        cot = rng.standard_normal(y.shape)
        backward(ops.sum(ops.mul(y, Tensor(cot.astype(y.dtype)))))
    grads = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]

    def evaluate(values) -> float:
        with replaying(log):
            return _contract(fn(*[Tensor(v) for v in values]), cot)

    worst = 0.0
    for i, x in enumerate(arrays):
        h = _step(x, x.dtype)
        probes = [rng.standard_normal(x.shape) for _ in range(directions)]
        # single-entry partials drown in float32 round-off; directions only there
        if x.size <= elementwise_limit and x.dtype == np.float64:
            for flat in range(x.size):
                e = np.zeros(x.size)
                e[flat] = 1.0
                probes.append(e.reshape(x.shape))
        for v in probes:
            v = (v / max(np.sqrt(np.mean(v * v)), 1e-30)).astype(x.dtype)
            def along(s, i=i, x=x, v=v):
                return evaluate([a if j != i else (x + s * v).astype(x.dtype)
                                 for j, a in enumerate(arrays)])

            numeric = _central(along, h)
            if x.dtype == np.float32:
                numeric = (4 * numeric - _central(along, 2 * h)) / 3
            analytic = float(np.sum(grads[i].astype(np.float64) * v))
            worst = max(worst, rel_err(analytic, numeric, floor=_scale(grads[i])))
    return worst


def _stable_estimate(central: Sequence[float]) -> float:
    rich = [(4 * a - b) / 3 for a, b in zip(central[:-1], central[1:])]
    gaps = [abs(a - b) for a, b in zip(rich[:-1], rich[1:])]
    return rich[int(np.argmin(gaps))]


def check_parameters(output_fn: Callable[[], Tensor], params: Sequence[Parameter], *,
                     rng: np.random.Generator, directions: int = 1,
                     analytic: Callable[[np.ndarray], Mapping[str, np.ndarray]] | None = None,
                     ) -> dict[str, float]:
    """Per-parameter relative error of analytic vs numeric directional derivatives.

    ``output_fn`` must rebuild its output from the current parameter values.
    Central differences ``D(s)`` are taken on a doubling ladder of steps around
    ``h``, the dtype step widened to ``PROBE_CHANGE / |g|`` (at most
    ``MAX_STEP``) times the RMS scale.  Neighbouring pairs give Richardson
    estimates ``(4 D(s) - D(2s)) / 3``; the one closest to the next is kept,
    a choice made from the numeric side alone.

    ``analytic(cotangent)`` may supply the gradients under test instead of the
    taped ones, for instance a float32 model checked against differences of
    its float64 twin.  Parameter gradients are zeroed on return.
    """
    for p in params:
        p.zero_grad()
    with Tape(), recording() as log:
        y = output_fn()
        cot = rng.standard_normal(y.shape)
        backward(ops.sum(ops.mul(y, Tensor(cot.astype(y.dtype)))))
    grads = {p.name: p.grad.astype(np.float64).copy() for p in params}
    if analytic is not None:
        grads = {name: np.asarray(g, dtype=np.float64) for name, g in analytic(cot).items()}

    def at(p: Parameter, value: np.ndarray) -> float:
        p.assign(value.astype(p.dtype))
        with replaying(log):
            return _contract(output_fn(), cot)

    report: dict[str, float] = {}
    for p in params:
        worst = 0.0
        saved = p.data.copy()
        g = grads[p.name]
        base, _ = SETTINGS[np.dtype(p.dtype)]
        h = min(max(base, PROBE_CHANGE / _scale(g)), MAX_STEP) * _rms_scale(saved)
        ladder = h * LADDER
        try:
            for _ in range(directions):
                v = rng.standard_normal(p.shape)
                v /= max(np.sqrt(np.mean(v * v)), 1e-30)
                central = [(at(p, saved + s * v) - at(p, saved - s * v)) / (2 * s) for s in ladder]
                numeric = _stable_estimate(central)
                analytic = float(np.sum(g * v))
                worst = max(worst, rel_err(analytic, numeric, floor=_scale(g)))
        finally:
            p.assign(saved)
        report[p.name] = worst
    for p in params:
        p.zero_grad()
    return report
