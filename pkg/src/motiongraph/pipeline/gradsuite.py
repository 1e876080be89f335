"""Finite-difference suites over every differentiable op and the whole pipeline."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from .. import graph as graph_mod
from .. import interaction, warp
from ..numerics import ops
from ..numerics.gradcheck import check_function, check_parameters
from ..numerics.ops import conv2d, cosine_similarity_rows, leaky_relu, matmul, pixel_shuffle, \
    pixel_unshuffle
from ..numerics.tensor import Tape, Tensor, backward
from ..params import ParamStore
from .config import PipelineConfig, preset
from .model import forward, init_params

Case = tuple[Callable[..., Tensor], list[np.ndarray]]


def _store_inputs(store: ParamStore) -> tuple[list[str], list[np.ndarray]]:
    names = list(store)
    return names, [np.array(store[n].data) for n in names]


def _with_params(names: list[str], body: Callable[[dict, Tensor], Tensor]):
    """Wrap ``body(params, x)`` as ``fn(x, *param_values)`` for :func:`check_function`."""
    def fn(x, *values):
        return body(dict(zip(names, values)), x)
    return fn


def op_cases(rng: np.random.Generator, dtype) -> dict[str, Case]:
    """Inputs are drawn away from kinks (``sep``) wherever an op has one."""
    r = lambda *s: rng.standard_normal(s).astype(dtype)  # noqa: E731
    pos = lambda *s: (rng.random(s) + 0.5).astype(dtype)  # noqa: E731

    def sep(*s):
        # distinct values 0.3 apart and at least 0.075 away from 0
        n = int(np.prod(s))
        return ((rng.permutation(n) - n // 2 + 0.25) * 0.3).reshape(s).astype(dtype)

    idx = np.array([2, 0, 2, 1])
    cases: dict[str, Case] = {
        "add": (lambda a, b: ops.add(a, b), [r(3, 4), r(4)]),
        "sub": (lambda a, b: ops.sub(a, b), [r(3, 1), r(3, 4)]),
        "mul": (lambda a, b: ops.mul(a, b), [r(2, 3), r(2, 3)]),
        "div": (lambda a, b: ops.div(a, b), [r(2, 3), pos(2, 3)]),
        "exp": (lambda a: ops.exp(a), [r(5)]),
        "log": (lambda a: ops.log(a), [pos(5)]),
        "tanh": (lambda a: ops.tanh(a), [r(5)]),
        "abs": (lambda a: ops.absolute(a), [sep(6)]),
        "square": (lambda a: ops.square(a), [r(6)]),
        "leaky_relu": (lambda a: leaky_relu(a, 0.2), [sep(4, 3)]),
        "clamp_min": (lambda a: ops.clamp_min(a, 0.2), [sep(8)]),
        "where": (lambda a, b: ops.where(np.array([True, False, True]), a, b), [r(3), r(3)]),
        "sum": (lambda a: ops.sum(a, axis=1), [r(3, 4)]),
        "mean": (lambda a: ops.mean(a, axis=0, keepdims=True), [r(3, 4)]),
        "amax": (lambda a: ops.amax(a, axis=1), [sep(4, 5)]),
        "norm": (lambda a: ops.norm(a, axis=1), [r(4, 3)]),
        "reshape_transpose": (lambda a: ops.transpose(ops.reshape(a, (3, 2)), (1, 0)), [r(2, 3)]),
        "concat": (lambda a, b: ops.concat([a, b], axis=1), [r(2, 3), r(2, 2)]),
        "index": (lambda a: ops.concat([ops.reshape(a[idx], (16,)), ops.reshape(a[1:, ::2], (4,))]),
                  [r(3, 4)]),
        "scatter_add": (lambda a: ops.scatter_add(a, idx, 3), [r(4, 2)]),
        "matmul": (lambda a, b: matmul(a, b), [r(3, 4), r(4, 2)]),
        "conv2d": (lambda x, w, b: conv2d(x, w, b, stride=2, padding=1),
                   [r(2, 2, 5, 4), r(3, 2, 3, 3), r(3)]),
        "pixel_shuffle": (lambda a: pixel_shuffle(a, 2), [r(1, 4, 2, 3)]),
        "pixel_unshuffle": (lambda a: pixel_unshuffle(a, 2), [r(1, 2, 4, 2)]),
        "cosine_similarity_rows": (lambda a, b: cosine_similarity_rows(a, b), [r(3, 4), r(5, 4)]),
        "composite": (lambda a, b: ops.tanh(ops.mul(matmul(a, b), matmul(a, b)) * 0.1),
                      [r(3, 4), r(4, 2)]),
    }

    # sub-pixel targets: displacements away from integers, some landing off-canvas
    T, H, W, k = 2, 4, 5, 2
    frac = rng.uniform(0.2, 0.8, size=(T, H, W, k, 2)) + rng.integers(-2, 2, size=(T, H, W, k, 2))
    field = np.concatenate([frac, rng.standard_normal((T, H, W, k, 1))], axis=-1).astype(dtype)
    cases["forward_warp"] = (lambda P, f: warp.forward_warp(f, P, gamma=0.5),
                             [field, rng.random((T, H, W, 3)).astype(dtype)])

    store = ParamStore(seed=int(rng.integers(1 << 30)), dtype=dtype)
    warp.init_upsampler_params(store, 3, 2)
    warp.init_decoder_params(store, 3, 2)
    names, values = _store_inputs(store)
    cases["upsample_decode"] = (
        _with_params(names, lambda p, x: warp.decode_motion(
            warp.upsample_motion(x, p, 2), p, 2, max_disp=2.0)),
        [r(2, 2, 2, 3)] + values)

    store = ParamStore(seed=int(rng.integers(1 << 30)), dtype=dtype)
    graph_mod.init_node_params(store, 1, 4, 3)
    interaction.init_interaction_params(store, 1, 7)
    interaction.init_fusion_params(store, 7, 5)
    names, values = _store_inputs(store)

    def graph_block(p, view):
        g = graph_mod.build_view_graph(view, 2)
        v = graph_mod.init_node_features(g, p, 1)
        v = interaction.interact(v, g, p, 1)
        return interaction.fuse_views([v], p)

    cases["graph_interaction"] = (_with_params(names, graph_block), [r(3, 2, 3, 4)] + values)
    return cases


OPS = tuple(op_cases(np.random.default_rng(0), np.float64))


def run_op_suite(dtype, seed: int = 0, only: str | None = None) -> dict[str, float]:
    """Max relative error per op."""
    rng = np.random.default_rng(seed)
    cases = op_cases(rng, dtype)
    if only is not None:
        if only not in cases:
            raise KeyError(f"unknown op {only!r}; choose from {', '.join(cases)}")
        cases = {only: cases[only]}
    return {name: check_function(fn, inputs, rng=rng) for name, (fn, inputs) in cases.items()}


def gradcheck_config(dtype: str = "float64") -> PipelineConfig:
    """The 16×16 toy model, which the end-to-end check runs on by default."""
    return preset("toy").replace(dtype=dtype)


def _taped_gradients(frames: np.ndarray, params: ParamStore, cfg: PipelineConfig,
                     cotangent: np.ndarray) -> dict[str, np.ndarray]:
    for p in params.values():
        p.zero_grad()
    with Tape():
        y = forward(frames, params, cfg).prediction
        backward(ops.sum(ops.mul(y, Tensor(cotangent.astype(y.dtype)))))
    grads = {name: np.array(p.grad) for name, p in params.items()}
    for p in params.values():
        p.zero_grad()
    return grads


def run_pipeline_check(cfg: PipelineConfig, seed: int = 0) -> dict[str, float]:
    """Directional check of every parameter of the full model on a random clip.

    Float32 output round-off (about 1e-7) swamps the differences of weakly
    coupled parameters, so a float32 model is differenced through a float64
    twin holding the same values, and its own taped gradients are compared.
    """
    params = init_params(cfg)
    frames = np.random.default_rng(seed).random((cfg.T, cfg.H, cfg.W, 3))
    rng = np.random.default_rng(seed + 1)
    if cfg.np_dtype == np.float64:
        return check_parameters(lambda: forward(frames, params, cfg).prediction,
                                list(params.values()), rng=rng)
    twin_cfg = cfg.replace(dtype="float64")
    twin = init_params(twin_cfg)
    for name, p in params.items():
        twin[name].assign(p.data.astype(np.float64))
    low = frames.astype(cfg.np_dtype)
    return check_parameters(lambda: forward(frames, twin, twin_cfg).prediction,
                            list(twin.values()), rng=rng,
                            analytic=lambda cot: _taped_gradients(low, params, cfg, cot))
