"""Spatial/temporal message passing, the interaction rounds and view fusion.

Node features of one view travel as a ``T×Hs×Ws×d`` tensor.  Temporal passes
are pull-based: a node reads messages from its own neighbour table, so the
forward pass updates frames ``0..T-2`` from their successors and the backward
pass updates frames ``1..T-1`` from their predecessors.  Every block is
residual, so zero parameters give the identity.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from .errors import ConfigurationError, DimensionError
from .graph import ViewGraph
from .numerics import ops
from .numerics.tensor import Parameter, Tensor
from .params import ParamStore, conv, linear


def init_interaction_params(store: ParamStore, view: int, d: int, *,
                            spatial_mode: str = "conv") -> None:
    p = f"interaction.view{view}"
    if spatial_mode == "conv":
        store.conv(f"{p}.spatial", d, d, 3)
    else:
        store.linear(f"{p}.spatial_message", d + 3, d)
        store.linear(f"{p}.spatial_update", 2 * d, d)
    store.linear(f"{p}.message", d + 3, d)
    store.linear(f"{p}.update", 2 * d, d)


def _aggregate(v: Tensor, graph: ViewGraph, table: str, rows: slice, source_shift: int,
               params: Mapping[str, Parameter], msg: str, upd: str, slope: float) -> Tensor:
    """Updated features for frames ``rows`` pulling from frame ``t + source_shift``."""
    T, Hs, Ws, d = v.shape
    N = Hs * Ws
    idx = getattr(graph, f"{table}_idx")
    w = getattr(graph, f"{table}_w")
    frames = np.arange(T)[rows]
    flat = ops.reshape(v, (T * N, d))
    src = (frames + source_shift)[:, None, None] * N + idx
    neigh = ops.index(flat, src.reshape(-1))
    edge = ops.concat([Tensor._wrap(graph.offsets(table).astype(v.dtype)),
                       ops.reshape(w, w.shape + (1,))], axis=-1)
    edge = ops.reshape(edge, (-1, 3))
    m = ops.leaky_relu(linear(ops.concat([neigh, edge], axis=1), params, msg), slope)
    agg = ops.amax(ops.reshape(m, (len(frames) * N, graph.k, d)), axis=1)
    own = ops.reshape(v[rows], (len(frames) * N, d))
    out = ops.add(own, linear(ops.concat([own, agg], axis=1), params, upd))
    return ops.reshape(out, (len(frames), Hs, Ws, d))


def spatial_mp(v: Tensor, params: Mapping[str, Parameter], view: int, *, slope: float = 0.2,
               mode: str = "conv", graph: ViewGraph | None = None) -> Tensor:
    """``v + lrelu(conv3x3(v))`` per frame, or a message pass over the spatial table."""
    p = f"interaction.view{view}"
    if mode == "conv":
        x = ops.transpose(v, (0, 3, 1, 2))
        h = ops.leaky_relu(conv(x, params, f"{p}.spatial"), slope)
        return ops.add(v, ops.transpose(h, (0, 2, 3, 1)))
    if mode == "similarity":
        if graph is None or graph.spatial_idx is None:
            raise ConfigurationError("similarity spatial passing needs spatial edges")
        return _aggregate(v, graph, "spatial", slice(None), 0, params,
                          f"{p}.spatial_message", f"{p}.spatial_update", slope)
    raise ConfigurationError(f"unknown spatial_mode {mode!r}")


def temporal_mp(v: Tensor, graph: ViewGraph, direction: str, params: Mapping[str, Parameter],
                view: int, *, slope: float = 0.2) -> Tensor:
    """One temporal pass; the frame without a table in ``direction`` is returned unchanged."""
    p = f"interaction.view{view}"
    T = v.shape[0]
    if direction == "forward":
        moved = _aggregate(v, graph, "forward", slice(0, T - 1), 1, params,
                           f"{p}.message", f"{p}.update", slope)
        return ops.concat([moved, v[T - 1:]], axis=0)
    if direction == "backward":
        if graph.backward_idx is None:
            raise ConfigurationError("backward message passing needs backward edges")
        moved = _aggregate(v, graph, "backward", slice(1, T), -1, params,
                           f"{p}.message", f"{p}.update", slope)
        return ops.concat([v[:1], moved], axis=0)
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


def interact(v: Tensor, graph: ViewGraph, params: Mapping[str, Parameter], view: int, *,
             slope: float = 0.2, spatial_on: bool = True, backward_on: bool = True,
             spatial_mode: str = "conv", rounds: int | None = None,
             trace: list[str] | None = None) -> Tensor:
    """``T-1`` rounds of (spatial, forward, spatial, backward).

    ``rounds`` overrides the round count (instrumentation only).  Disabled
    blocks are skipped and do not appear in ``trace``.
    """
    T = v.shape[0]
    if T < 2:
        raise ConfigurationError(f"interaction needs T >= 2, got {T}")
    n = T - 1 if rounds is None else rounds
    steps = ["spatial", "forward", "spatial", "backward"]
    steps = [s for s in steps
             if (s != "spatial" or spatial_on) and (s != "backward" or backward_on)]
    for _ in range(n):
        for s in steps:
            if s == "spatial":
                v = spatial_mp(v, params, view, slope=slope, mode=spatial_mode, graph=graph)
            else:
                v = temporal_mp(v, graph, s, params, view, slope=slope)
            if trace is not None:
                trace.append(s)
    return v


def init_fusion_params(store: ParamStore, d_in: int, c_node: int) -> None:
    store.linear("fusion.fc1", d_in, c_node)
    store.linear("fusion.fc2", c_node, c_node)


def fuse_views(views: list[Tensor], params: Mapping[str, Parameter], *,
               slope: float = 0.2) -> Tensor:
    """Concatenate views on the channel axis, then a two-layer per-node MLP."""
    lead = views[0].shape[:3]
    for v in views[1:]:
        if v.shape[:3] != lead:
            raise DimensionError(f"views disagree on extent: {v.shape[:3]} vs {lead}")
    x = ops.concat(views, axis=-1) if len(views) > 1 else views[0]
    h = ops.leaky_relu(linear(x, params, "fusion.fc1"), slope)
    return linear(h, params, "fusion.fc2")
