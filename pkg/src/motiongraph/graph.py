"""Multi-view motion graph over patch nodes.

Node ``i`` of a ``T×Hs×Ws`` grid sits in frame ``t = i // (Hs*Ws)`` at row
``y`` and column ``x``; within a frame the local index is ``y*Ws + x``.  All
neighbour tables store local indices of the neighbouring frame.

Per view and per adjacent frame pair only one ``N×N`` similarity matrix is
alive at a time; what persists is ``k`` (index, weight) entries per node and
table.  Weights are gathered from the similarity tensor, so they stay
differentiable with respect to the encoder features.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError
from .numerics import ops
from .numerics.ops import cosine_similarity_rows
from .numerics.branches import branch
from .numerics.select import topk_rows
from .numerics.tensor import Parameter, Tensor
from .params import ParamStore, linear

HEADER_BYTES = 64  # fixed per-graph bookkeeping charged by the memory benchmark


def default_k(Hs: int, Ws: int) -> int:
    """``min(10, round(0.01 * Hs * Ws))``, at least 1."""
    return max(1, min(10, round(0.01 * Hs * Ws)))


def grid_coords(Hs: int, Ws: int) -> tuple[np.ndarray, np.ndarray]:
    local = np.arange(Hs * Ws)
    return local % Ws, local // Ws


@dataclass
class ViewGraph:
    """Neighbour tables of one view.

    ``forward_idx[t]`` (frames ``0..T-2``) points into frame ``t+1``;
    ``backward_idx[t-1]`` (frames ``1..T-1``) points into frame ``t-1``;
    ``spatial_idx[t]`` points into frame ``t`` and never at the node itself.
    ``dynamic`` is ``T×N×k×3`` with rows ``(dx, dy, w)``; the last frame is zero.
    Disabled tables are ``None``.
    """

    T: int
    Hs: int
    Ws: int
    k: int
    dynamic: Tensor
    forward_idx: np.ndarray
    forward_w: Tensor
    backward_idx: np.ndarray | None = None
    backward_w: Tensor | None = None
    spatial_idx: np.ndarray | None = None
    spatial_w: Tensor | None = None

    @property
    def nodes_per_frame(self) -> int:
        return self.Hs * self.Ws

    def offsets(self, table: str) -> np.ndarray:
        """``(dx, dy)`` from each node to its neighbours, shape ``rows×N×k×2``, patch units."""
        idx = getattr(self, f"{table}_idx")
        xs, ys = grid_coords(self.Hs, self.Ws)
        local = np.arange(self.nodes_per_frame)[:, None]
        offsets = np.stack([xs[idx] - xs[local], ys[idx] - ys[local]], axis=-1)
        return offsets.astype(self.forward_w.dtype)

    def edge_count(self) -> int:
        return sum(0 if idx is None else idx.size
                   for idx in (self.forward_idx, self.backward_idx, self.spatial_idx))

    def nbytes(self) -> int:
        """Bytes held by neighbour indices, weights and dynamic vectors."""
        total = self.dynamic.data.nbytes
        for idx, w in ((self.forward_idx, self.forward_w), (self.backward_idx, self.backward_w),
                       (self.spatial_idx, self.spatial_w)):
            if idx is not None:
                total += idx.nbytes + w.data.nbytes
        return total


@dataclass
class MotionGraph:
    views: list[ViewGraph]

    @property
    def T(self) -> int:
        return self.views[0].T

    @property
    def Hs(self) -> int:
        return self.views[0].Hs

    @property
    def Ws(self) -> int:
        return self.views[0].Ws

    @property
    def k(self) -> int:
        return self.views[0].k

    def nbytes(self) -> int:
        return HEADER_BYTES + sum(v.nbytes() for v in self.views)


def _flat(view: Tensor) -> Tensor:
    if view.ndim != 4:
        raise DimensionError(f"expected a T×Hs×Ws×C view, got {view.shape}")
    T, Hs, Ws, C = view.shape
    return ops.reshape(view, (T, Hs * Ws, C))


def frame_pair_similarity(view: Tensor, t: int, eps: float = 1e-8) -> Tensor:
    """Cosine similarity between frame ``t`` and frame ``t+1`` patch features, ``N×N``."""
    T = view.shape[0]
    if not 0 <= t < T - 1:
        raise ValueError(f"frame pair index {t} outside [0, {T - 2}]")
    flat = _flat(view)
    return cosine_similarity_rows(flat[t], flat[t + 1], eps)


def _gather(S: Tensor, idx: np.ndarray, transpose: bool = False) -> Tensor:
    rows = np.arange(idx.shape[0])[:, None]
    return ops.index(S, (idx, rows) if transpose else (rows, idx))


def build_view_graph(view: Tensor, k: int, *, eps: float = 1e-8, backward: bool = True,
                     spatial: bool = True) -> ViewGraph:
    """Dynamic vectors and forward/backward/spatial tables for one view."""
    flat = _flat(view)
    T, N, _ = flat.shape
    Hs, Ws = view.shape[1:3]
    if T < 2:
        raise ValueError("a motion graph needs at least two frames")
    if not 1 <= k <= N - 1:
        raise ValueError(f"k must lie in [1, {N - 1}] for a {Hs}x{Ws} grid, got {k}")
    if not np.isfinite(view.data).all():
        raise InputError("view features contain non-finite values")
    f_idx, f_w, b_idx, b_w = [], [], [], []
    for t in range(T - 1):
        S = cosine_similarity_rows(flat[t], flat[t + 1], eps)
        idx = branch(topk_rows(S.data, k))
        f_idx.append(idx)
        f_w.append(_gather(S, idx))
        if backward:
            idx = branch(topk_rows(S.data.T, k))
            b_idx.append(idx)
            b_w.append(_gather(S, idx, transpose=True))
    s_idx, s_w = [], []
    if spatial:
        self_idx = np.arange(N)
        for t in range(T):
            S = cosine_similarity_rows(flat[t], flat[t], eps)
            idx = branch(topk_rows(S.data, k, exclude=self_idx))
            s_idx.append(idx)
            s_w.append(_gather(S, idx))

    g = ViewGraph(T, Hs, Ws, k, dynamic=None, forward_idx=np.stack(f_idx),  # type: ignore[arg-type]
                  forward_w=ops.stack(f_w))
    if backward:
        g.backward_idx, g.backward_w = np.stack(b_idx), ops.stack(b_w)
    if spatial:
        g.spatial_idx, g.spatial_w = np.stack(s_idx), ops.stack(s_w)
    moving = ops.concat([Tensor._wrap(g.offsets("forward")),
                         ops.reshape(g.forward_w, g.forward_w.shape + (1,))], axis=-1)
    still = Tensor._wrap(np.zeros((1, N, k, 3), dtype=moving.dtype))
    g.dynamic = ops.concat([moving, still], axis=0)
    return g


def init_dynamic_vectors(view: Tensor, K: int, eps: float = 1e-8) -> Tensor:
    """``T×N×K×3`` dynamic vectors ``(dx, dy, w)``; zero rows for the last frame."""
    N = view.shape[1] * view.shape[2]
    if not 1 <= K <= N:
        raise ValueError(f"K must lie in [1, {N}], got {K}")
    flat = _flat(view)
    T = flat.shape[0]
    xs, ys = grid_coords(*view.shape[1:3])
    local = np.arange(N)[:, None]
    rows = []
    for t in range(T - 1):
        S = cosine_similarity_rows(flat[t], flat[t + 1], eps)
        idx = branch(topk_rows(S.data, K))
        d = np.stack([xs[idx] - xs[local], ys[idx] - ys[local]], axis=-1).astype(view.dtype)
        w = _gather(S, idx)
        rows.append(ops.concat([Tensor._wrap(d), ops.reshape(w, w.shape + (1,))], axis=-1))
    rows.append(Tensor._wrap(np.zeros((1, N, K, 3), dtype=view.dtype)))
    return ops.concat([ops.stack(rows[:-1]), rows[-1]], axis=0)


def build_edges(view: Tensor, k: int, eps: float = 1e-8) -> ViewGraph:
    return build_view_graph(view, k, eps=eps)


def build_graph(views: list[Tensor], k: int, *, eps: float = 1e-8, backward: bool = True,
                spatial: bool = True) -> MotionGraph:
    return MotionGraph([build_view_graph(v, k, eps=eps, backward=backward, spatial=spatial)
                        for v in views])


# -- node features ------------------------------------------------------------------

def init_node_params(store: ParamStore, view: int, d_tf: int, d_lf: int,
                     location: bool = True) -> None:
    store.linear(f"graph.view{view}.tdc.fc1", 3, d_tf)
    store.linear(f"graph.view{view}.tdc.fc2", d_tf, d_tf)
    if location:
        store.linear(f"graph.view{view}.loc.fc1", 2, d_lf)
        store.linear(f"graph.view{view}.loc.fc2", d_lf, d_lf)


def tendency_feature(dynamic: Tensor, params: Mapping[str, Parameter], prefix: str,
                     slope: float = 0.2) -> Tensor:
    """Per-triplet MLP followed by a max over the ``K`` axis (second to last)."""
    h = ops.leaky_relu(linear(dynamic, params, f"{prefix}.fc1"), slope)
    return ops.amax(linear(h, params, f"{prefix}.fc2"), axis=-2)


def location_feature(x: np.ndarray, y: np.ndarray, Hs: int, Ws: int,
                     params: Mapping[str, Parameter], prefix: str, slope: float = 0.2) -> Tensor:
    """MLP over ``(x/Ws, y/Hs)``; one row per coordinate pair."""
    dtype = params[f"{prefix}.fc1.weight"].dtype
    coords = np.stack([np.asarray(x) / Ws, np.asarray(y) / Hs], axis=-1).astype(dtype)
    h = ops.leaky_relu(linear(Tensor._wrap(coords.reshape(-1, 2)), params, f"{prefix}.fc1"), slope)
    return linear(h, params, f"{prefix}.fc2")


def init_node_features(graph: ViewGraph, params: Mapping[str, Parameter], view: int, *,
                       location: bool = True, slope: float = 0.2) -> Tensor:
    """``T×Hs×Ws×(d_lf + d_tf)`` features laid out as ``[location | tendency]``."""
    T, Hs, Ws = graph.T, graph.Hs, graph.Ws
    tend = tendency_feature(graph.dynamic, params, f"graph.view{view}.tdc", slope)
    if location:
        xs, ys = grid_coords(Hs, Ws)
        loc = location_feature(xs, ys, Hs, Ws, params, f"graph.view{view}.loc", slope)
        tend = ops.concat([ops.stack([loc] * T), tend], axis=-1)
    return ops.reshape(tend, (T, Hs, Ws, tend.shape[-1]))


# -- text dump ----------------------------------------------------------------------

def iter_edges(graph: MotionGraph) -> Iterator[tuple[int, str, int, int, float]]:
    """``(view, type, src, dst, weight)`` with global node ids; views are 1-based."""
    N = graph.Hs * graph.Ws
    for m, g in enumerate(graph.views, start=1):
        tables = (("S", g.spatial_idx, g.spatial_w, 0, 0),
                  ("B", g.backward_idx, g.backward_w, 1, -1),
                  ("F", g.forward_idx, g.forward_w, 0, 1))
        for kind, idx, w, first, step in tables:
            if idx is None:
                continue
            for r in range(idx.shape[0]):
                t = r + first
                for i in range(N):
                    for j in range(g.k):
                        yield (m, kind, t * N + i, (t + step) * N + int(idx[r, i, j]),
                               float(w.data[r, i, j]))


def dump_graph(graph: MotionGraph) -> str:
    lines = [f"# motiongraph T={graph.T} Hs={graph.Hs} Ws={graph.Ws} k={graph.k} "
             f"views={len(graph.views)}"]
    lines += [f"view {m} type {kind} {src} {dst} {w:.9g}"
              for m, kind, src, dst, w in iter_edges(graph)]
    return "\n".join(lines) + "\n"
