"""Storage of the motion graph against a dense all-pairs similarity matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..graph import HEADER_BYTES, MotionGraph, build_view_graph
from ..numerics.tensor import Tensor, no_grad


@dataclass
class BenchRow:
    Hs: int
    Ws: int
    graph_bytes: int
    dense_bytes: int

    @property
    def n(self) -> int:
        return self.Hs * self.Ws


@dataclass
class BenchReport:
    rows: list[BenchRow]
    slope_graph: float
    slope_dense: float

    def to_csv(self) -> str:
        lines = ["n,Hs,Ws,graph_bytes,dense_bytes"]
        lines += [f"{r.n},{r.Hs},{r.Ws},{r.graph_bytes},{r.dense_bytes}" for r in self.rows]
        lines.append(f"# slope_graph={self.slope_graph:.4f} slope_dense={self.slope_dense:.4f}")
        return "\n".join(lines) + "\n"


def loglog_slope(n: list[float], y: list[float]) -> float:
    if len(n) < 2:
        return math.nan
    return float(np.polyfit(np.log(n), np.log(y), 1)[0])


def parse_size(text: str) -> tuple[int, int]:
    """``"16x52"`` gives that grid; a bare node count must be a perfect square."""
    text = text.strip().lower()
    if "x" in text:
        a, b = text.split("x", 1)
        return int(a), int(b)
    n = int(text)
    side = math.isqrt(n)
    if side * side != n:
        raise ValueError(f"node count {n} is not a perfect square; use HsxWs")
    return side, side


def bench_memory(sizes: list[tuple[int, int]], T: int = 2, k: int = 4, channels: int = 8,
                 seed: int = 0, dtype=np.float32) -> BenchReport:
    """Byte counts of a real graph build and of a materialized frame-pair matrix per size.

    The dense side allocates the ``(T-1)`` all-pairs ``n×n`` similarity matrices;
    the graph side counts indices, weights and dynamic vectors of an actual
    build over random features plus a fixed header.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for Hs, Ws in sizes:
        n = Hs * Ws
        feats = rng.standard_normal((T, Hs, Ws, channels)).astype(dtype)
        if k == 0:
            graph_bytes = HEADER_BYTES
        else:
            with no_grad():
                graph_bytes = MotionGraph([build_view_graph(Tensor(feats), k)]).nbytes()
        flat = feats.reshape(T, n, channels)
        dense_bytes = 0
        for t in range(T - 1):
            dense = flat[t] @ flat[t + 1].T
            dense_bytes += dense.nbytes
            del dense
        rows.append(BenchRow(Hs, Ws, int(graph_bytes), int(dense_bytes)))
    ns = [r.n for r in rows]
    return BenchReport(rows, loglog_slope(ns, [r.graph_bytes for r in rows]),
                       loglog_slope(ns, [r.dense_bytes for r in rows]))
