"""What the motion graph stores.

Two frames of random patch features, the second a shifted copy of the first.
Each node keeps its k most similar patches in the next frame, and the offset
to the best one recovers the shift away from the wrapped border.  The memory
report then compares the graph with a dense all-pairs similarity matrix.

    python demos/graph_walkthrough.py
"""

import numpy as np

from motiongraph.graph import build_view_graph, default_k
from motiongraph.numerics import no_grad
from motiongraph.numerics.tensor import Tensor
from motiongraph.pipeline.bench import bench_memory

rng = np.random.default_rng(0)
Hs, Ws, C = 8, 10, 16
first = rng.standard_normal((Hs, Ws, C))
shift = (2, 1)                                   # (dx, dy) in patches
second = np.roll(first, shift=(shift[1], shift[0]), axis=(0, 1))

with no_grad():
    g = build_view_graph(Tensor(np.stack([first, second])), k=4)

best = g.dynamic.data[0, :, 0, :2].reshape(Hs, Ws, 2)    # offset to the top match
inside = best[:Hs - shift[1], :Ws - shift[0]].reshape(-1, 2)
print(f"k = {g.k}; top-match offsets away from the border: "
      f"{sorted({tuple(int(v) for v in o) for o in inside})}")
print(f"similarity of the top match, mean over nodes: {g.forward_w.data[0, :, 0].mean():.3f}")

print(f"default k: 32x32 grid -> {default_k(32, 32)}, 16x52 grid -> {default_k(16, 52)}")

report = bench_memory([(16, 16), (32, 32), (64, 64)])
print(report.to_csv(), end="")
