"""Brute-force references for similarity and neighbour-table construction."""

import itertools
import math

import numpy as np

from motiongraph.graph import build_view_graph, grid_coords
from motiongraph.numerics.tensor import Tensor


def cosine_oracle(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (max(na, 1e-8) * max(nb, 1e-8))


def similarity_oracle(fa, fb):
    return np.array([[cosine_oracle(a, b) for b in fb] for a in fa])


def subset_oracle(S, k, exclude=None):
    """Best k-subset of every row by exhaustive enumeration.

    Among subsets whose summed similarity is maximal (up to 1e-12), the
    lexicographically smallest index tuple wins; members are listed by
    descending similarity, equal values by ascending index.
    """
    rows, cols = S.shape
    out = np.empty((rows, k), dtype=np.int64)
    for i in range(rows):
        cand = [j for j in range(cols) if exclude is None or j != exclude[i]]
        best, best_sum = None, -np.inf
        for sub in itertools.combinations(cand, k):
            total = sum(S[i, j] for j in sub)
            if total > best_sum + 1e-12:
                best, best_sum = sub, total
        out[i] = sorted(best, key=lambda j: (-round(S[i, j], 12), j))
    return out


def random_view(rng, T=3, Hs=4, Ws=4, C=5, ties=False):
    if ties:
        protos = rng.integers(-2, 3, size=(3, C)).astype(np.float64)
        protos[np.abs(protos).sum(axis=1) == 0, 0] = 1.0
        return protos[rng.integers(0, 3, size=(T, Hs, Ws))]
    return rng.standard_normal((T, Hs, Ws, C))


def check_against_oracle(view, k):
    T, Hs, Ws, C = view.shape
    N = Hs * Ws
    flat = view.reshape(T, N, C)
    g = build_view_graph(Tensor(view), k)
    xs, ys = grid_coords(Hs, Ws)
    for t in range(T - 1):
        S = similarity_oracle(flat[t], flat[t + 1])
        fwd = subset_oracle(S, k)
        np.testing.assert_array_equal(g.forward_idx[t], fwd)
        np.testing.assert_allclose(g.forward_w.data[t], np.take_along_axis(S, fwd, 1), atol=1e-12)
        np.testing.assert_array_equal(g.backward_idx[t], subset_oracle(S.T, k))
        dyn = g.dynamic.data[t]
        np.testing.assert_array_equal(dyn[..., 0], xs[fwd] - xs[:, None])
        np.testing.assert_array_equal(dyn[..., 1], ys[fwd] - ys[:, None])
    for t in range(T):
        S = similarity_oracle(flat[t], flat[t])
        np.testing.assert_array_equal(g.spatial_idx[t], subset_oracle(S, k, exclude=np.arange(N)))
    assert not g.dynamic.data[T - 1].any()
