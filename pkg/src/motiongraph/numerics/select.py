"""Deterministic top-k selection (descending score, ties by ascending index)."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def topk_desc(scores: Sequence[float], k: int) -> list[tuple[int, float]]:
    """Return the ``k`` best ``(index, score)`` pairs, best first.

    >>> topk_desc([0.1, 0.9, 0.5], 2)
    [(1, 0.9), (2, 0.5)]
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if k < 1 or k > scores.size:
        raise ValueError(f"k must lie in [1, {scores.size}], got {k}")
    idx = topk_rows(scores[None, :], k)[0]
    return [(int(i), float(scores[i])) for i in idx]


def topk_rows(scores: np.ndarray, k: int, exclude: np.ndarray | None = None) -> np.ndarray:
    """Row-wise top-k indices of a 2-d score matrix, shape ``rows×k``.

    ``exclude`` optionally gives one column per row that may not be selected
    (used to drop self-matches).  Ordering within a row is by descending score,
    ties broken by ascending column index.
    """
    scores = np.asarray(scores)
    if scores.ndim != 2:
        raise ValueError(f"topk_rows expects a 2-d array, got shape {scores.shape}")
    rows, cols = scores.shape
    avail = cols - (0 if exclude is None else 1)
    if k < 1 or k > avail:
        raise ValueError(f"k must lie in [1, {avail}], got {k}")
    work = scores.astype(np.float64, copy=True)
    if exclude is not None:
        work[np.arange(rows), exclude] = -np.inf
    if k == cols:
        chosen = np.broadcast_to(np.arange(cols), (rows, cols))
    else:
        # kth largest value per row; everything strictly above it is in, and the
        # remaining slots go to the lowest-index entries equal to it.
        kth = -np.partition(-work, k - 1, axis=1)[:, k - 1:k]
        above = work > kth
        tied = work == kth
        need = k - above.sum(axis=1, keepdims=True)
        take = above | (tied & (np.cumsum(tied, axis=1) <= need))
        chosen = np.nonzero(take)[1].reshape(rows, k)
    picked = np.take_along_axis(work, chosen, axis=1)
    # chosen is ascending within each row, so a stable sort keeps tied indices ordered
    order = np.argsort(-picked, axis=1, kind="stable")
    return np.take_along_axis(chosen, order, axis=1)
