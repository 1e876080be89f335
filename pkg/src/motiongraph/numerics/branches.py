"""Record and replay the discrete decisions of a forward pass.

The model is piecewise smooth: leaky-ReLU branches, argmax positions, top-k
selections and splat cell indices switch discontinuously.  Ops that make such
a decision pass it through :func:`branch`.  Inside :func:`recording` the
decisions are logged in order; inside :func:`replaying` the same sequence is
handed back, so re-evaluations at nearby points stay on the smooth piece that
contains the recorded point.  Outside both contexts :func:`branch` is the
identity.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import StateError


@dataclass
class BranchLog:
    decisions: list[np.ndarray] = field(default_factory=list)
    replay: bool = False
    cursor: int = 0


_active: list[BranchLog] = []


def branch(decision: np.ndarray) -> np.ndarray:
    if not _active:
        return decision
    log = _active[-1]
    if not log.replay:
        log.decisions.append(np.array(decision, copy=True))
        return decision
    if log.cursor >= len(log.decisions):
        raise StateError("replayed forward pass made more decisions than the recorded one")
    saved = log.decisions[log.cursor]
    log.cursor += 1
    if saved.shape != np.shape(decision):
        raise StateError(f"replayed decision has shape {np.shape(decision)}, "
                         f"recorded {saved.shape}")
    return saved


@contextlib.contextmanager
def recording():
    log = BranchLog()
    _active.append(log)
    try:
        yield log
    finally:
        _active.remove(log)


@contextlib.contextmanager
def replaying(log: BranchLog):
    log.replay = True
    log.cursor = 0
    _active.append(log)
    try:
        yield log
    finally:
        _active.remove(log)
        if log.cursor != len(log.decisions):
            raise StateError(f"replay consumed {log.cursor} of {len(log.decisions)} decisions")
