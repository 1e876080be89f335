"""Training loop: sample a window, predict the next frame, AdamW step."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, InputError
from ..numerics.optim import OptimizerState, adamw_step
from ..numerics.tensor import Tape, backward, zero_grads
from ..params import ParamStore
from .config import PipelineConfig
from .metrics import loss as loss_fn
from .model import forward, init_params
from .synthetic import SyntheticScene


@dataclass
class TrainResult:
    params: ParamStore
    history: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)


def windows(scenes: Sequence[SyntheticScene], T: int) -> list[tuple[int, int]]:
    """All ``(scene, start)`` pairs with ``T`` inputs and one target frame."""
    out = [(i, s) for i, sc in enumerate(scenes) for s in range(sc.T - T)]
    if not out:
        raise ValueError(f"no scene has the {T + 1} frames needed for a training window")
    return out


def _first_bad_group(params: ParamStore) -> str | None:
    """Group of the first parameter, in pipeline order, with a non-finite value or gradient."""
    for name, p in params.items():
        if not np.isfinite(p.data).all() or (p.grad is not None and not np.isfinite(p.grad).all()):
            return name.split(".", 1)[0]
    return None


def train(scenes: Sequence[SyntheticScene], cfg: PipelineConfig, steps: int, *,
          params: ParamStore | None = None, base_lr: float = 1e-3, final_lr: float = 1e-5,
          weight_decay: float = 1e-2,
          callback: Callable[[int, float], None] | None = None) -> TrainResult:
    """Run ``steps`` optimizer steps; windows are drawn with ``cfg.seed``.

    A non-finite loss, gradient or parameter raises :class:`DivergenceError`
    naming the first parameter group that is not finite.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    cfg.validate()
    params = params if params is not None else init_params(cfg)
    pool = windows(scenes, cfg.T)
    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState(total_steps=steps, base_lr=base_lr, final_lr=final_lr,
                           weight_decay=weight_decay)
    plist = list(params.values())
    result = TrainResult(params)
    zero_grads(plist)
    for step in range(steps):
        scene_idx, start = pool[int(rng.integers(len(pool)))]
        clip = scenes[scene_idx].frames[start:start + cfg.T + 1].astype(cfg.np_dtype)
        try:
            with Tape():
                out = forward(clip[:cfg.T], params, cfg)
                value = loss_fn(out.prediction, clip[cfg.T], cfg.loss)
                backward(value)
        except InputError as exc:
            bad = _first_bad_group(params)
            if bad is None:
                raise
            raise DivergenceError(f"step {step}: {exc}; first non-finite parameter group {bad}",
                                  group=bad) from exc
        v = value.item()
        bad = _first_bad_group(params)
        if bad is not None or not np.isfinite(v):
            raise DivergenceError(f"step {step}: loss {v}; first non-finite "
                                  f"parameter group {bad or 'none'}", group=bad)
        result.learning_rates.append(adamw_step(plist, state))
        zero_grads(plist)
        result.history.append(v)
        if callback is not None:
            callback(step, v)
    return result


def smoothed(history: Sequence[float], window: int = 20) -> np.ndarray:
    """Trailing moving average (shorter at the start)."""
    h = np.asarray(history, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(h)])
    idx = np.arange(1, h.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)
