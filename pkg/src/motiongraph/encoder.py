"""Shared per-frame image encoder and view alignment.

Stage ``m`` (1-based) halves the resolution with a stride-2 3×3 conv followed by
a stride-1 3×3 conv, each with a leaky ReLU.  ``align_views`` folds every stage
output down to the deepest grid with pixel unshuffle and projects it to a
common channel count with a 1×1 conv, giving one ``T×Hs×Ws×C`` map per view.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

from .errors import ConfigurationError, DimensionError
from .numerics import ops
from .numerics.tensor import Parameter, Tensor
from .params import ParamStore, conv


@dataclass(frozen=True)
class EncoderConfig:
    stages: int = 4
    base_channels: int = 16
    slope: float = 0.2
    view_channels: int = 16

    def grid(self, H: int, W: int) -> tuple[int, int]:
        """Patch grid ``(Hs, Ws)`` for an ``H×W`` frame."""
        f = 2 ** self.stages
        if H % f or W % f:
            raise ConfigurationError(f"frame {H}x{W} not divisible by 2^stages = {f}")
        return H // f, W // f


def init_encoder_params(store: ParamStore, cfg: EncoderConfig, in_channels: int = 3) -> None:
    c = cfg.base_channels
    for m in range(1, cfg.stages + 1):
        store.conv(f"encoder.stage{m}.conv1", c, in_channels if m == 1 else c, 3)
        store.conv(f"encoder.stage{m}.conv2", c, c, 3)
    for m in range(1, cfg.stages + 1):
        r = 2 ** (cfg.stages - m)
        store.conv(f"encoder.view{m}.proj", cfg.view_channels, c * r * r, 1)


def encode_frames(frames: Tensor, cfg: EncoderConfig,
                  params: Mapping[str, Parameter]) -> list[Tensor]:
    """Run the encoder on a ``T×H×W×3`` clip; returns ``M`` tensors of shape ``T×C×h×w``."""
    if frames.ndim != 4:
        raise DimensionError(f"expected T×H×W×C frames, got {frames.shape}")
    cfg.grid(frames.shape[1], frames.shape[2])
    x = ops.transpose(frames, (0, 3, 1, 2))
    outputs = []
    for m in range(1, cfg.stages + 1):
        x = ops.leaky_relu(conv(x, params, f"encoder.stage{m}.conv1", stride=2), cfg.slope)
        x = ops.leaky_relu(conv(x, params, f"encoder.stage{m}.conv2"), cfg.slope)
        outputs.append(x)
    return outputs


def encode_frame(frame: Tensor, cfg: EncoderConfig,
                 params: Mapping[str, Parameter]) -> list[Tensor]:
    """Single ``H×W×3`` frame; stage ``m`` output is ``C×(H/2^m)×(W/2^m)``."""
    outs = encode_frames(ops.reshape(frame, (1,) + frame.shape), cfg, params)
    return [ops.reshape(o, o.shape[1:]) for o in outs]


def align_views(stage_outputs: list[Tensor], cfg: EncoderConfig,
                params: Mapping[str, Parameter]) -> list[Tensor]:
    """Bring every stage to the deepest grid; returns ``M`` views of shape ``T×Hs×Ws×C_view``."""
    if len(stage_outputs) != cfg.stages:
        raise DimensionError(f"expected {cfg.stages} stage outputs, got {len(stage_outputs)}")
    Hs, Ws = stage_outputs[-1].shape[2:]
    views = []
    for m, x in enumerate(stage_outputs, start=1):
        r = 2 ** (cfg.stages - m)
        if x.shape[2:] != (Hs * r, Ws * r):
            raise DimensionError(f"stage {m} has extent {x.shape[2:]}, expected {(Hs * r, Ws * r)}")
        y = conv(ops.pixel_unshuffle(x, r), params, f"encoder.view{m}.proj", padding=0)
        views.append(ops.transpose(y, (0, 2, 3, 1)))
    return views


def receptive_interval(m: int, stages: int, patch: int) -> tuple[int, int]:
    """Inclusive input-pixel range (along one axis) that view ``m`` at grid index ``patch`` reads.

    Walks the stage stack backwards: a 3×3 conv with padding 1 and stride ``s``
    maps output range ``[a, b]`` to input range ``[s*a - 1, s*b + 1]``.
    """
    r = 2 ** (stages - m)
    lo, hi = patch * r, (patch + 1) * r - 1
    for _ in range(m):
        lo, hi = lo - 1, hi + 1        # stride-1 conv
        lo, hi = 2 * lo - 1, 2 * hi + 1  # stride-2 conv
    return lo, hi
