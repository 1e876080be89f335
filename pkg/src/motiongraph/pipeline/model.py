"""End-to-end model: encoder, graph, interaction, fusion, upsampler, decoder, warp."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from ..encoder import align_views, encode_frames, init_encoder_params
from ..errors import DimensionError
from ..graph import MotionGraph, build_graph, init_node_features, init_node_params
from ..interaction import fuse_views, init_fusion_params, init_interaction_params, interact
from ..numerics.tensor import Parameter, Tensor, as_tensor, no_grad
from ..params import ParamStore
from ..warp import decode_motion, forward_warp, init_decoder_params, init_upsampler_params, \
    upsample_motion
from .config import PipelineConfig


def init_params(cfg: PipelineConfig) -> ParamStore:
    """Seeded parameters for every module, created in pipeline order."""
    cfg.validate()
    store = ParamStore(seed=cfg.seed, dtype=cfg.np_dtype)
    init_encoder_params(store, cfg.encoder())
    for m in range(1, cfg.M + 1):
        init_node_params(store, m, cfg.d_tf, cfg.d_lf, location=cfg.location_feature_on)
    for m in range(1, cfg.M + 1):
        init_interaction_params(store, m, cfg.d_node, spatial_mode=cfg.spatial_mode)
    init_fusion_params(store, cfg.M * cfg.d_node, cfg.c_node)
    init_upsampler_params(store, cfg.c_node, cfg.M)
    init_decoder_params(store, cfg.c_node, cfg.k_out)
    return store


@dataclass
class ForwardResult:
    prediction: Tensor      # H×W×3
    field: Tensor           # T×H×W×k_decode×3
    graph: MotionGraph
    trace: list[str]
    features: list[Tensor]  # per view, T×Hs×Ws×d_node after interaction


def forward(frames, params: Mapping[str, Parameter], cfg: PipelineConfig) -> ForwardResult:
    """Predict the frame after a ``T×H×W×3`` clip."""
    frames = as_tensor(frames, like=next(iter(params.values())))
    if frames.shape != (cfg.T, cfg.H, cfg.W, 3):
        raise DimensionError(
            f"expected frames of shape {(cfg.T, cfg.H, cfg.W, 3)}, got {frames.shape}")
    enc = cfg.encoder()
    views = align_views(encode_frames(frames, enc, params), enc, params)
    graph = build_graph(views, cfg.k_graph, backward=cfg.backward_on, spatial=cfg.spatial_on)
    trace: list[str] = []
    states = []
    for m, g in enumerate(graph.views, start=1):
        v = init_node_features(g, params, m, location=cfg.location_feature_on, slope=cfg.slope)
        states.append(interact(v, g, params, m, slope=cfg.slope, spatial_on=cfg.spatial_on,
                               backward_on=cfg.backward_on, spatial_mode=cfg.spatial_mode,
                               trace=trace))
    fused = fuse_views(states, params, slope=cfg.slope)
    sr = upsample_motion(fused, params, cfg.M, slope=cfg.slope, bypass=cfg.bypass,
                         size=(cfg.H, cfg.W))
    field = decode_motion(sr, params, cfg.k_out, cfg.displacement_bound)
    pred = forward_warp(frames, field, gamma=cfg.gamma, eps=cfg.eps)
    return ForwardResult(pred, field, graph, trace, states)


class Model:
    """Config plus parameters, with a gradient-free prediction helper."""

    def __init__(self, cfg: PipelineConfig, params: ParamStore | None = None):
        self.cfg = cfg.validate()
        self.params = params if params is not None else init_params(cfg)

    def __call__(self, frames) -> ForwardResult:
        return forward(frames, self.params, self.cfg)

    def predict(self, frames: np.ndarray) -> np.ndarray:
        with no_grad():
            return np.array(forward(frames, self.params, self.cfg).prediction.data)

    def parameter_counts(self) -> dict[str, int]:
        return self.params.group_counts()

    def parameter_count(self) -> int:
        return self.params.count()


def summary(cfg: PipelineConfig) -> str:
    """Human-readable parameter report."""
    model = Model(cfg)
    Hs, Ws = cfg.grid
    lines = [f"grid {Hs}x{Ws}  k={cfg.k_graph}  k_decode={cfg.k_out}  views={cfg.M}  "
             f"d_node={cfg.d_node}  C_node={cfg.c_node}"]
    for name, n in model.parameter_counts().items():
        lines.append(f"{name:<12} {n:>10,}")
    lines.append(f"{'total':<12} {model.parameter_count():>10,}")
    return "\n".join(lines)
