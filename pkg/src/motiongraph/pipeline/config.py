"""Pipeline configuration, presets and the ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields

import numpy as np

from ..encoder import EncoderConfig
from ..errors import ConfigurationError
from ..graph import default_k


@dataclass
class PipelineConfig:
    """Every knob of the model, the warper and training.

    ``None`` for ``k``, ``k_decode``, ``C_node`` and ``max_disp`` means "derive":
    ``k = min(10, round(0.01*Hs*Ws))``, ``k_decode = k``, ``C_node = d_lf + d_tf``
    and ``max_disp = max(H, W) / 8``.
    """

    H: int = 512
    W: int = 512
    T: int = 4
    T_out: int = 1
    M: int = 4
    k: int | None = None
    k_decode: int | None = None
    d_tf: int = 16
    d_lf: int = 4
    C_img: int = 16
    C_node: int | None = None
    view_channels: int = 16
    slope: float = 0.2
    max_disp: float | None = None
    gamma: float = 0.5
    eps: float = 1e-6
    loss: str = "mse"
    spatial_on: bool = True
    backward_on: bool = True
    location_feature_on: bool = True
    spatial_mode: str = "conv"
    bypass: bool = True
    dtype: str = "float32"
    seed: int = 0

    # -- derived values --------------------------------------------------------------
    @property
    def grid(self) -> tuple[int, int]:
        f = 2 ** self.M
        return self.H // f, self.W // f

    @property
    def k_graph(self) -> int:
        return self.k if self.k is not None else default_k(*self.grid)

    @property
    def k_out(self) -> int:
        return self.k_decode if self.k_decode is not None else self.k_graph

    @property
    def d_node(self) -> int:
        return self.d_tf + (self.d_lf if self.location_feature_on else 0)

    @property
    def c_node(self) -> int:
        return self.C_node if self.C_node is not None else self.d_lf + self.d_tf

    @property
    def displacement_bound(self) -> float:
        return float(self.max_disp) if self.max_disp is not None else max(self.H, self.W) / 8

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(stages=self.M, base_channels=self.C_img, slope=self.slope,
                             view_channels=self.view_channels)

    def validate(self) -> "PipelineConfig":
        positive = ("H", "W", "T", "T_out", "M", "d_tf", "d_lf", "C_img", "view_channels")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.T < 2:
            raise ConfigurationError(f"T must be >= 2, got {self.T}")
        f = 2 ** self.M
        if self.H % f or self.W % f:
            raise ConfigurationError(f"H={self.H}, W={self.W} must be divisible by 2^M = {f}")
        Hs, Ws = self.grid
        if not 1 <= self.k_graph <= Hs * Ws - 1:
            raise ConfigurationError(f"k={self.k_graph} must lie in [1, {Hs * Ws - 1}] for a "
                                     f"{Hs}x{Ws} patch grid")
        if self.k_out < 1:
            raise ConfigurationError(f"k_decode must be >= 1, got {self.k_out}")
        if self.C_node is not None and self.C_node < 1:
            raise ConfigurationError(f"C_node must be >= 1, got {self.C_node}")
        if not 0.0 < self.slope < 1.0:
            raise ConfigurationError(f"slope must lie in (0, 1), got {self.slope}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.eps <= 0 or self.displacement_bound <= 0:
            raise ConfigurationError("eps and max_disp must be positive")
        if self.loss not in ("mse", "l1"):
            raise ConfigurationError(f"loss must be 'mse' or 'l1', got {self.loss!r}")
        if self.spatial_mode not in ("conv", "similarity"):
            raise ConfigurationError(f"spatial_mode must be 'conv' or 'similarity', "
                                     f"got {self.spatial_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.T_out != 1:
            raise ConfigurationError("T_out must be 1; longer horizons use rollout")
        return self

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS = {
    "ucf": PipelineConfig(),
    "kitti": PipelineConfig(H=256, W=832, T=2, d_tf=32, loss="l1"),
    "cityscapes": PipelineConfig(H=512, W=1024, T=2, d_tf=32, loss="l1"),
    # desk-scale settings used by the tests and the training smoke run
    "toy": PipelineConfig(H=16, W=16, T=4, M=2, k=4, C_img=8, view_channels=8, d_tf=8,
                          d_lf=4, dtype="float64"),
}


def preset(name: str) -> PipelineConfig:
    try:
        return dataclasses.replace(PRESETS[name])
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _parse_value(name: str, typ: str, text: str):
    if text.lower() in ("none", "") and "None" in typ:
        return None
    try:
        if typ.startswith("bool"):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ.startswith("int"):
            return int(text)
        if typ.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {text!r} (expected {typ})") from None
    return text


def parse_config(text: str, base: PipelineConfig | None = None,
                 source: str = "<config>") -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors.

    The special key ``preset`` (first, if present) selects the starting values.
    """
    types = {f.name: str(f.type) for f in fields(PipelineConfig)}
    cfg = dataclasses.replace(base) if base is not None else PipelineConfig()
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            if changes:
                raise ConfigurationError(f"{source}:{lineno}: 'preset' must come before other keys")
            cfg = preset(value)
            continue
        if key not in types:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        changes[key] = _parse_value(key, types[key], value)
    return dataclasses.replace(cfg, **changes).validate()


def load_config(path: str | os.PathLike) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
