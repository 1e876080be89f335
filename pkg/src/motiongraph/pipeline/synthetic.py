"""Synthetic moving-sprite clips with analytic motion.

Sprites are axis-aligned squares or discs moving at constant integer or
half-integer velocity over a static background.  They are drawn in list order,
so a later sprite covers an earlier one.  Rendering uses 2×2 supersampling,
which makes half-pixel edges exact.

Scene specs are plain dicts (the CLI reads them from JSON)::

    {"height": 16, "width": 16, "frames": 5, "seed": 0,
     "background": "checker" | "constant" | "noise" | "smooth",
     "background_color": [r, g, b],
     "sprites": [{"shape": "square", "size": 4, "color": [1, 0, 0],
                  "position": [x, y], "velocity": [vx, vy]}]}

``position`` is the top-left corner of a square or the centre of a disc.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError
from ..numerics.tensor import Tensor

SS = 2  # supersampling factor
ORACLE_LOGIT = 30.0


@dataclass(frozen=True)
class Sprite:
    shape: str
    size: float
    color: tuple[float, float, float]
    position: tuple[float, float]
    velocity: tuple[float, float]

    def coverage(self, t: float, H: int, W: int) -> np.ndarray:
        """Fraction of each pixel covered at time ``t``."""
        px = self.position[0] + t * self.velocity[0]
        py = self.position[1] + t * self.velocity[1]
        ys = (np.arange(H * SS) + 0.5) / SS
        xs = (np.arange(W * SS) + 0.5) / SS
        if self.shape == "square":
            inside = ((ys >= py) & (ys < py + self.size))[:, None] & \
                     ((xs >= px) & (xs < px + self.size))[None, :]
        else:
            r = self.size / 2
            inside = (xs[None, :] - px) ** 2 + (ys[:, None] - py) ** 2 <= r * r
        return inside.reshape(H, SS, W, SS).mean(axis=(1, 3))

    def bounds(self) -> tuple[float, float, float, float]:
        """``(x0, y0, x1, y1)`` extent at ``t = 0``."""
        x, y = self.position
        if self.shape == "square":
            return x, y, x + self.size, y + self.size
        r = self.size / 2
        return x - r, y - r, x + r, y + r


@dataclass
class SyntheticScene:
    height: int
    width: int
    frames: np.ndarray              # T×H×W×3 in [0, 1]
    displacement: np.ndarray        # (T-1)×H×W×2, pixel motion from frame t to t+1
    owner: np.ndarray               # T×H×W, index of the visible sprite or -1
    sprites: list[Sprite] = field(default_factory=list)
    background: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.frames.shape[0]


def _background(spec: dict, H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    mode = spec.get("background", "constant")
    color = np.asarray(spec.get("background_color", [0.2, 0.2, 0.2]), dtype=np.float64)
    if mode == "constant":
        return np.broadcast_to(color, (H, W, 3)).copy()
    if mode == "checker":
        cell = int(spec.get("checker_size", 2))
        yy, xx = np.mgrid[0:H, 0:W]
        on = ((yy // cell + xx // cell) % 2).astype(np.float64)[..., None]
        return color * (0.5 + 0.5 * on)
    if mode == "noise":
        return rng.random((H, W, 3))
    if mode == "smooth":
        yy, xx = np.mgrid[0:H, 0:W] / max(H, W)
        phase = rng.random((3, 2)) * 2 * np.pi
        freq = 1.0 + rng.random((3, 2)) * 2.0
        chans = [0.5 + 0.25 * np.sin(2 * np.pi * fx * xx + px) * np.cos(2 * np.pi * fy * yy + py)
                 for (fx, fy), (px, py) in zip(freq, phase)]
        return np.stack(chans, axis=-1)
    raise InputError(f"unknown background mode {mode!r}")


def _parse_sprite(i: int, raw: dict, H: int, W: int) -> Sprite:
    try:
        sprite = Sprite(shape=raw.get("shape", "square"), size=float(raw["size"]),
                        color=tuple(float(c) for c in raw["color"]),
                        position=tuple(float(p) for p in raw["position"]),
                        velocity=tuple(float(v) for v in raw.get("velocity", (0, 0))))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"sprite {i}: malformed entry ({exc})") from None
    if sprite.shape not in ("square", "disc"):
        raise InputError(f"sprite {i}: unknown shape {sprite.shape!r}")
    if len(sprite.color) != 3 or len(sprite.position) != 2 or len(sprite.velocity) != 2:
        raise InputError(f"sprite {i}: color needs 3 entries, position and velocity 2")
    if any(abs(2 * v - round(2 * v)) > 1e-12 for v in sprite.velocity):
        raise InputError(f"sprite {i}: velocity {sprite.velocity} must be integer or half-integer")
    x0, y0, x1, y1 = sprite.bounds()
    if sprite.size <= 0 or x0 < 0 or y0 < 0 or x1 > W or y1 > H:
        raise InputError(f"sprite {i}: extent {(x0, y0, x1, y1)} lies outside the "
                         f"{W}x{H} canvas at t=0")
    return sprite


def make_scene(spec: dict) -> SyntheticScene:
    """Render a clip and its ground-truth displacement from a scene spec."""
    try:
        H, W, T = int(spec["height"]), int(spec["width"]), int(spec["frames"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"scene spec needs integer height, width and frames ({exc})") from None
    if H < 1 or W < 1 or T < 1:
        raise InputError(f"scene extents must be positive, got {H}x{W}x{T}")
    rng = np.random.default_rng(int(spec.get("seed", 0)))
    bg = _background(spec, H, W, rng)
    sprites = [_parse_sprite(i, s, H, W) for i, s in enumerate(spec.get("sprites", []))]
    frames = np.empty((T, H, W, 3))
    owner = np.full((T, H, W), -1)
    for t in range(T):
        img = bg.copy()
        for i, s in enumerate(sprites):
            cov = s.coverage(t, H, W)[..., None]
            img = img * (1 - cov) + np.asarray(s.color) * cov
            owner[t][cov[..., 0] >= 0.5] = i
        frames[t] = img
    vel = np.array([s.velocity for s in sprites] + [(0.0, 0.0)])
    displacement = vel[owner[:-1]] if T > 1 else np.zeros((0, H, W, 2))
    return SyntheticScene(H, W, frames, displacement, owner, sprites, bg)


def translating_squares(count: int, H: int, W: int, T: int, *, seed: int = 0,
                        max_speed: int = 1, sprites: int = 2,
                        velocity: tuple[int, int] | None = None,
                        background: str = "smooth") -> list[SyntheticScene]:
    """Random clips of ``T`` frames with squares moving over a static background.

    Each square gets a random integer velocity up to ``max_speed`` per axis
    unless ``velocity`` fixes a common one.
    """
    rng = np.random.default_rng(seed)
    scenes = []
    for n in range(count):
        items = []
        for _ in range(sprites):
            size = int(rng.integers(3, max(4, min(H, W) // 3) + 1))
            if velocity is None:
                v = rng.integers(-max_speed, max_speed + 1, size=2)
            else:
                v = np.array(velocity)
            # keep the whole path on the canvas
            lo_x, hi_x = max(0, -v[0] * (T - 1)), W - size - max(0, v[0] * (T - 1))
            lo_y, hi_y = max(0, -v[1] * (T - 1)), H - size - max(0, v[1] * (T - 1))
            if hi_x < lo_x or hi_y < lo_y:
                v[:] = 0
                lo_x, hi_x, lo_y, hi_y = 0, W - size, 0, H - size
            items.append({"shape": "square", "size": size, "color": rng.random(3).tolist(),
                          "position": [int(rng.integers(lo_x, hi_x + 1)),
                                       int(rng.integers(lo_y, hi_y + 1))],
                          "velocity": v.tolist()})
        scenes.append(make_scene({"height": H, "width": W, "frames": T, "seed": seed * 1000 + n,
                                  "background": background, "background_color": [0.3, 0.3, 0.3],
                                  "sprites": items}))
    return scenes


def oracle_field(scene: SyntheticScene, start: int, T: int, k: int = 1,
                 dtype=np.float64) -> Tensor:
    """Ideal vectors for predicting frame ``start+T`` from frames ``start..start+T-1``.

    Visible sprite pixels jump straight to their position at the target time
    with a dominant logit; background pixels stay put with logit 0.  All ``k``
    vectors of a pixel are identical, which leaves normalized weights unchanged.
    """
    if start < 0 or start + T > scene.T:
        raise ValueError(f"window [{start}, {start + T}) outside a {scene.T}-frame scene")
    vel = np.array([s.velocity for s in scene.sprites] + [(0.0, 0.0)])
    P = np.zeros((T, scene.height, scene.width, k, 3))
    for t in range(T):
        own = scene.owner[start + t]
        steps = T - t
        P[t, ..., 0] = (vel[own, 0] * steps)[..., None]
        P[t, ..., 1] = (vel[own, 1] * steps)[..., None]
        P[t, ..., 2] = np.where(own >= 0, ORACLE_LOGIT, 0.0)[..., None]
    return Tensor(P.astype(dtype))


def translation_field(T: int, H: int, W: int, velocity: tuple[float, float], k: int = 1,
                      dtype=np.float64) -> Tensor:
    """Every pixel of frame ``t`` moves by ``(T - t) * velocity`` with logit 0."""
    P = np.zeros((T, H, W, k, 3))
    for t in range(T):
        P[t, ..., 0] = velocity[0] * (T - t)
        P[t, ..., 1] = velocity[1] * (T - t)
    return Tensor(P.astype(dtype))


def periodic_pattern(H: int, W: int, t: float, velocity: tuple[float, float],
                     period: int = 8) -> np.ndarray:
    """Smooth periodic texture translated by ``t * velocity`` (exact for integer shifts)."""
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    x = (xx - t * velocity[0]) * 2 * np.pi / period
    y = (yy - t * velocity[1]) * 2 * np.pi / period
    return np.stack([0.5 + 0.4 * np.sin(x) * np.cos(y),
                     0.5 + 0.4 * np.cos(x + y),
                     0.5 + 0.3 * np.sin(2 * x - y)], axis=-1)
