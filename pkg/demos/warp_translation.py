"""Forward warping with known motion.

A square slides across a checkerboard at (2, 1) pixels per frame.  Feeding the
warper the true per-pixel motion predicts the next frame at every window of
the clip, while a still field only blends the inputs.

    python demos/warp_translation.py
"""

import numpy as np

from motiongraph.numerics import no_grad
from motiongraph.pipeline.metrics import metrics
from motiongraph.pipeline.synthetic import make_scene, oracle_field
from motiongraph.warp import effective_weight_sums, forward_warp

T = 4
scene = make_scene({
    "height": 32, "width": 32, "frames": 8, "background": "checker",
    "background_color": [0.4, 0.5, 0.6],
    "sprites": [{"size": 5, "color": [0.9, 0.1, 0.2], "position": [3, 4], "velocity": [2, 1]}],
})

for start in range(scene.T - T):
    P = oracle_field(scene, start, T)
    with no_grad():
        pred = forward_warp(scene.frames[start:start + T], P).data
    m = metrics(pred, scene.frames[start + T])
    print(f"frames {start}..{start + T - 1} -> {start + T}: "
          f"PSNR {m['psnr']:.1f} dB, SSIM {m['ssim']:.4f}")

# normalization: each covered output pixel is a convex blend of its sources
sums, hit = effective_weight_sums(oracle_field(scene, 0, T))
print(f"covered pixels {hit.sum()}/{hit.size}, max |weight sum - 1| "
      f"{np.abs(sums[hit] - 1).max():.1e}")

# a still field on the same clip just repeats a blend of the inputs
with no_grad():
    still = forward_warp(scene.frames[:T], oracle_field(scene, 0, T) * [0, 0, 0]).data
print(f"still-field PSNR {metrics(still, scene.frames[T])['psnr']:.1f} dB")
