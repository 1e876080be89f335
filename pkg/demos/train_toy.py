"""Training the full model on translating squares.

Eight clips of squares drifting one pixel per frame to the right.  The model
sees four frames and predicts the fifth; a couple of hundred AdamW steps take
the error well below that of a still-frame guess.

    python demos/train_toy.py
"""

import time

import numpy as np

from motiongraph.pipeline.config import preset
from motiongraph.pipeline.metrics import metrics
from motiongraph.pipeline.model import Model, summary
from motiongraph.pipeline.synthetic import translating_squares
from motiongraph.pipeline.train import smoothed, train

cfg = preset("toy")
print(summary(cfg))

clips = translating_squares(8, 16, 16, cfg.T + 2, seed=0, velocity=(1, 0), background="constant")
start = time.perf_counter()


def progress(step, value):
    if step % 50 == 0:
        print(f"step {step:3d}  {value:.2e}")


result = train(clips, cfg, 200, callback=progress)
curve = smoothed(result.history)
print(f"{time.perf_counter() - start:.1f}s; smoothed loss {curve[0]:.2e} -> {curve[-1]:.2e}")

test = translating_squares(1, 16, 16, cfg.T + 1, seed=99, velocity=(1, 0),
                           background="constant")[0]
model = Model(cfg, result.params)
pred = model.predict(test.frames[:cfg.T])
target = test.frames[cfg.T]
print("model      ", {k: round(v, 3) for k, v in metrics(pred, target).items()})
print("last frame ", {k: round(v, 3) for k, v in metrics(test.frames[cfg.T - 1], target).items()})

# displacement the last frame's square pixels are sent along, averaged over vectors
field = model(test.frames[:cfg.T]).field.data[-1, ..., :2]
moving = field[test.owner[cfg.T - 1] >= 0].mean(axis=(0, 1))
print(f"mean predicted motion of the squares: {np.round(moving, 2)}")
