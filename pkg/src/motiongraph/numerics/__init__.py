from . import ops
from .ops import (
    conv2d,
    cosine_similarity_rows,
    leaky_relu,
    linear,
    matmul,
    pixel_shuffle,
    pixel_unshuffle,
)
from .optim import OptimizerState, adamw_step, cosine_lr
from .select import topk_desc, topk_rows
from .tensor import (
    Parameter,
    Tape,
    Tensor,
    backward,
    default_dtype,
    get_default_dtype,
    no_grad,
    set_default_dtype,
    zero_grads,
)

__all__ = [
    "OptimizerState", "Parameter", "Tape", "Tensor", "adamw_step", "backward",
    "conv2d", "cosine_lr", "cosine_similarity_rows", "default_dtype", "get_default_dtype",
    "leaky_relu", "linear", "matmul", "no_grad", "ops", "pixel_shuffle", "pixel_unshuffle",
    "set_default_dtype", "topk_desc", "topk_rows", "zero_grads",
]
