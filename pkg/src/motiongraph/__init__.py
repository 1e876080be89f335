"""Motion-graph video prediction on a small numpy autodiff core."""

from .errors import (
    ConfigurationError,
    DimensionError,
    DivergenceError,
    InputError,
    MotionGraphError,
    StateError,
)
from .pipeline.config import PipelineConfig, load_config, parse_config, preset
from .pipeline.model import Model, forward, init_params, summary

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DimensionError", "DivergenceError", "InputError", "Model",
    "MotionGraphError", "PipelineConfig", "StateError", "forward", "init_params", "load_config",
    "parse_config", "preset", "summary",
]
