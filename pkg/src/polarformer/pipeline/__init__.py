"""Forward pipeline, configuration, parameter archives, tensor files and evaluation."""

from .config import EvalConfig, ModelConfig, RunConfig, load_config
from .evaluate import average_precision, evaluate, mark_matches, match
from .forward import Detection, ForwardResult, StageError, range_bucket, run_forward
from .params import ModelParams, init_params, load_params, save_params
from .tensor_io import TensorFormatError, load_tensor, save_tensor

__all__ = [
    "Detection",
    "EvalConfig",
    "ForwardResult",
    "ModelConfig",
    "ModelParams",
    "RunConfig",
    "StageError",
    "TensorFormatError",
    "average_precision",
    "evaluate",
    "init_params",
    "load_config",
    "load_params",
    "load_tensor",
    "mark_matches",
    "match",
    "range_bucket",
    "run_forward",
    "save_params",
    "save_tensor",
]
