"""Minimal differentiable-computation core (numpy, reverse-mode tape)."""

from .tensor import (
    Parameter,
    ShapeMismatchError,
    Tensor,
    as_tensor,
    concat,
    is_grad_enabled,
    log_softmax,
    no_grad,
    softmax,
    stack,
    take_along_axis,
)
from .layers import Dense, GruCell, Mlp, MultiHeadAttention
from .optim import RmsProp, clip_grad_norm
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointError,
    load_checkpoint,
    load_into,
    save_checkpoint,
)

__all__ = [
    "Tensor", "Parameter", "ShapeMismatchError", "as_tensor", "concat", "stack",
    "softmax", "log_softmax", "take_along_axis", "no_grad", "is_grad_enabled",
    "Dense", "GruCell", "MultiHeadAttention", "Mlp",
    "RmsProp", "clip_grad_norm",
    "GradCheckReport", "grad_check",
    "MAGIC", "FORMAT_VERSION", "CheckpointError",
    "save_checkpoint", "load_checkpoint", "load_into",
]
