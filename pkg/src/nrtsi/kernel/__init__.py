"""Minimal float64 autodiff kernel: tensors, a reverse-mode tape, Adam."""
from . import ops
from .adam import AdamState, adam_step
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .tensor import (KernelFault, ParamTensor, ShapeError, Tape, TapeError, Tensor,
                     backward)

__all__ = [
    "AdamState", "CheckpointError", "KernelFault", "ParamTensor", "ShapeError", "Tape",
    "TapeError", "Tensor", "adam_step", "backward", "load_checkpoint", "ops",
    "save_checkpoint",
]
