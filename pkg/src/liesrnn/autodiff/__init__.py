"""Reverse-mode differentiation, the MLP used for learned terms, and AdamW."""
from . import ops
from .adamw import AdamWState, adamw_update
from .checkpoint import CheckpointError, config_hash, load_checkpoint, save_checkpoint
from .mlp import MlpParams, init_mlp, mlp_forward, mlp_value_and_input_grad
from .tensor import ShapeError, Tape, Tensor, grad

__all__ = [
    "AdamWState",
    "CheckpointError",
    "MlpParams",
    "ShapeError",
    "Tape",
    "Tensor",
    "adamw_update",
    "config_hash",
    "grad",
    "init_mlp",
    "load_checkpoint",
    "mlp_forward",
    "mlp_value_and_input_grad",
    "ops",
    "save_checkpoint",
]
