# tgmm_lab/numcore/__init__.py
"""float64 tensor core: recorded ops, reverse-mode backward, AdamW, checkpoints."""

from .tensor import Tensor, ComputationRecord, as_tensor, recording, no_record, active_record
from .ops import OPS, forward_op, backward
from .params import ParameterSet, glorot_uniform
from .optim import OptimizerState, PlateauScheduler, adamw_step, lr_plateau_update, MIN_LR
from .gradcheck import grad_check, grad_check_detailed, GradCheckResult
from .checkpoint import save_checkpoint, load_checkpoint, load_into

__all__ = [
    "Tensor", "ComputationRecord", "as_tensor", "recording", "no_record", "active_record",
    "OPS", "forward_op", "backward",
    "ParameterSet", "glorot_uniform",
    "OptimizerState", "PlateauScheduler", "adamw_step", "lr_plateau_update", "MIN_LR",
    "grad_check", "grad_check_detailed", "GradCheckResult",
    "save_checkpoint", "load_checkpoint", "load_into",
]
