# tgmm_lab/numcore/optim.py
"""
AdamW with decoupled weight decay, and a reduce-on-plateau learning-rate schedule.
"""

import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..errors import ContractViolation, NumericFailure
from .tensor import Tensor

MIN_LR = 1e-5


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    t: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "OptimizerState":
        st = cls(**hyper)
        st.m = [np.zeros_like(p.data) for p in params]
        st.v = [np.zeros_like(p.data) for p in params]
        return st


def adamw_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: OptimizerState) -> None:
    """
    One AdamW update, in place on params.data and state.

    All gradients are checked before anything is touched: a non-finite
    gradient raises NumericFailure and leaves params and state unchanged.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractViolation(
            f"adamw_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moment slots")
    for p, g, m in zip(params, grads, state.m):
        if g.shape != p.shape or m.shape != p.shape:
            raise ContractViolation(
                f"adamw_step: {p.name}: grad {list(g.shape)} / moment {list(m.shape)} vs param {list(p.shape)}")
        if not np.isfinite(g).all():
            raise NumericFailure(f"adamw_step: non-finite gradient for {p.name or 'parameter'}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        if state.lr == 0.0:
            continue
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = p.data - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p.data)


@dataclass
class PlateauScheduler:
    factor: float = 0.5
    min_lr: float = MIN_LR
    patience: int = 2
    min_delta: float = 1e-4
    best: float = math.inf
    bad_epochs: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ContractViolation(f"lr factor must be in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise ContractViolation(f"lr_patience must be >= 1, got {self.patience}")


def lr_plateau_update(sched: PlateauScheduler, val_loss: float, lr: float) -> float:
    """Feed one epoch's validation loss; returns the (possibly reduced) learning rate."""
    if val_loss < sched.best - sched.min_delta:
        sched.best = val_loss
        sched.bad_epochs = 0
        return lr
    sched.bad_epochs += 1
    if sched.bad_epochs >= sched.patience:
        sched.bad_epochs = 0
        return max(lr * sched.factor, sched.min_lr)
    return lr
