# tgmm_lab/models/losses.py
"""
Masked losses (differentiable, on Tensors) and masked metrics (numpy, original units).

Masked-out entries are excluded with np.where / multiplication by an exact 0,
so arbitrary target values there never change the result.
"""

from typing import Dict, Optional

import numpy as np

from ..errors import ContractViolation
from ..numcore import Tensor
from ..numcore import ops

MAPE_GUARD = 1e-2


def _denominator(mask: np.ndarray, denom: Optional[float]) -> float:
    total = float(np.sum(mask)) if denom is None else float(denom)
    if total <= 0.0:
        raise ContractViolation("masked loss over zero eligible entries")
    return total


def _check(pred_shape, target: np.ndarray, mask: np.ndarray) -> None:
    if tuple(pred_shape) != target.shape or target.shape != mask.shape:
        raise ContractViolation(
            f"prediction {list(pred_shape)}, target {list(target.shape)} and mask {list(mask.shape)} must match")


def masked_mae_loss(pred: Tensor, target: np.ndarray, mask: np.ndarray, denom: Optional[float] = None) -> Tensor:
    """sum(mask * |pred - target|) / denom, denom defaulting to sum(mask)."""
    _check(pred.shape, target, mask)
    total = _denominator(mask, denom)
    safe_target = np.where(mask > 0, target, 0.0)
    err = ops.absolute(ops.sub(pred, safe_target))
    return ops.scale(ops.total(ops.mul(err, mask)), 1.0 / total)


def masked_mse_loss(pred: Tensor, target: np.ndarray, mask: np.ndarray, denom: Optional[float] = None) -> Tensor:
    _check(pred.shape, target, mask)
    total = _denominator(mask, denom)
    diff = ops.sub(pred, np.where(mask > 0, target, 0.0))
    return ops.scale(ops.total(ops.mul(ops.mul(diff, diff), mask)), 1.0 / total)


# ----------------------------------------------------------
# numpy metrics
# ----------------------------------------------------------
def metric_sums(pred: np.ndarray, target: np.ndarray, mask: np.ndarray,
                guard: float = MAPE_GUARD) -> Dict[str, float]:
    """Additive pieces of MAE / MAPE / MSE, so batches can be reduced in a fixed order."""
    _check(pred.shape, target, mask)
    m = mask > 0
    err = np.where(m, np.abs(pred - np.where(m, target, 0.0)), 0.0)
    ape = np.where(m, err / np.maximum(np.abs(np.where(m, target, 1.0)), guard), 0.0)
    return {
        "abs": float(err.sum()),
        "ape": float(ape.sum()),
        "sq": float((err * err).sum()),
        "count": float(m.sum()),
    }


def merge_sums(a: Dict[str, float], b: Dict[str, float]) -> Dict[str, float]:
    return {k: a.get(k, 0.0) + b.get(k, 0.0) for k in ("abs", "ape", "sq", "count")}


def finalize(sums: Dict[str, float]) -> Dict[str, float]:
    n = sums.get("count", 0.0)
    if n <= 0:
        raise ContractViolation("metrics over zero eligible entries")
    return {
        "mae": sums["abs"] / n,
        "mape": 100.0 * sums["ape"] / n,
        "mse": sums["sq"] / n,
        "count": int(n),
    }


def masked_mae(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    return finalize(metric_sums(pred, target, mask))["mae"]


def masked_mape(pred: np.ndarray, target: np.ndarray, mask: np.ndarray, guard: float = MAPE_GUARD) -> float:
    return finalize(metric_sums(pred, target, mask, guard))["mape"]


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    return finalize(metric_sums(pred, target, mask))["mse"]
