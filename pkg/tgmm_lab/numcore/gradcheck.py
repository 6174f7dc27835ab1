# tgmm_lab/numcore/gradcheck.py
"""
Central finite-difference gradient checking.

    rel_err = |g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|)

Models with <= max_dense scalars are checked on every coordinate, larger ones
on `num_samples` coordinates drawn without replacement (seeded).

A perturbation that flips the sign of any relu/abs input straddles a kink of
the loss; the central difference is meaningless there, so such coordinates
are skipped and another one is drawn in their place.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractViolation
from .ops import backward
from .tensor import ComputationRecord, Tensor, recording

KINK_KINDS = ("relu", "abs")


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped_kinks: int
    worst: Optional[Tuple[str, int]] = None  # (param name, flat index)


def _kink_signature(rec: ComputationRecord) -> List[np.ndarray]:
    return [rec.nodes[e.inputs[0]].data > 0.0 for e in rec.entries if e.kind in KINK_KINDS]


def _same_side(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _evaluate(f: Callable[[], Tensor]) -> Tuple[float, List[np.ndarray]]:
    with recording() as rec:
        out = f()
    return out.item(), _kink_signature(rec)


def grad_check_detailed(
        f: Callable[[], Tensor],
        params: Sequence[Tensor],
        eps: float = 1e-5,
        max_dense: int = 500,
        num_samples: int = 200,
        seed: int = 0,
) -> GradCheckResult:
    """
    Compare backward() against central differences of f.

    f takes no arguments, reads the current values of `params` and returns a
    scalar Tensor. It must be deterministic (no training-mode dropout).
    Parameter data is perturbed in place and restored bit-for-bit.
    """
    if not params:
        raise ContractViolation("grad_check: no parameters given")
    with recording() as rec:
        loss = f()
    analytic = backward(rec, loss, params)

    sizes = [p.size for p in params]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    if total <= max_dense:
        order = np.arange(total)
        budget = total
    else:
        order = np.random.default_rng(seed).permutation(total)
        budget = num_samples

    worst_err = 0.0
    worst = None
    checked = 0
    skipped = 0
    for flat in order:
        if checked >= budget:
            break
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        j = int(flat - offsets[k])
        p = params[k]
        view = p.data.reshape(-1)
        orig = view[j]
        try:
            view[j] = orig + eps
            f_plus, sig_plus = _evaluate(f)
            view[j] = orig - eps
            f_minus, sig_minus = _evaluate(f)
        finally:
            view[j] = orig
        if not _same_side(sig_plus, sig_minus):
            skipped += 1
            continue
        g_fd = (f_plus - f_minus) / (2.0 * eps)
        g_an = float(analytic[k].reshape(-1)[j])
        err = abs(g_an - g_fd) / max(1e-8, abs(g_an) + abs(g_fd))
        checked += 1
        if err > worst_err or worst is None:
            worst_err = max(worst_err, err)
            worst = (p.name or f"param{k}", j)
    return GradCheckResult(worst_err, checked, skipped, worst)


def grad_check(
        f: Callable[[], Tensor],
        params: Sequence[Tensor],
        eps: float = 1e-5,
        max_dense: int = 500,
        num_samples: int = 200,
        seed: int = 0,
) -> float:
    """Max relative error between analytic and finite-difference gradients."""
    return grad_check_detailed(f, params, eps, max_dense, num_samples, seed).max_rel_error
