# tgmm_lab/tools/windows.py
"""
Chronological splits, normalisation, last-value imputation and sliding windows.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..errors import ContractViolation
from .dataset import SpatioTemporalDataset, channel_stats

STD_FLOOR = 1e-8
SPLIT_NAMES = ("train", "val", "test")


class SplitRange(NamedTuple):
    start: int
    end: int

    def __len__(self) -> int:
        return max(0, self.end - self.start)


def chronological_split(num_timesteps: int) -> Dict[str, SplitRange]:
    """70 / 10 / 20 split by floor arithmetic."""
    T = int(num_timesteps)
    if T < 10:
        raise ContractViolation(f"chronological split needs T >= 10, got {T}")
    a = (7 * T) // 10
    b = (8 * T) // 10
    return {"train": SplitRange(0, a), "val": SplitRange(a, b), "test": SplitRange(b, T)}


# ----------------------------------------------------------
# Imputation
# ----------------------------------------------------------
def impute_last(data: Union[SpatioTemporalDataset, np.ndarray], mask: Optional[np.ndarray] = None,
                fill_value: float = 0.0, normalizer: Optional["Normalizer"] = None) -> np.ndarray:
    """
    Forward-fill each node/channel series along time from its observed entries.

    Leading gaps (no earlier observation) take `fill_value`, in the units of
    the values passed in. prepare() imputes normalised values, where the
    default 0.0 is the training mean. For raw values pass the fitted
    `normalizer` instead: leading gaps then take its per-series mean.
    Observed entries are returned unchanged; imputing the output again with
    the same mask returns it unchanged.
    """
    if isinstance(data, SpatioTemporalDataset):
        values, mask = data.values, data.mask
    else:
        values = np.asarray(data, dtype=np.float64)
        if mask is None:
            raise ContractViolation("impute_last on a raw array needs a mask")
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape or values.ndim != 3:
        raise ContractViolation(f"values {list(values.shape)} and mask {list(mask.shape)} must be equal [N, T, C]")
    N, T, C = values.shape
    if normalizer is not None:
        if normalizer.mean.shape != (N, C):
            raise ContractViolation(f"normalizer is fitted for {list(normalizer.mean.shape)}, values are [{N}, {C}]")
        leading = pd.Series(normalizer.mean.reshape(N * C))
    else:
        leading = pd.Series(np.full(N * C, float(fill_value)))
    table = np.where(mask, values, np.nan).transpose(1, 0, 2).reshape(T, N * C)
    filled = pd.DataFrame(table).ffill().fillna(leading).to_numpy(dtype=np.float64)
    out = filled.reshape(T, N, C).transpose(1, 0, 2)
    return np.ascontiguousarray(np.where(mask, values, out))


# ----------------------------------------------------------
# Normalisation
# ----------------------------------------------------------
@dataclass
class Normalizer:
    mean: np.ndarray   # [N, C]
    std: np.ndarray    # [N, C]

    @classmethod
    def fit(cls, values: np.ndarray, mask: np.ndarray, train: SplitRange) -> "Normalizer":
        """Per node/channel statistics over observed training entries; unobserved series get (0, 1)."""
        v = values[:, train.start:train.end]
        m = mask[:, train.start:train.end]
        mean, std, cnt = channel_stats(v, m, axis=(1,))
        none = cnt == 0
        mean = np.where(none, 0.0, mean)
        std = np.where(none, 1.0, np.maximum(std, STD_FLOOR))
        return cls(mean, std)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """x is [..., N, T, C]."""
        return (x - self.mean[:, None, :]) / self.std[:, None, :]

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std[:, None, :] + self.mean[:, None, :]

    def to_json(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


# ----------------------------------------------------------
# Prepared series and windows
# ----------------------------------------------------------
@dataclass
class PreparedSeries:
    """Everything a model needs, in normalised units, for the whole time axis."""
    inputs: np.ndarray        # imputed, normalised [N, T, C]
    mask: np.ndarray          # observed [N, T, C] bool
    targets: np.ndarray       # normalised truth (observed or eval_truth), 0 where unknown
    targets_raw: np.ndarray   # same in original units
    train_mask: np.ndarray    # observed
    eval_mask: np.ndarray     # observed | synthetically masked
    normalizer: Normalizer
    splits: Dict[str, SplitRange]

    @property
    def shape(self):
        return self.inputs.shape


def prepare(ds: SpatioTemporalDataset) -> PreparedSeries:
    splits = chronological_split(ds.num_timesteps)
    norm = Normalizer.fit(ds.values, ds.mask, splits["train"])
    syn = ds.synthetic_mask
    z = norm.apply(np.where(ds.mask, ds.values, 0.0))
    inputs = impute_last(z, ds.mask, 0.0)
    raw = np.where(ds.mask, ds.values, np.where(syn, ds.eval_truth, 0.0))
    eval_mask = ds.mask | syn
    targets = np.where(eval_mask, norm.apply(raw), 0.0)
    return PreparedSeries(inputs, ds.mask.copy(), targets, raw, ds.mask.copy(), eval_mask, norm, splits)


@dataclass
class WindowSample:
    t0: int
    inputs: np.ndarray        # [N, W, C]
    input_mask: np.ndarray    # [N, W, C]
    targets: np.ndarray       # [N, H, C]
    train_mask: np.ndarray    # [N, H, C]
    eval_mask: np.ndarray     # [N, H, C]
    targets_raw: Optional[np.ndarray] = None  # [N, H, C] original units


@dataclass
class WindowBatch:
    t0: np.ndarray            # [B]
    inputs: np.ndarray        # [B, N, W, C]
    input_mask: np.ndarray
    targets: np.ndarray       # [B, N, H, C]
    train_mask: np.ndarray
    eval_mask: np.ndarray
    targets_raw: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(len(self.t0))


def make_windows(prep: PreparedSeries, split: SplitRange, window: int, horizon: int,
                 stride: int = 1) -> List[WindowSample]:
    if window < 1 or horizon < 1 or stride < 1:
        raise ContractViolation(f"window, horizon and stride must be >= 1, got {window}, {horizon}, {stride}")
    out = []
    for t0 in range(split.start, split.end - window - horizon + 1, stride):
        ts, tt = slice(t0, t0 + window), slice(t0 + window, t0 + window + horizon)
        out.append(WindowSample(
            t0,
            prep.inputs[:, ts].copy(),
            prep.mask[:, ts].astype(np.float64),
            prep.targets[:, tt].copy(),
            prep.train_mask[:, tt].astype(np.float64),
            prep.eval_mask[:, tt].astype(np.float64),
            prep.targets_raw[:, tt].copy(),
        ))
    return out


def stack_windows(samples: Sequence[WindowSample]) -> WindowBatch:
    if not samples:
        raise ContractViolation("cannot batch an empty window list")
    return WindowBatch(
        np.array([s.t0 for s in samples], dtype=np.int64),
        np.stack([s.inputs for s in samples]),
        np.stack([s.input_mask for s in samples]),
        np.stack([s.targets for s in samples]),
        np.stack([s.train_mask for s in samples]),
        np.stack([s.eval_mask for s in samples]),
        None if any(s.targets_raw is None for s in samples) else np.stack([s.targets_raw for s in samples]),
    )


def as_batch(x: Union[WindowSample, WindowBatch]) -> WindowBatch:
    return stack_windows([x]) if isinstance(x, WindowSample) else x
