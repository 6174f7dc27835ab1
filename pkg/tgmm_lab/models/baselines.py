# tgmm_lab/models/baselines.py
from typing import Union

import numpy as np

from ..tools.windows import WindowBatch, WindowSample, as_batch


class PersistencePredictor:
    """Repeat the last (imputed = last observed) input value over the whole horizon."""

    kind = "persistence"

    def __init__(self, horizon: int):
        self.horizon = int(horizon)

    def predict(self, sample: Union[WindowSample, WindowBatch]) -> np.ndarray:
        batch = as_batch(sample)
        last = batch.inputs[:, :, -1:, :]
        out = np.repeat(last, self.horizon, axis=2)
        return out[0] if isinstance(sample, WindowSample) else out


class ZeroPredictor:
    """Predicts 0 in normalised units, i.e. each node's training mean."""

    kind = "zero"

    def __init__(self, horizon: int, out_channels: int = 1):
        self.horizon = int(horizon)
        self.out_channels = int(out_channels)

    def predict(self, sample: Union[WindowSample, WindowBatch]) -> np.ndarray:
        batch = as_batch(sample)
        B, N = batch.inputs.shape[:2]
        out = np.zeros((B, N, self.horizon, self.out_channels))
        return out[0] if isinstance(sample, WindowSample) else out
