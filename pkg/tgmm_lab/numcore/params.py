# tgmm_lab/numcore/params.py
import math
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractViolation
from .tensor import Tensor


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: Optional[Sequence[int]] = None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    shape = tuple(shape) if shape is not None else (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)


class ParameterSet:
    """
    Ordered, name-addressable collection of trainable tensors.

    Names are stable dotted paths ("node_mixer.0.token.fc1.weight"); the
    insertion order is the checkpoint order.
    """

    def __init__(self):
        self._params: Dict[str, Tensor] = {}

    # ---- construction ----
    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_linear(self, prefix: str, fan_in: int, fan_out: int, rng: np.random.Generator, bias: bool = True) -> None:
        self.add(f"{prefix}.weight", glorot_uniform(rng, fan_in, fan_out))
        if bias:
            self.add(f"{prefix}.bias", np.zeros(fan_out))

    def add_norm(self, prefix: str, dim: int) -> None:
        self.add(f"{prefix}.gamma", np.ones(dim))
        self.add(f"{prefix}.beta", np.zeros(dim))

    # ---- access ----
    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ContractViolation(f"unknown parameter {name!r}")

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def tensors(self) -> List[Tensor]:
        return list(self._params.values())

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def get(self, name: str, default=None):
        return self._params.get(name, default)

    def num_scalars(self) -> int:
        return int(sum(t.size for t in self._params.values()))

    # ---- state ----
    def arrays(self) -> Dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = [k for k in self._params if k not in arrays]
        if missing:
            raise ContractViolation(f"missing parameters: {missing[:5]}")
        for k, t in self._params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.shape:
                raise ContractViolation(f"parameter {k}: shape {list(a.shape)} does not match {list(t.shape)}")
            t.data = np.ascontiguousarray(a.copy())

    def zero_like(self) -> Dict[str, np.ndarray]:
        return {k: np.zeros_like(t.data) for k, t in self._params.items()}
