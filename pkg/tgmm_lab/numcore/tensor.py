# tgmm_lab/numcore/tensor.py
"""
Tensor and computation record for reverse-mode differentiation.

A Tensor is a float64 numpy array plus an optional node id into the active
ComputationRecord. Ops executed while a record is active append one entry each;
`backward` walks the entries in reverse and accumulates gradients.

Records are thread confined: the active-record stack lives in a
threading.local, so parallel evaluation threads never share one.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractViolation


class Tensor:
    __slots__ = ("data", "requires_grad", "node_id", "name", "__weakref__")

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={list(self.shape)}{label}, requires_grad={self.requires_grad})"

    # operator sugar; the op kinds live in ops.py
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __radd__(self, other):
        from .ops import add
        return add(other, self)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul, scale
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        from .ops import scale
        return scale(self, -1.0)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def as_tensor(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class RecordEntry:
    kind: str
    inputs: Tuple[int, ...]
    output: int
    saved: Any = None
    attrs: Dict[str, Any] = field(default_factory=dict)


class ComputationRecord:
    """Topologically ordered list of executed ops (inputs always precede outputs)."""

    def __init__(self):
        self.nodes: List[Tensor] = []
        self.needs_grad: List[bool] = []
        self.entries: List[RecordEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, t: Tensor) -> Optional[int]:
        nid = t.node_id
        if nid is not None and nid < len(self.nodes) and self.nodes[nid] is t:
            return nid
        return None

    def _add_node(self, t: Tensor, needs: bool) -> int:
        nid = len(self.nodes)
        self.nodes.append(t)
        self.needs_grad.append(needs)
        t.node_id = nid
        return nid

    def node_for(self, t: Tensor) -> int:
        nid = self.lookup(t)
        if nid is None:
            nid = self._add_node(t, t.requires_grad)
        return nid

    def append(self, kind: str, inputs: Sequence[Tensor], output: Tensor, saved: Any, attrs: Dict[str, Any]) -> None:
        ids = tuple(self.node_for(t) for t in inputs)
        needs = any(self.needs_grad[i] for i in ids)
        out_id = self._add_node(output, needs)
        self.entries.append(RecordEntry(kind, ids, out_id, saved, attrs))


_local = threading.local()


def _stack() -> List[ComputationRecord]:
    st = getattr(_local, "stack", None)
    if st is None:
        st = []
        _local.stack = st
    return st


def active_record() -> Optional[ComputationRecord]:
    st = _stack()
    return st[-1] if st else None


@contextmanager
def recording() -> Iterator[ComputationRecord]:
    """Activate a fresh ComputationRecord for the enclosed forward pass."""
    rec = ComputationRecord()
    st = _stack()
    st.append(rec)
    try:
        yield rec
    finally:
        st.pop()


@contextmanager
def no_record() -> Iterator[None]:
    """Run ops without recording, even inside an outer `recording()`."""
    st = _stack()
    saved = list(st)
    st.clear()
    try:
        yield
    finally:
        st.extend(saved)
