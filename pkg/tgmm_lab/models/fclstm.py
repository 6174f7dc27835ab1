# tgmm_lab/models/fclstm.py
"""
Fully connected LSTM baseline over the whole sensor network.

Per timestep the input is every node's value and mask bit flattened into one
vector (length 2*N*C_in). Stacked LSTM layers with layer norm between them and
per-layer dropout (0.8 down to 0.4 for five layers) feed a two-layer head
whose output is reshaped to [B, N, H, C_out].
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from ..errors import ContractViolation
from ..numcore import ParameterSet, Tensor, glorot_uniform
from ..numcore import ops
from ..tools.windows import WindowBatch, WindowSample, as_batch

GATES = ("i", "f", "g", "o")


def linear_dropout_schedule(layers: int, first: float = 0.8, last: float = 0.4) -> Tuple[float, ...]:
    if layers == 1:
        return (first,)
    return tuple(round(float(r), 10) for r in np.linspace(first, last, layers))


@dataclass
class LSTMConfig:
    window: int = 12
    horizon: int = 12
    in_channels: int = 1
    out_channels: int = 1
    num_nodes: int = 1
    hidden: int = 256
    layers: int = 5
    dropout: Optional[Tuple[float, ...]] = None
    layer_norm: bool = True
    forget_bias: float = 1.0

    def __post_init__(self):
        for name in ("window", "horizon", "in_channels", "out_channels", "num_nodes", "hidden", "layers"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"lstm.{name} must be >= 1, got {getattr(self, name)}")
        if self.dropout is None:
            self.dropout = linear_dropout_schedule(self.layers)
        self.dropout = tuple(float(r) for r in self.dropout)
        if len(self.dropout) != self.layers:
            raise ContractViolation(f"lstm.dropout needs {self.layers} rates, got {len(self.dropout)}")
        if any(not 0.0 <= r < 1.0 for r in self.dropout):
            raise ContractViolation(f"lstm.dropout rates must be in [0, 1), got {list(self.dropout)}")


def lstm_cell(x: Union[Tensor, np.ndarray], h: Union[Tensor, np.ndarray], c: Union[Tensor, np.ndarray],
              ps: ParameterSet, prefix: str) -> Tuple[Tensor, Tensor]:
    """
    i, f, o = sigmoid(.), g = tanh(.)
    c' = f * c + i * g ;  h' = o * tanh(c')
    """
    pre = {}
    for k in GATES:
        a = ops.linear(x, ps[f"{prefix}.{k}.wx"], ps[f"{prefix}.{k}.bias"])
        pre[k] = ops.add(a, ops.linear(h, ps[f"{prefix}.{k}.wh"]))
    i = ops.sigmoid(pre["i"])
    f = ops.sigmoid(pre["f"])
    g = ops.tanh(pre["g"])
    o = ops.sigmoid(pre["o"])
    c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
    h_new = ops.mul(o, ops.tanh(c_new))
    return h_new, c_new


def add_cell_params(ps: ParameterSet, prefix: str, dim_in: int, hidden: int, rng: np.random.Generator,
                    forget_bias: float = 1.0) -> None:
    for k in GATES:
        ps.add(f"{prefix}.{k}.wx", glorot_uniform(rng, dim_in, hidden))
        ps.add(f"{prefix}.{k}.wh", glorot_uniform(rng, hidden, hidden))
        ps.add(f"{prefix}.{k}.bias", np.full(hidden, forget_bias if k == "f" else 0.0))


class FCLSTM:
    kind = "fclstm"

    def __init__(self, config: LSTMConfig, seed: int = 0):
        self.config = config
        self.params = self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng: np.random.Generator) -> ParameterSet:
        c = self.config
        ps = ParameterSet()
        dim_in = 2 * c.num_nodes * c.in_channels
        for l in range(c.layers):
            add_cell_params(ps, f"lstm.{l}", dim_in if l == 0 else c.hidden, c.hidden, rng, c.forget_bias)
            if c.layer_norm and l < c.layers - 1:
                ps.add_norm(f"lstm.{l}.norm", c.hidden)
        ps.add_linear("head.fc1", c.hidden, c.hidden, rng)
        ps.add_linear("head.fc2", c.hidden, c.num_nodes * c.horizon * c.out_channels, rng)
        return ps

    def _sequence(self, values: np.ndarray, mask: np.ndarray) -> List[np.ndarray]:
        c = self.config
        expected = (c.num_nodes, c.window, c.in_channels)
        if values.shape[-3:] != expected or mask.shape != values.shape:
            raise ContractViolation(
                f"fclstm: values {list(values.shape)} / mask {list(mask.shape)} do not match [B, {', '.join(map(str, expected))}]")
        B = values.shape[0]
        flat_v = values.transpose(0, 2, 1, 3).reshape(B, c.window, -1)
        flat_m = mask.transpose(0, 2, 1, 3).reshape(B, c.window, -1)
        x = np.concatenate([flat_v, flat_m], axis=-1)
        return [np.ascontiguousarray(x[:, t]) for t in range(c.window)]

    def forward(self, sample: Union[WindowSample, WindowBatch], training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        c = self.config
        batch = as_batch(sample)
        seq: List[Union[Tensor, np.ndarray]] = self._sequence(batch.inputs, batch.input_mask)
        B = batch.inputs.shape[0]
        for l in range(c.layers):
            h: Union[Tensor, np.ndarray] = np.zeros((B, c.hidden))
            cell: Union[Tensor, np.ndarray] = np.zeros((B, c.hidden))
            out = []
            for x_t in seq:
                h, cell = lstm_cell(x_t, h, cell, self.params, f"lstm.{l}")
                y = h
                if c.layer_norm and l < c.layers - 1:
                    y = ops.layer_norm(y, self.params[f"lstm.{l}.norm.gamma"], self.params[f"lstm.{l}.norm.beta"])
                out.append(ops.dropout(y, c.dropout[l], training, rng))
            seq = out
        top = seq[-1]
        z = ops.gelu(ops.linear(top, self.params["head.fc1.weight"], self.params["head.fc1.bias"]))
        z = ops.linear(z, self.params["head.fc2.weight"], self.params["head.fc2.bias"])
        y = ops.reshape(z, (B, c.num_nodes, c.horizon, c.out_channels))
        if isinstance(sample, WindowSample):
            return ops.reshape(y, y.shape[1:])
        return y
