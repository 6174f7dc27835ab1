# tgmm_lab/models/layers.py
"""
Shared building blocks on top of numcore ops: two-layer MLPs, residual
axis-mixing sub-blocks (MLP-Mixer style) and the GINE message-passing layer.

Parameters live in a flat ParameterSet; every helper takes the dotted prefix
its weights were registered under.
"""

from typing import Optional, Sequence

import numpy as np

from ..numcore import ParameterSet, Tensor
from ..numcore import ops


def add_mlp_params(ps: ParameterSet, prefix: str, dim_in: int, dim_hidden: int, dim_out: int,
                   rng: np.random.Generator) -> None:
    ps.add_linear(f"{prefix}.fc1", dim_in, dim_hidden, rng)
    ps.add_linear(f"{prefix}.fc2", dim_hidden, dim_out, rng)


def mlp(x: Tensor, ps: ParameterSet, prefix: str) -> Tensor:
    """fc1 -> GELU -> fc2 over the last axis."""
    h = ops.gelu(ops.linear(x, ps[f"{prefix}.fc1.weight"], ps[f"{prefix}.fc1.bias"]))
    return ops.linear(h, ps[f"{prefix}.fc2.weight"], ps[f"{prefix}.fc2.bias"])


# ----------------------------------------------------------
# Residual mixing
# ----------------------------------------------------------
def add_mixer_params(ps: ParameterSet, prefix: str, channels: int, tokens: int, expansion: int,
                     rng: np.random.Generator) -> None:
    """LayerNorm over `channels` plus an expansion MLP over `tokens` (the mixed axis length)."""
    ps.add_norm(f"{prefix}.norm", channels)
    add_mlp_params(ps, prefix, tokens, expansion * tokens, tokens, rng)


def _to_last(ndim: int, axis: int) -> Sequence[int]:
    axis %= ndim
    return [a for a in range(ndim) if a != axis] + [axis]


def mix_axis(x: Tensor, ps: ParameterSet, prefix: str, axis: int, rate: float, training: bool,
             rng: Optional[np.random.Generator]) -> Tensor:
    """
    x + dropout(MLP_axis(LayerNorm(x)))

    LayerNorm always normalises the last (feature) axis; the MLP then mixes
    along `axis` with weights shared over every other axis.
    """
    y = ops.layer_norm(x, ps[f"{prefix}.norm.gamma"], ps[f"{prefix}.norm.beta"])
    axis %= x.ndim
    if axis != x.ndim - 1:
        perm = _to_last(x.ndim, axis)
        y = mlp(ops.permute(y, perm), ps, prefix)
        y = ops.permute(y, np.argsort(perm))
    else:
        y = mlp(y, ps, prefix)
    y = ops.dropout(y, rate, training, rng)
    return ops.add(x, y)


# ----------------------------------------------------------
# GINE
# ----------------------------------------------------------
def add_gine_params(ps: ParameterSet, prefix: str, dim: int, rng: np.random.Generator) -> None:
    ps.add(f"{prefix}.eps", np.zeros(1))
    ps.add_linear(f"{prefix}.edge", 1, dim, rng)
    add_mlp_params(ps, prefix, dim, 2 * dim, dim, rng)


def directed(edges: np.ndarray, weights: np.ndarray):
    """Both directions of an undirected edge list: (src, dst, weight) arrays."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    return src, dst, np.concatenate([w, w])


def gine_layer(h: Tensor, src: np.ndarray, dst: np.ndarray, edge_weight: np.ndarray, ps: ParameterSet,
               prefix: str, node_axis: int = 0) -> Tensor:
    """
    h'_i = MLP((1 + eps) h_i + sum_{j -> i} ReLU(h_j + proj(e_ji)))

    `h` is [..., n, ..., d] with nodes on `node_axis` and features last; the
    (directed) edges src -> dst index that axis. Weights are shared over every
    other axis, so one call covers all timesteps and batch entries.
    """
    node_axis %= h.ndim
    n = h.shape[node_axis]
    d = h.shape[-1]
    ew = np.asarray(edge_weight, dtype=np.float64).reshape(-1, 1)
    proj = ops.linear(ew, ps[f"{prefix}.edge.weight"], ps[f"{prefix}.edge.bias"])
    proj = ops.reshape(proj, [len(ew)] + [1] * (h.ndim - node_axis - 2) + [d])
    msg = ops.relu(ops.add(ops.take(h, src, axis=node_axis), proj))
    agg = ops.segment_sum(msg, dst, n, axis=node_axis)
    self_term = ops.mul(h, ops.add(1.0, ps[f"{prefix}.eps"]))
    return mlp(ops.add(self_term, agg), ps, prefix)
