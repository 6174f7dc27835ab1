# tgmm_lab/tools/gradcheck_suite.py
"""
Finite-difference gradient checks over every differentiable op and every model block.

Each case builds small float64 parameters, a fixed random projection R and the
scalar loss sum(R * f(params)); the linear readout keeps the loss smooth
wherever f is. tgmm-loss instead differentiates the masked MAE training loss.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from ..errors import ContractViolation
from ..models.fclstm import FCLSTM, LSTMConfig
from ..models.layers import add_gine_params, add_mixer_params, directed, gine_layer, mix_axis
from ..models.losses import masked_mae_loss
from ..models.tgmm import TGMMConfig, TemporalGraphMixer
from ..numcore import OPS, ParameterSet, Tensor, grad_check_detailed
from ..numcore import ops
from ..tools.graphpart import build_partition, grid_graph
from ..tools.windows import WindowBatch
from ..utils.log import get_logger

logger = get_logger("gradcheck")

MODULES = ("ops", "node-mixer", "patch-mixer", "gine", "tgmm", "tgmm-loss", "fclstm")
DEFAULT_TOL = 1e-4

Case = Tuple[Callable[[], Tensor], List[Tensor]]


@dataclass
class SuiteRow:
    name: str
    max_rel_error: float
    checked: int
    skipped_kinks: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error < self.tol


def _param(rng: np.random.Generator, shape: Sequence[int], name: str, scale: float = 1.0,
           away_from_zero: bool = False) -> Tensor:
    x = rng.normal(size=shape) * scale
    if away_from_zero:
        # keep relu/abs inputs clear of their kink
        x = np.sign(x) * (np.abs(x) + 0.1)
    return Tensor(x, requires_grad=True, name=name)


def _projected(out_fn: Callable[[], Tensor], rng: np.random.Generator) -> Callable[[], Tensor]:
    R = rng.normal(size=out_fn().shape)
    return lambda: ops.total(ops.mul(out_fn(), R))


# ----------------------------------------------------------
# op cases
# ----------------------------------------------------------
def op_cases(seed: int = 0) -> Dict[str, Case]:
    rng = np.random.default_rng(seed)
    a = _param(rng, (3, 4), "a")
    b = _param(rng, (3, 4), "b")
    row = _param(rng, (4,), "row")
    k = _param(rng, (3, 4), "k", away_from_zero=True)
    bm = _param(rng, (2, 3, 4), "bm")
    bw = _param(rng, (2, 4, 5), "bw")
    w = _param(rng, (4, 5), "w", scale=0.5)
    bias = _param(rng, (5,), "bias")
    gamma = _param(rng, (4,), "gamma")
    beta = _param(rng, (4,), "beta")
    x4 = _param(rng, (2, 3, 4), "x4")
    x5 = _param(rng, (5, 3), "x5")
    seg = np.array([0, 2, 1, 0, 2])
    idx = np.array([2, 0, 0, 1])

    def drop():
        return ops.dropout(a, 0.3, True, np.random.default_rng(seed))

    raw: Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]] = {
        "add": (lambda: ops.add(a, row), [a, row]),
        "sub": (lambda: ops.sub(a, b), [a, b]),
        "mul": (lambda: ops.mul(a, b), [a, b]),
        "scale": (lambda: ops.scale(a, -1.7), [a]),
        "abs": (lambda: ops.absolute(k), [k]),
        "matmul": (lambda: ops.matmul(bm, bw), [bm, bw]),
        "linear": (lambda: ops.linear(a, w, bias), [a, w, bias]),
        "relu": (lambda: ops.relu(k), [k]),
        "gelu": (lambda: ops.gelu(a), [a]),
        "tanh": (lambda: ops.tanh(a), [a]),
        "sigmoid": (lambda: ops.sigmoid(a), [a]),
        "layer_norm": (lambda: ops.layer_norm(x4, gamma, beta), [x4, gamma, beta]),
        "dropout": (drop, [a]),
        "mean": (lambda: ops.mean(x4, axis=1, keepdims=True), [x4]),
        "sum": (lambda: ops.total(x4, axis=(0, 2)), [x4]),
        "concat": (lambda: ops.concat([a, b], axis=0), [a, b]),
        "permute": (lambda: ops.permute(x4, (2, 0, 1)), [x4]),
        "reshape": (lambda: ops.reshape(x4, (6, 4)), [x4]),
        "take": (lambda: ops.take(x4, idx, axis=2), [x4]),
        "segment_sum": (lambda: ops.segment_sum(x5, seg, 3), [x5]),
    }
    return {name: (_projected(f, rng), params) for name, (f, params) in raw.items()}


def differentiable_kinds() -> List[str]:
    return sorted(k for k, rule in OPS.items() if rule.differentiable)


# ----------------------------------------------------------
# block cases
# ----------------------------------------------------------
def node_mixer_case(seed: int = 0) -> Case:
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    add_mixer_params(ps, "token", 6, 4, 2, rng)
    add_mixer_params(ps, "channel", 6, 6, 2, rng)
    x = rng.normal(size=(2, 3, 4, 6))

    def f():
        z = mix_axis(Tensor(x), ps, "token", -2, 0.0, False, None)
        return mix_axis(z, ps, "channel", -1, 0.0, False, None)
    return _projected(f, rng), ps.tensors()


def patch_mixer_case(seed: int = 0) -> Case:
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    B, P, W, D = 2, 3, 4, 5
    add_mixer_params(ps, "temporal", D, W, 2, rng)
    add_mixer_params(ps, "spatial", D, P, 2, rng)
    add_mixer_params(ps, "feature", D, D, 2, rng)
    x = rng.normal(size=(B, P, W, D))

    def f():
        t = mix_axis(Tensor(x), ps, "temporal", 2, 0.0, False, None)
        t = mix_axis(t, ps, "spatial", 1, 0.0, False, None)
        return mix_axis(t, ps, "feature", 3, 0.0, False, None)
    return _projected(f, rng), ps.tensors()


def gine_case(seed: int = 0) -> Case:
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    add_gine_params(ps, "gine", 4, rng)
    g = grid_graph(6)
    src, dst, w = directed(g.edges, g.weights)
    h = Tensor(rng.normal(size=(2, 6, 3, 4)), requires_grad=True, name="h")

    def f():
        return gine_layer(h, src, dst, w, ps, "gine", node_axis=1)
    return _projected(f, rng), ps.tensors() + [h]


def _batch(rng: np.random.Generator, B: int, N: int, W: int, H: int, C: int) -> WindowBatch:
    mask = (rng.random((B, N, W, C)) > 0.2).astype(np.float64)
    return WindowBatch(
        np.arange(B, dtype=np.int64),
        rng.normal(size=(B, N, W, C)) * mask,
        mask,
        rng.normal(size=(B, N, H, C)),
        np.ones((B, N, H, C)),
        np.ones((B, N, H, C)),
    )


def _small_tgmm(seed: int) -> TemporalGraphMixer:
    part = build_partition(grid_graph(6), 2, 0.1, seed)
    cfg = TGMMConfig(window=4, horizon=2, node_dim=8, patch_dim=8, gnn_layers=2, node_mixer_layers=1,
                     patch_mixer_layers=1, num_patches=2)
    return TemporalGraphMixer(cfg, part, seed=seed)


def tgmm_case(seed: int = 0) -> Case:
    rng = np.random.default_rng(seed)
    model = _small_tgmm(seed)
    batch = _batch(rng, 2, 6, 4, 2, 1)
    return _projected(lambda: model.forward(batch), rng), model.params.tensors()


def tgmm_loss_case(seed: int = 0) -> Case:
    """The training objective itself: masked MAE of the forward pass over a partial target mask."""
    rng = np.random.default_rng(seed)
    model = _small_tgmm(seed)
    batch = _batch(rng, 2, 6, 4, 2, 1)
    batch.train_mask = (rng.random(batch.targets.shape) > 0.3).astype(np.float64)
    batch.train_mask[0, 0, 0, 0] = 1.0
    return (lambda: masked_mae_loss(model.forward(batch), batch.targets, batch.train_mask)), model.params.tensors()


def fclstm_case(seed: int = 0) -> Case:
    rng = np.random.default_rng(seed)
    cfg = LSTMConfig(window=4, horizon=2, num_nodes=3, hidden=6, layers=2)
    model = FCLSTM(cfg, seed=seed)
    batch = _batch(rng, 2, 3, 4, 2, 1)
    return _projected(lambda: model.forward(batch), rng), model.params.tensors()


BLOCKS: Dict[str, Callable[[int], Case]] = {
    "node-mixer": node_mixer_case,
    "patch-mixer": patch_mixer_case,
    "gine": gine_case,
    "tgmm": tgmm_case,
    "tgmm-loss": tgmm_loss_case,
    "fclstm": fclstm_case,
}


# ----------------------------------------------------------
# runner
# ----------------------------------------------------------
def _check(name: str, case: Case, tol: float, seed: int) -> SuiteRow:
    f, params = case
    res = grad_check_detailed(f, params, eps=1e-5, seed=seed)
    row = SuiteRow(name, res.max_rel_error, res.checked, res.skipped_kinks, tol)
    level = logger.debug if row.passed else logger.warning
    level("%s: max rel err %.3e over %d coords (%d kink skips), worst %s", name, res.max_rel_error,
          res.checked, res.skipped_kinks, res.worst)
    return row


def run_suite(module: str = "all", seed: int = 0, tol: float = DEFAULT_TOL) -> List[SuiteRow]:
    if module != "all" and module not in MODULES:
        raise ContractViolation(f"unknown gradcheck module {module!r}; expected one of {list(MODULES) + ['all']}")
    rows: List[SuiteRow] = []
    if module in ("all", "ops"):
        cases = op_cases(seed)
        missing = sorted(set(differentiable_kinds()) - set(cases))
        if missing:
            raise ContractViolation(f"no gradient check case for op kind(s) {missing}")
        rows.extend(_check(f"op:{name}", case, tol, seed) for name, case in sorted(cases.items()))
    for name, build in BLOCKS.items():
        if module in ("all", name):
            rows.append(_check(name, build(seed), tol, seed))
    return rows


def format_table(rows: Sequence[SuiteRow]) -> str:
    width = max([len(r.name) for r in rows] + [6])
    lines = [f"{'module':<{width}}  {'max_rel_err':>12}  {'checked':>7}  {'kinks':>5}  status"]
    for r in rows:
        lines.append(f"{r.name:<{width}}  {r.max_rel_error:>12.3e}  {r.checked:>7d}  {r.skipped_kinks:>5d}  "
                     f"{'ok' if r.passed else 'FAIL'}")
    return "\n".join(lines)
