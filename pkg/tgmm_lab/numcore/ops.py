# tgmm_lab/numcore/ops.py
"""
Differentiable op set and reverse-mode backward pass.

Every op kind registers a forward rule and a backward rule:

    forward(arrays, attrs)            -> (out, saved)
    backward(g, arrays, out, saved, attrs) -> tuple of input gradients (None = no gradient)

`forward_op(kind, inputs, attrs)` runs the forward rule, checks the output is
finite and appends one entry to the active ComputationRecord (if any).
Elementwise binary ops broadcast numpy-style; their gradients are sum-reduced
back to the input shapes.
"""

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ContractViolation, NumericFailure
from .tensor import ComputationRecord, Tensor, active_record, as_tensor

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715

ForwardFn = Callable[[Sequence[np.ndarray], Dict[str, Any]], Tuple[np.ndarray, Any]]
BackwardFn = Callable[[np.ndarray, Sequence[np.ndarray], np.ndarray, Any, Dict[str, Any]], Sequence[Optional[np.ndarray]]]


@dataclass(frozen=True)
class OpRule:
    kind: str
    arity: Optional[int]  # None = variadic
    forward: ForwardFn
    backward: BackwardFn
    differentiable: bool = True


OPS: Dict[str, OpRule] = {}


def register(kind: str, arity: Optional[int], differentiable: bool = True):
    def deco(pair):
        fwd, bwd = pair
        OPS[kind] = OpRule(kind, arity, fwd, bwd, differentiable)
        return pair
    return deco


def _shapes(arrays: Sequence[np.ndarray]) -> str:
    return ", ".join(str(list(a.shape)) for a in arrays)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(kind: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractViolation(f"{kind}: shapes {list(a.shape)} and {list(b.shape)} do not broadcast")


def _norm_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# -------------------------
# forward_op / backward
# -------------------------
def forward_op(kind: str, inputs: Sequence[Any], attrs: Optional[Dict[str, Any]] = None) -> Tensor:
    rule = OPS.get(kind)
    if rule is None:
        raise ContractViolation(f"unknown op kind {kind!r}")
    attrs = attrs or {}
    tensors = [as_tensor(x) for x in inputs]
    if rule.arity is not None and len(tensors) != rule.arity:
        raise ContractViolation(f"{kind}: expected {rule.arity} inputs, got {len(tensors)}")
    arrays = [t.data for t in tensors]
    out, saved = rule.forward(arrays, attrs)
    if not np.isfinite(out).all():
        raise NumericFailure(f"{kind}: non-finite output for input shapes {_shapes(arrays)}")
    result = Tensor(out)
    rec = active_record()
    if rec is not None:
        rec.append(kind, tensors, result, saved, attrs)
        result.requires_grad = rec.needs_grad[result.node_id]
    return result


def backward(record: ComputationRecord, loss: Tensor, wrt: Sequence[Tensor]) -> List[np.ndarray]:
    """
    Gradients of scalar `loss` with respect to each tensor in `wrt`.

    Tensors not on any path to the loss get zeros of their own shape.
    """
    if loss.data.size != 1:
        raise ContractViolation(f"backward: loss must be scalar, got shape {list(loss.shape)}")
    n = len(record.nodes)
    grads: List[Optional[np.ndarray]] = [None] * n
    loss_id = record.lookup(loss)
    if loss_id is not None:
        grads[loss_id] = np.ones_like(loss.data)
        for entry in reversed(record.entries):
            g = grads[entry.output]
            if g is None or not record.needs_grad[entry.output]:
                continue
            rule = OPS[entry.kind]
            arrays = [record.nodes[i].data for i in entry.inputs]
            out = record.nodes[entry.output].data
            in_grads = rule.backward(g, arrays, out, entry.saved, entry.attrs)
            for nid, gi in zip(entry.inputs, in_grads):
                if gi is None or not record.needs_grad[nid]:
                    continue
                grads[nid] = gi if grads[nid] is None else grads[nid] + gi
            # free intermediate gradient once consumed
            grads[entry.output] = None if entry.output != loss_id else grads[entry.output]
    result = []
    for t in wrt:
        nid = record.lookup(t)
        g = grads[nid] if nid is not None else None
        result.append(np.zeros_like(t.data) if g is None else np.array(g, dtype=np.float64).reshape(t.shape))
    return result


# -------------------------
# elementwise arithmetic
# -------------------------
def _add_f(a, attrs):
    _check_broadcast("add", a[0], a[1])
    return a[0] + a[1], None


def _add_b(g, a, out, saved, attrs):
    return _unbroadcast(g, a[0].shape), _unbroadcast(g, a[1].shape)


register("add", 2)((_add_f, _add_b))


def _sub_f(a, attrs):
    _check_broadcast("sub", a[0], a[1])
    return a[0] - a[1], None


def _sub_b(g, a, out, saved, attrs):
    return _unbroadcast(g, a[0].shape), _unbroadcast(-g, a[1].shape)


register("sub", 2)((_sub_f, _sub_b))


def _mul_f(a, attrs):
    _check_broadcast("mul", a[0], a[1])
    return a[0] * a[1], None


def _mul_b(g, a, out, saved, attrs):
    return _unbroadcast(g * a[1], a[0].shape), _unbroadcast(g * a[0], a[1].shape)


register("mul", 2)((_mul_f, _mul_b))


def _scale_f(a, attrs):
    return a[0] * attrs["factor"], None


def _scale_b(g, a, out, saved, attrs):
    return (g * attrs["factor"],)


register("scale", 1)((_scale_f, _scale_b))


def _abs_f(a, attrs):
    return np.abs(a[0]), None


def _abs_b(g, a, out, saved, attrs):
    return (g * np.sign(a[0]),)


register("abs", 1)((_abs_f, _abs_b))


# -------------------------
# linear algebra
# -------------------------
def _matmul_f(a, attrs):
    x, y = a
    if x.ndim < 2 or y.ndim < 2:
        raise ContractViolation(f"matmul: inputs must be at least 2-D, got {list(x.shape)} and {list(y.shape)}")
    if x.shape[-1] != y.shape[-2]:
        raise ContractViolation(f"matmul: inner dimensions differ, {list(x.shape)} @ {list(y.shape)}")
    try:
        np.broadcast_shapes(x.shape[:-2], y.shape[:-2])
    except ValueError:
        raise ContractViolation(f"matmul: batch dimensions of {list(x.shape)} and {list(y.shape)} do not broadcast")
    return np.matmul(x, y), None


def _matmul_b(g, a, out, saved, attrs):
    x, y = a
    gx = np.matmul(g, np.swapaxes(y, -1, -2))
    gy = np.matmul(np.swapaxes(x, -1, -2), g)
    return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)


register("matmul", 2)((_matmul_f, _matmul_b))


def _linear_f(a, attrs):
    x, w = a[0], a[1]
    if w.ndim != 2:
        raise ContractViolation(f"linear: weight must be 2-D, got {list(w.shape)}")
    if x.ndim < 1 or x.shape[-1] != w.shape[0]:
        raise ContractViolation(f"linear: input {list(x.shape)} does not match weight {list(w.shape)}")
    out = np.matmul(x, w)
    if len(a) == 3:
        b = a[2]
        if b.shape != (w.shape[1],):
            raise ContractViolation(f"linear: bias {list(b.shape)} does not match weight {list(w.shape)}")
        out = out + b
    return out, None


def _linear_b(g, a, out, saved, attrs):
    x, w = a[0], a[1]
    gx = np.matmul(g, w.T)
    x2 = x.reshape(-1, w.shape[0])
    g2 = g.reshape(-1, w.shape[1])
    gw = x2.T @ g2
    if len(a) == 3:
        return gx, gw, g2.sum(axis=0)
    return gx, gw


register("linear", None)((_linear_f, _linear_b))


# -------------------------
# activations
# -------------------------
def _relu_f(a, attrs):
    return np.maximum(a[0], 0.0), None


def _relu_b(g, a, out, saved, attrs):
    return (g * (a[0] > 0.0),)


register("relu", 1)((_relu_f, _relu_b))


def _gelu_f(a, attrs):
    x = a[0]
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    return 0.5 * x * (1.0 + t), t


def _gelu_b(g, a, out, t, attrs):
    x = a[0]
    d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return (g * d,)


register("gelu", 1)((_gelu_f, _gelu_b))


def _tanh_f(a, attrs):
    return np.tanh(a[0]), None


def _tanh_b(g, a, out, saved, attrs):
    return (g * (1.0 - out * out),)


register("tanh", 1)((_tanh_f, _tanh_b))


def _sigmoid_f(a, attrs):
    return 0.5 * (1.0 + np.tanh(0.5 * a[0])), None


def _sigmoid_b(g, a, out, saved, attrs):
    return (g * out * (1.0 - out),)


register("sigmoid", 1)((_sigmoid_f, _sigmoid_b))


# -------------------------
# normalisation / regularisation
# -------------------------
def _layer_norm_f(a, attrs):
    x, gamma, beta = a
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ContractViolation(
            f"layer_norm: scale {list(gamma.shape)} / shift {list(beta.shape)} must match last axis of {list(x.shape)}")
    eps = attrs.get("eps", LN_EPS)
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv)


def _layer_norm_b(g, a, out, saved, attrs):
    x, gamma, beta = a
    xhat, inv = saved
    d = x.shape[-1]
    gxhat = g * gamma
    gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
    g2 = g.reshape(-1, d)
    ggamma = (g2 * xhat.reshape(-1, d)).sum(axis=0)
    gbeta = g2.sum(axis=0)
    return gx, ggamma, gbeta


register("layer_norm", 3)((_layer_norm_f, _layer_norm_b))


def _dropout_f(a, attrs):
    x = a[0]
    rate = attrs.get("rate", 0.0)
    if not 0.0 <= rate < 1.0:
        raise ContractViolation(f"dropout: rate must be in [0, 1), got {rate}")
    if not attrs.get("training", False) or rate == 0.0:
        return x, None
    rng = attrs.get("rng")
    if rng is None:
        raise ContractViolation("dropout: training mode needs an rng stream")
    keep = rng.random(x.shape) >= rate
    scale = keep / (1.0 - rate)
    return x * scale, scale


def _dropout_b(g, a, out, scale, attrs):
    return (g if scale is None else g * scale,)


register("dropout", 1)((_dropout_f, _dropout_b))


# -------------------------
# reductions
# -------------------------
def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axes: Tuple[int, ...], keepdims: bool) -> np.ndarray:
    if not keepdims:
        for ax in axes:
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def _mean_f(a, attrs):
    axes = _norm_axes(attrs.get("axis"), a[0].ndim)
    return a[0].mean(axis=axes, keepdims=attrs.get("keepdims", False)), None


def _mean_b(g, a, out, saved, attrs):
    x = a[0]
    axes = _norm_axes(attrs.get("axis"), x.ndim)
    count = 1
    for ax in axes:
        count *= x.shape[ax]
    return (_expand_reduced(g, x.shape, axes, attrs.get("keepdims", False)) / max(count, 1),)


register("mean", 1)((_mean_f, _mean_b))


def _sum_f(a, attrs):
    axes = _norm_axes(attrs.get("axis"), a[0].ndim)
    return a[0].sum(axis=axes, keepdims=attrs.get("keepdims", False)), None


def _sum_b(g, a, out, saved, attrs):
    x = a[0]
    axes = _norm_axes(attrs.get("axis"), x.ndim)
    return (np.array(_expand_reduced(g, x.shape, axes, attrs.get("keepdims", False))),)


register("sum", 1)((_sum_f, _sum_b))


# -------------------------
# layout
# -------------------------
def _concat_f(a, attrs):
    axis = attrs.get("axis", -1)
    if not a:
        raise ContractViolation("concat: needs at least one input")
    ref = a[0]
    ax = axis % ref.ndim
    for x in a[1:]:
        if x.ndim != ref.ndim or any(x.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax):
            raise ContractViolation(f"concat: shapes {_shapes(a)} disagree off axis {axis}")
    return np.concatenate(a, axis=ax), None


def _concat_b(g, a, out, saved, attrs):
    ax = attrs.get("axis", -1) % a[0].ndim
    splits = np.cumsum([x.shape[ax] for x in a])[:-1]
    return tuple(np.split(g, splits, axis=ax))


register("concat", None)((_concat_f, _concat_b))


def _permute_f(a, attrs):
    axes = tuple(attrs["axes"])
    if sorted(axes) != list(range(a[0].ndim)):
        raise ContractViolation(f"permute: axes {list(axes)} invalid for shape {list(a[0].shape)}")
    return np.ascontiguousarray(np.transpose(a[0], axes)), None


def _permute_b(g, a, out, saved, attrs):
    return (np.transpose(g, np.argsort(attrs["axes"])),)


register("permute", 1)((_permute_f, _permute_b))


def _reshape_f(a, attrs):
    shape = tuple(attrs["shape"])
    try:
        return a[0].reshape(shape), None
    except ValueError:
        raise ContractViolation(f"reshape: cannot reshape {list(a[0].shape)} into {list(shape)}")


def _reshape_b(g, a, out, saved, attrs):
    return (g.reshape(a[0].shape),)


register("reshape", 1)((_reshape_f, _reshape_b))


def _take_f(a, attrs):
    x = a[0]
    idx = np.asarray(attrs["indices"], dtype=np.int64)
    axis = attrs.get("axis", 0) % x.ndim
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[axis]):
        raise ContractViolation(f"take: indices out of range for axis {axis} of shape {list(x.shape)}")
    return np.take(x, idx, axis=axis), None


def _take_b(g, a, out, saved, attrs):
    x = a[0]
    idx = np.asarray(attrs["indices"], dtype=np.int64)
    axis = attrs.get("axis", 0) % x.ndim
    gx = np.zeros_like(x)
    np.add.at(np.moveaxis(gx, axis, 0), idx, np.moveaxis(g, axis, 0))
    return (gx,)


register("take", 1)((_take_f, _take_b))


def _segment_sum_f(a, attrs):
    x = a[0]
    ids = np.asarray(attrs["segment_ids"], dtype=np.int64)
    n = int(attrs["num_segments"])
    axis = attrs.get("axis", 0) % x.ndim
    if ids.shape != (x.shape[axis],):
        raise ContractViolation(f"segment_sum: {ids.size} segment ids for axis of length {x.shape[axis]}")
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ContractViolation(f"segment_sum: segment ids out of range [0, {n})")
    shape = list(x.shape)
    shape[axis] = n
    out = np.zeros(shape, dtype=np.float64)
    np.add.at(np.moveaxis(out, axis, 0), ids, np.moveaxis(x, axis, 0))
    return out, None


def _segment_sum_b(g, a, out, saved, attrs):
    ids = np.asarray(attrs["segment_ids"], dtype=np.int64)
    axis = attrs.get("axis", 0) % a[0].ndim
    return (np.take(g, ids, axis=axis),)


register("segment_sum", 1)((_segment_sum_f, _segment_sum_b))


# -------------------------
# functional surface
# -------------------------
TensorLike = Union[Tensor, np.ndarray, float]


def add(a: TensorLike, b: TensorLike) -> Tensor:
    return forward_op("add", [a, b])


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    return forward_op("sub", [a, b])


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    return forward_op("mul", [a, b])


def scale(x: TensorLike, factor: float) -> Tensor:
    return forward_op("scale", [x], {"factor": float(factor)})


def absolute(x: TensorLike) -> Tensor:
    return forward_op("abs", [x])


def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    return forward_op("matmul", [a, b])


def linear(x: TensorLike, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    inputs = [x, weight] if bias is None else [x, weight, bias]
    return forward_op("linear", inputs)


def relu(x: TensorLike) -> Tensor:
    return forward_op("relu", [x])


def gelu(x: TensorLike) -> Tensor:
    return forward_op("gelu", [x])


def tanh(x: TensorLike) -> Tensor:
    return forward_op("tanh", [x])


def sigmoid(x: TensorLike) -> Tensor:
    return forward_op("sigmoid", [x])


def layer_norm(x: TensorLike, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
    return forward_op("layer_norm", [x, gamma, beta], {"eps": eps})


def dropout(x: TensorLike, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    return forward_op("dropout", [x], {"rate": float(rate), "training": bool(training), "rng": rng})


def mean(x: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    return forward_op("mean", [x], {"axis": axis, "keepdims": keepdims})


def total(x: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    return forward_op("sum", [x], {"axis": axis, "keepdims": keepdims})


def concat(xs: Sequence[TensorLike], axis: int = -1) -> Tensor:
    return forward_op("concat", list(xs), {"axis": axis})


def permute(x: TensorLike, axes: Sequence[int]) -> Tensor:
    return forward_op("permute", [x], {"axes": tuple(axes)})


def reshape(x: TensorLike, shape: Sequence[int]) -> Tensor:
    return forward_op("reshape", [x], {"shape": tuple(shape)})


def take(x: TensorLike, indices: np.ndarray, axis: int = 0) -> Tensor:
    return forward_op("take", [x], {"indices": np.asarray(indices, dtype=np.int64), "axis": axis})


def segment_sum(x: TensorLike, segment_ids: np.ndarray, num_segments: int, axis: int = 0) -> Tensor:
    return forward_op("segment_sum", [x], {
        "segment_ids": np.asarray(segment_ids, dtype=np.int64),
        "num_segments": int(num_segments),
        "axis": axis,
    })
