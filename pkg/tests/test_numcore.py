import numpy as np
import pytest

from tgmm_lab.errors import ContractViolation, DataError, NumericFailure
from tgmm_lab.numcore import (MIN_LR, OptimizerState, ParameterSet, PlateauScheduler, Tensor, adamw_step,
                              backward, grad_check, load_checkpoint, load_into, lr_plateau_update, no_record,
                              recording, save_checkpoint)
from tgmm_lab.numcore import ops
from tgmm_lab.tools.gradcheck_suite import differentiable_kinds, op_cases


# ----------------------------------------------------------
# forward semantics
# ----------------------------------------------------------
def test_layer_norm_normalises_last_axis(rng):
    x = rng.normal(scale=10.0, size=(5, 7, 16))
    out = ops.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16))).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-10
    assert np.abs(out.var(axis=-1) - 1.0).max() < 1e-6


def test_sigmoid_and_gelu_values():
    x = np.array([-2.0, 0.0, 3.0])
    assert np.allclose(ops.sigmoid(x).data, 1.0 / (1.0 + np.exp(-x)), atol=1e-14)
    assert ops.gelu(np.array([0.0])).data[0] == 0.0
    assert abs(ops.gelu(np.array([3.0])).data[0] - 2.99636) < 1e-4


def test_dropout_eval_is_identity_and_training_scales(rng):
    x = rng.normal(size=(100, 50))
    assert np.array_equal(ops.dropout(x, 0.5, False).data, x)
    y = ops.dropout(x, 0.5, True, np.random.default_rng(0)).data
    kept = y != 0.0
    assert np.allclose(y[kept], 2.0 * x[kept])
    assert 0.4 < kept.mean() < 0.6


def test_dropout_training_without_rng_fails():
    with pytest.raises(ContractViolation):
        ops.dropout(np.ones(3), 0.3, True, None)


def test_segment_sum_and_take():
    x = np.arange(12, dtype=float).reshape(4, 3)
    out = ops.segment_sum(x, np.array([1, 0, 1, 2]), 3).data
    assert np.array_equal(out[0], x[1])
    assert np.array_equal(out[1], x[0] + x[2])
    assert np.array_equal(ops.take(x, np.array([3, 3]), axis=0).data, x[[3, 3]])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ContractViolation, match=r"\[2, 3\].*\[4, 5\]"):
        ops.matmul(np.ones((2, 3)), np.ones((4, 5)))


def test_non_finite_output_raises():
    with pytest.raises(NumericFailure):
        ops.scale(np.array([1e308]), 10.0)


# ----------------------------------------------------------
# backward
# ----------------------------------------------------------
def test_backward_simple_chain():
    a = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    with recording() as rec:
        loss = ops.total(ops.mul(a, a))
    (g,) = backward(rec, loss, [a])
    assert np.allclose(g, 2.0 * a.data)


def test_unreached_tensor_gets_zero_gradient():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones((2, 2)), requires_grad=True)
    with recording() as rec:
        loss = ops.total(a)
    ga, gb = backward(rec, loss, [a, b])
    assert np.array_equal(ga, np.ones(3))
    assert np.array_equal(gb, np.zeros((2, 2)))


def test_non_scalar_loss_rejected():
    a = Tensor(np.ones(3), requires_grad=True)
    with recording() as rec:
        y = ops.scale(a, 2.0)
    with pytest.raises(ContractViolation):
        backward(rec, y, [a])


def test_no_record_suspends_recording():
    a = Tensor(np.ones(3), requires_grad=True)
    with recording() as rec:
        with no_record():
            ops.scale(a, 2.0)
        assert len(rec) == 0
        ops.scale(a, 2.0)
    assert len(rec) == 1


def test_broadcast_gradient_reduces_to_input_shape():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    row = Tensor(np.ones(4), requires_grad=True)
    with recording() as rec:
        loss = ops.total(ops.add(a, row))
    ga, gr = backward(rec, loss, [a, row])
    assert ga.shape == (3, 4)
    assert np.array_equal(gr, np.full(4, 3.0))


def test_every_differentiable_op_has_a_check_case():
    assert set(differentiable_kinds()) <= set(op_cases(0))


@pytest.mark.parametrize("kind", sorted(op_cases(0)))
def test_op_gradients_match_finite_differences(kind):
    f, params = op_cases(0)[kind]
    assert grad_check(f, params) < 1e-4


def test_layer_norm_gradient_tight(rng):
    x = Tensor(rng.normal(scale=4.0, size=(3, 6)), requires_grad=True)
    gamma = Tensor(rng.normal(size=6), requires_grad=True)
    beta = Tensor(rng.normal(size=6), requires_grad=True)
    R = rng.normal(size=(3, 6))
    err = grad_check(lambda: ops.total(ops.mul(ops.layer_norm(x, gamma, beta), R)), [x, gamma, beta])
    assert err < 1e-6


def test_grad_check_restores_parameters(rng):
    x = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    before = x.data.copy()
    grad_check(lambda: ops.total(ops.tanh(x)), [x])
    assert np.array_equal(x.data, before)


# ----------------------------------------------------------
# AdamW and learning-rate schedule
# ----------------------------------------------------------
def _one_param(value):
    return [Tensor(np.array(value, dtype=float), requires_grad=True, name="w")]


def test_adamw_first_step_magnitude():
    params = _one_param([1.0, -1.0])
    st = OptimizerState.for_params(params, lr=0.1, weight_decay=0.0)
    adamw_step(params, [np.array([0.5, -2.0])], st)
    # bias-corrected first step is lr * sign(g)
    assert np.allclose(params[0].data, [0.9, -0.9], atol=1e-6)
    assert st.t == 1


def test_adamw_decoupled_weight_decay():
    params = _one_param([2.0])
    st = OptimizerState.for_params(params, lr=0.1, weight_decay=0.5)
    adamw_step(params, [np.zeros(1)], st)
    assert np.allclose(params[0].data, [2.0 - 0.1 * 0.5 * 2.0])


def test_adamw_zero_lr_keeps_params_but_moves_moments():
    params = _one_param([1.0, 2.0])
    st = OptimizerState.for_params(params, lr=0.0)
    adamw_step(params, [np.array([1.0, 1.0])], st)
    assert np.array_equal(params[0].data, [1.0, 2.0])
    assert np.allclose(st.m[0], 0.1)


def test_adamw_rejects_non_finite_gradient_without_changes():
    params = _one_param([1.0])
    st = OptimizerState.for_params(params, lr=0.1)
    with pytest.raises(NumericFailure):
        adamw_step(params, [np.array([np.nan])], st)
    assert params[0].data[0] == 1.0
    assert st.t == 0 and st.m[0][0] == 0.0


def test_plateau_halves_and_floors():
    sched = PlateauScheduler(factor=0.5, min_lr=MIN_LR, patience=2)
    lr = 1e-3
    lr = lr_plateau_update(sched, 1.0, lr)
    for _ in range(40):
        lr = lr_plateau_update(sched, 1.0, lr)
    assert lr == MIN_LR


def test_plateau_reduces_after_patience_epochs():
    sched = PlateauScheduler(patience=2)
    lrs = [lr_plateau_update(sched, v, 1e-3) for v in (1.0, 1.0)]
    assert lrs == [1e-3, 1e-3]
    assert lr_plateau_update(sched, 1.0, 1e-3) == 5e-4


# ----------------------------------------------------------
# checkpoints
# ----------------------------------------------------------
def _small_set(seed=0):
    ps = ParameterSet()
    ps.add_linear("fc", 3, 4, np.random.default_rng(seed))
    ps.add_norm("norm", 4)
    return ps


def test_checkpoint_restores_exact_values(tmp_path):
    ps = _small_set(0)
    save_checkpoint(ps, tmp_path / "ck")
    other = _small_set(1)
    load_into(other, tmp_path / "ck")
    for name in ps.names():
        assert np.array_equal(ps[name].data, other[name].data)
    assert list(load_checkpoint(tmp_path / "ck")) == ps.names()


def test_truncated_checkpoint_is_data_error(tmp_path):
    d = save_checkpoint(_small_set(), tmp_path / "ck")
    blob = (d / "params.bin").read_bytes()
    (d / "params.bin").write_bytes(blob[:-8])
    with pytest.raises(DataError):
        load_checkpoint(d)


def test_checkpoint_name_mismatch(tmp_path):
    save_checkpoint(_small_set(), tmp_path / "ck")
    ps = ParameterSet()
    ps.add("other", np.zeros(3))
    with pytest.raises(DataError):
        load_into(ps, tmp_path / "ck")
