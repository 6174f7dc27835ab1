import numpy as np
import pandas as pd
import pytest

from tgmm_lab.errors import ContractViolation, DataError
from tgmm_lab.numcore import OptimizerState
from tgmm_lab.tools.dataset import generate_mso
from tgmm_lab.tools.graphpart import grid_graph
from tgmm_lab.tools.missing import inject_point
from tgmm_lab.trainer import (HISTORY_COLUMNS, EarlyStopping, RunConfig, Trainer, evaluate, load_run,
                              normalized_loss, predict_export, predict_windows, train)
from tgmm_lab.utils.io import load_json

# mso8 has T=120: train [0, 84), val [84, 96), test [96, 120)
TINY = {
    "data": {"window": 4, "horizon": 2},
    "model": {"node_dim": 8, "patch_dim": 8, "node_mixer_layers": 1, "patch_mixer_layers": 1, "gnn_layers": 1,
              "num_patches": 2},
    "lstm": {"hidden": 8, "layers": 1},
    "train": {"max_epochs": 2, "batch_size": 8, "seed": 0, "threads": 1},
}
NO_DROPOUT = {"dropout_gnn": 0.0, "dropout_mixer": 0.0, "dropout_readout": 0.0}


def _cfg(**overrides):
    return RunConfig.from_layers(TINY, overrides)


@pytest.fixture
def tgmm_run(tmp_path, mso8, part8):
    result = train(mso8, part8, _cfg(), tmp_path / "run")
    return result


def test_run_writes_artifacts(tgmm_run):
    d = tgmm_run.run_dir
    for name in ("config.json", "partition.json", "history.csv", "metrics.json", "timing.json"):
        assert (d / name).exists(), name
    assert (d / "best").is_dir()
    assert tgmm_run.epochs_run == 2
    assert 0 <= tgmm_run.best_epoch < 2


def test_history_columns_and_lr(tgmm_run):
    hist = pd.read_csv(tgmm_run.run_dir / "history.csv", float_precision="round_trip")
    assert list(hist.columns) == HISTORY_COLUMNS
    assert hist["epoch"].tolist() == [0, 1]
    assert hist["lr"].iloc[0] == 1e-3
    assert (hist["seconds"] == 0.0).all()
    assert np.isfinite(hist[["train_loss", "val_loss"]].to_numpy()).all()


def test_metrics_cover_every_split(tgmm_run):
    m = load_json(tgmm_run.run_dir / "metrics.json")
    for split in ("train", "val", "test"):
        assert m[split]["mae"] >= 0.0
        assert m["persistence"][split]["count"] == m[split]["count"]
    assert len(m["test_horizon_mae"]) == 2
    assert m["model"] == "tgmm"
    assert m["best_val_loss"] == tgmm_run.best_val_loss


def test_reruns_are_byte_identical(tmp_path, mso8, part8):
    a = train(mso8, part8, _cfg(), tmp_path / "a")
    b = train(mso8, part8, _cfg(), tmp_path / "b")
    for name in ("history.csv", "metrics.json", "config.json"):
        assert (a.run_dir / name).read_bytes() == (b.run_dir / name).read_bytes()
    assert (a.run_dir / "best" / "params.bin").read_bytes() == (b.run_dir / "best" / "params.bin").read_bytes()


def test_thread_count_does_not_change_results(tmp_path, mso8, part8):
    a = train(mso8, part8, _cfg(), tmp_path / "a")
    b = train(mso8, part8, _cfg(train={"threads": 3}), tmp_path / "b")
    assert (a.run_dir / "history.csv").read_bytes() == (b.run_dir / "history.csv").read_bytes()


def test_wall_time_opt_in(tmp_path, mso8, part8):
    r = train(mso8, part8, _cfg(train={"max_epochs": 1, "record_wall_time": True}), tmp_path / "r")
    hist = pd.read_csv(r.run_dir / "history.csv")
    assert (hist["seconds"] > 0.0).all()


def test_gradient_accumulation_matches_large_batch(tmp_path, mso8, part8):
    big = Trainer(_cfg(model=NO_DROPOUT), mso8, tmp_path / "big", part8)
    small = Trainer(_cfg(model=NO_DROPOUT, train={"batch_size": 4, "accum_steps": 2}), mso8, tmp_path / "small",
                    part8)
    losses = []
    for tr in (big, small):
        params = tr.model.params.tensors()
        losses.append(tr.train_epoch(0, OptimizerState.for_params(params, lr=1e-3)))
    assert losses[0] == pytest.approx(losses[1], rel=1e-12)
    for name in big.model.params.names():
        assert np.allclose(big.model.params[name].data, small.model.params[name].data, rtol=1e-8, atol=1e-10)


def test_fclstm_run(tmp_path, mso8):
    r = train(mso8, None, _cfg(train={"model": "fclstm", "max_epochs": 1}), tmp_path / "lstm")
    assert not (r.run_dir / "partition.json").exists()
    assert r.metrics["model"] == "fclstm"
    assert r.metrics["test"]["count"] == 19 * 8 * 2


def test_window_longer_than_val_split(tmp_path, mso8, part8):
    with pytest.raises(ContractViolation, match="validation"):
        Trainer(_cfg(data={"window": 8, "horizon": 8}), mso8, tmp_path / "r", part8)


def test_early_stopping_sequence():
    stop = EarlyStopping(patience=2, min_delta=0.1)
    assert stop.update(0, 1.0)
    assert not stop.update(1, 0.95)
    assert stop.update(2, 0.5)
    assert not stop.update(3, 0.45)
    assert not stop.should_stop
    assert not stop.update(4, 0.44)
    assert stop.should_stop
    assert (stop.best, stop.best_epoch) == (0.5, 2)


def test_early_stop_ends_training(tmp_path, mso8, part8):
    # lr 0 never improves after the first epoch
    r = train(mso8, part8, _cfg(train={"lr": 0.0, "max_epochs": 20, "patience": 2}), tmp_path / "r")
    assert r.epochs_run == 3
    assert r.best_epoch == 0


# ----------------------------------------------------------
# reloading, evaluation and export
# ----------------------------------------------------------
def test_evaluate_reproduces_training_metrics(tgmm_run, mso8):
    out = evaluate(tgmm_run.run_dir, mso8, "test", "eval-mask")
    assert out["windows"] == 19
    assert out["mae"] == pytest.approx(tgmm_run.metrics["test"]["mae"], rel=1e-12)
    assert len(out["horizon_mae"]) == 2
    assert out["persistence"]["count"] == out["count"]


def test_evaluate_rejects_unknown_policy(tgmm_run, mso8):
    with pytest.raises(ContractViolation):
        evaluate(tgmm_run.run_dir, mso8, "test", "everything")


def test_load_run_checks_node_count(tgmm_run):
    other = generate_mso(grid_graph(10), 2, 120, 0.0, seed=0)
    with pytest.raises((ContractViolation, DataError)):
        load_run(tgmm_run.run_dir, other)


def test_missing_run_dir(tmp_path, mso8):
    with pytest.raises(DataError):
        evaluate(tmp_path / "nope", mso8)


def test_predict_export_rows(tgmm_run, mso8, tmp_path):
    path = predict_export(tgmm_run.run_dir, mso8, tmp_path / "pred.csv")
    df = pd.read_csv(path, float_precision="round_trip")
    assert list(df.columns) == ["node", "timestep", "horizon_step", "channel", "y_true", "y_pred", "observed"]
    assert len(df) == 19 * 8 * 2 * 1
    assert df["timestep"].min() == 96 + 4
    assert df["timestep"].max() == 119
    assert (df["observed"] == 1).all()
    row = df.iloc[0]
    assert row["y_true"] == mso8.values[int(row["node"]), int(row["timestep"]), int(row["channel"])]


def test_predict_export_uses_eval_truth(tmp_path, mso8, part8):
    ds = inject_point(mso8, 0.3, seed=6)
    r = train(ds, part8, _cfg(train={"max_epochs": 1}), tmp_path / "run")
    df = pd.read_csv(predict_export(r.run_dir, ds, tmp_path / "pred.csv"), float_precision="round_trip")
    hidden = df[df["observed"] == 0]
    assert len(hidden) > 0
    assert hidden["y_true"].notna().all()
    truth = ds.eval_truth[hidden["node"].to_numpy(), hidden["timestep"].to_numpy(), hidden["channel"].to_numpy()]
    assert np.array_equal(hidden["y_true"].to_numpy(), truth)


def test_best_checkpoint_reproduces_recorded_val_loss(tmp_path, mso8, part8):
    ds = inject_point(mso8, 0.2, seed=3)
    r = train(ds, part8, _cfg(train={"max_epochs": 4}), tmp_path / "run")
    hist = pd.read_csv(r.run_dir / "history.csv", float_precision="round_trip")
    recorded = hist.loc[hist["epoch"] == r.best_epoch, "val_loss"].item()
    run = load_run(r.run_dir, ds)
    pairs = predict_windows(run.model, run.windows["val"], run.cfg.train.eval_batch_size, 1)
    assert abs(normalized_loss(pairs, "train-mask") - recorded) <= 1e-10
    assert r.best_val_loss == recorded
