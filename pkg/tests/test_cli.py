import json
import logging
import re

import pandas as pd
import pytest

from tgmm_lab.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, dispatch
from tgmm_lab.tools.dataset import load_dataset

TINY_CONFIG = {
    "data": {"window": 4, "horizon": 2},
    "model": {"node_dim": 8, "patch_dim": 8, "node_mixer_layers": 1, "patch_mixer_layers": 1, "gnn_layers": 1},
    "train": {"max_epochs": 1, "batch_size": 8},
}


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


@pytest.fixture
def data_dir(tmp_path, capsys):
    out = tmp_path / "mso"
    code = dispatch(["generate-mso", "--nodes", "8", "--steps", "120", "--oscillators", "2", "--noise", "0",
                     "--seed", "3", "--out", str(out)])
    assert code == EXIT_OK
    capsys.readouterr()
    return out


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY_CONFIG))
    return p


def test_generate_prints_summary(tmp_path, capsys):
    out = tmp_path / "d"
    assert dispatch(["generate-mso", "--nodes", "9", "--steps", "50", "--seed", "1", "--out", str(out)]) == EXIT_OK
    summary = _json_out(capsys)
    assert summary["num_nodes"] == 9
    assert load_dataset(out).num_timesteps == 50


def test_inject_then_partition(data_dir, tmp_path, capsys):
    masked = tmp_path / "masked"
    assert dispatch(["inject", "--in", str(data_dir), "--out", str(masked), "--pattern", "point", "--p", "0.2",
                     "--seed", "1"]) == EXIT_OK
    capsys.readouterr()
    ds = load_dataset(masked)
    assert ds.synthetic_mask.any()
    assert ds.meta["injection"]["pattern"] == "point"

    assert dispatch(["partition", "--in", str(masked), "--patches", "2", "--seed", "0"]) == EXIT_OK
    stats = _json_out(capsys)
    assert sum(stats["sizes"]) == 8
    assert (masked / "partition.json").exists()


def test_train_eval_predict(data_dir, config_path, tmp_path, capsys):
    run = tmp_path / "run"
    assert dispatch(["train", "--data", str(data_dir), "--config", str(config_path), "--patches", "2",
                     "--seed", "0", "--out", str(run)]) == EXIT_OK
    summary = _json_out(capsys)
    assert summary["epochs_run"] == 1
    assert summary["test"]["count"] == 19 * 8 * 2

    assert dispatch(["eval", "--run", str(run), "--data", str(data_dir), "--split", "val"]) == EXIT_OK
    metrics = _json_out(capsys)
    assert metrics["split"] == "val"
    assert metrics["windows"] == 7

    assert dispatch(["predict", "--run", str(run), "--data", str(data_dir)]) == EXIT_OK
    assert len(pd.read_csv(run / "predictions_test.csv")) == 19 * 8 * 2


def test_train_missing_data_dir(tmp_path):
    assert dispatch(["train", "--data", str(tmp_path / "absent")]) == EXIT_DATA


def test_unknown_flag_is_usage_error():
    assert dispatch(["train", "--bogus"]) == EXIT_USAGE


def test_missing_command_is_usage_error():
    assert dispatch([]) == EXIT_USAGE


def test_unknown_config_key(data_dir, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"train": {"learning_rate": 0.1}}))
    assert dispatch(["train", "--data", str(data_dir), "--config", str(p)]) == EXIT_USAGE


def test_invalid_config_value(data_dir, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"train": {"batch_size": 0}}))
    assert dispatch(["train", "--data", str(data_dir), "--config", str(p)]) == EXIT_USAGE


def test_partition_flag_needs_tgmm(data_dir, config_path, capsys):
    assert dispatch(["partition", "--in", str(data_dir), "--patches", "2"]) == EXIT_OK
    capsys.readouterr()
    code = dispatch(["train", "--data", str(data_dir), "--config", str(config_path), "--model", "fclstm",
                     "--partition", str(data_dir / "partition.json")])
    assert code == EXIT_USAGE


def test_help_exits_zero(capsys):
    assert dispatch(["--help"]) == EXIT_OK
    assert "gradcheck" in capsys.readouterr().out


def test_gradcheck_ops(capsys):
    assert dispatch(["gradcheck", "--module", "ops", "--seed", "0"]) == EXIT_OK
    table = capsys.readouterr().out
    assert "op:matmul" in table
    assert "FAIL" not in table


HELP_FLAGS = {
    "generate-mso": ["--nodes", "--steps", "--oscillators", "--noise", "--graph", "--graph-seed", "--mean-degree",
                     "--seed", "--config", "--out", "--threads"],
    "inject": ["--in", "--out", "--pattern", "--p", "--rate", "--duration", "--events", "--radius", "--seed",
               "--threads"],
    "partition": ["--in", "--patches", "--imbalance", "--seed", "--out", "--threads"],
    "train": ["--data", "--config", "--model", "--out", "--seed", "--epochs", "--batch-size", "--accum", "--lr",
              "--patience", "--threads", "--patches", "--partition", "--record-wall-time"],
    "eval": ["--run", "--data", "--split", "--policy", "--threads"],
    "predict": ["--run", "--data", "--out", "--split", "--threads"],
    "gradcheck": ["--module", "--seed", "--tol", "--threads"],
}


@pytest.fixture
def lab_log(caplog):
    # the package logger does not propagate, so hook caplog onto it directly
    logger = logging.getLogger("tgmm_lab")
    logger.addHandler(caplog.handler)
    yield caplog
    logger.removeHandler(caplog.handler)


@pytest.mark.parametrize("command", sorted(HELP_FLAGS))
def test_help_lists_every_flag(command, capsys):
    assert dispatch([command, "--help"]) == EXIT_OK
    out = capsys.readouterr().out
    listed = set(re.findall(r"(--[a-z][a-z-]*)", out)) - {"--help"}
    assert listed == set(HELP_FLAGS[command])


def test_every_subcommand_accepts_threads(data_dir, config_path, tmp_path, capsys):
    masked = tmp_path / "masked"
    run = tmp_path / "run"
    steps = [
        ["generate-mso", "--nodes", "4", "--steps", "40", "--seed", "1", "--out", str(tmp_path / "g")],
        ["inject", "--in", str(data_dir), "--out", str(masked), "--pattern", "block_t", "--seed", "1"],
        ["partition", "--in", str(masked), "--patches", "2", "--seed", "1"],
        ["train", "--data", str(masked), "--config", str(config_path), "--partition", str(masked / "partition.json"),
         "--seed", "1", "--out", str(run)],
        ["eval", "--run", str(run), "--data", str(masked)],
        ["predict", "--run", str(run), "--data", str(masked)],
        ["gradcheck", "--module", "ops", "--seed", "0"],
    ]
    for argv in steps:
        assert dispatch(argv + ["--threads", "1"]) == EXIT_OK, argv[0]
        capsys.readouterr()
    assert (run / "predictions_test.csv").exists()


def test_predict_threads_do_not_change_output(data_dir, config_path, tmp_path, capsys):
    run = tmp_path / "run"
    assert dispatch(["train", "--data", str(data_dir), "--config", str(config_path), "--patches", "2",
                     "--seed", "0", "--out", str(run)]) == EXIT_OK
    one, three = tmp_path / "one.csv", tmp_path / "three.csv"
    for out, threads in ((one, "1"), (three, "3")):
        assert dispatch(["predict", "--run", str(run), "--data", str(data_dir), "--out", str(out),
                         "--threads", threads]) == EXIT_OK
    assert one.read_bytes() == three.read_bytes()


def test_zero_threads_is_usage_error(data_dir):
    assert dispatch(["partition", "--in", str(data_dir), "--threads", "0"]) == EXIT_USAGE


def test_unreadable_values_file_names_path(data_dir, lab_log):
    values = data_dir / "values.csv"
    values.unlink()
    values.mkdir()
    assert dispatch(["partition", "--in", str(data_dir)]) == EXIT_DATA
    assert str(values) in lab_log.text


def test_malformed_values_file_names_path(data_dir, lab_log):
    values = data_dir / "values.csv"
    values.write_text("n0_c0,n1_c0\n1,2\n3,4,5,6\n")
    assert dispatch(["inject", "--in", str(data_dir), "--out", str(data_dir / "x"), "--pattern", "point"]) == EXIT_DATA
    assert str(values) in lab_log.text


def test_unreadable_meta_names_path(data_dir, lab_log):
    meta = data_dir / "meta.json"
    meta.unlink()
    meta.mkdir()
    assert dispatch(["eval", "--run", str(data_dir), "--data", str(data_dir)]) == EXIT_DATA
    assert str(meta) in lab_log.text
