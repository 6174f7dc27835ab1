import numpy as np
import pandas as pd
import pytest

from tgmm_lab.errors import ContractViolation, DataError
from tgmm_lab.tools.dataset import (DataConfig, SpatioTemporalDataset, dataset_summary, generate_mso,
                                    generate_mso_from_config, load_dataset, missing_profile, save_dataset,
                                    smooth_over_graph, superpose_sinusoids)
from tgmm_lab.tools.graphpart import SensorGraph, grid_graph
from tgmm_lab.tools.missing import (bfs_ball, block_drop, inject, inject_block_st, inject_block_t,
                                    inject_point)
from tgmm_lab.tools.windows import (Normalizer, chronological_split, impute_last, make_windows, prepare,
                                    stack_windows)


# ----------------------------------------------------------
# dataset
# ----------------------------------------------------------
def test_mso_shapes_and_full_observation(mso8):
    assert mso8.values.shape == (8, 120, 1)
    assert mso8.mask.all()
    assert not mso8.synthetic_mask.any()
    assert np.isfinite(mso8.values).all()


def test_mso_is_seeded(grid8):
    a = generate_mso(grid8, 3, 50, 0.1, seed=9)
    b = generate_mso(grid8, 3, 50, 0.1, seed=9)
    c = generate_mso(grid8, 3, 50, 0.1, seed=10)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_mso_from_config_uses_graph_kind():
    ds = generate_mso_from_config(DataConfig(graph_kind="random-geometric", num_nodes=30, num_timesteps=40), seed=1)
    assert ds.num_nodes == 30
    assert ds.meta["graph"]["kind"] == "random-geometric"


def test_smoothing_keeps_constant_fields(grid8):
    field_ = np.full((8, 3), 2.5)
    assert np.allclose(smooth_over_graph(field_, grid8, 4), 2.5)


@pytest.mark.parametrize("seed", range(50))
def test_smoothing_shrinks_edge_differences(seed):
    g = grid_graph(16 + seed % 10)
    raw = np.random.default_rng(seed).uniform(0.0, 2.0, size=(g.num_nodes, 5))
    smooth = smooth_over_graph(raw, g, 3)
    src, dst = g.edges[:, 0], g.edges[:, 1]
    assert np.abs(smooth[src] - smooth[dst]).mean() < np.abs(raw[src] - raw[dst]).mean()


def test_single_unit_sine_quarter_period():
    values = superpose_sinusoids(np.ones((1, 1)), np.array([1.0 / 24]), np.zeros((1, 1)), 30)
    assert values[0, 6] == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(values[0, :6], values[0, 24:30], atol=1e-12)


def test_values_hidden_under_mask(grid8):
    values = np.ones((8, 10, 1))
    mask = np.ones((8, 10, 1), dtype=bool)
    mask[0, 0, 0] = False
    ds = SpatioTemporalDataset(values, mask, None, grid8)
    assert np.isnan(ds.values[0, 0, 0])
    assert np.isnan(ds.eval_truth).all()


def test_bad_data_config():
    with pytest.raises(ContractViolation):
        DataConfig(graph_kind="ring")
    with pytest.raises(ContractViolation):
        DataConfig(window=0)


def test_save_load_roundtrip_is_exact(tmp_path, mso8):
    ds = inject_point(mso8, 0.2, seed=4)
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert np.array_equal(back.mask, ds.mask)
    assert np.array_equal(back.values[ds.mask], ds.values[ds.mask])
    assert np.array_equal(back.synthetic_mask, ds.synthetic_mask)
    assert np.array_equal(back.eval_truth[ds.synthetic_mask], ds.eval_truth[ds.synthetic_mask])
    assert back.graph == ds.graph


def test_missing_dir_names_path(tmp_path):
    with pytest.raises(DataError, match="nowhere"):
        load_dataset(tmp_path / "nowhere")


def test_corrupt_mask_is_data_error(tmp_path, mso8):
    d = save_dataset(mso8, tmp_path / "d")
    df = pd.read_csv(d / "mask.csv")
    df.iloc[0, 0] = 7
    df.to_csv(d / "mask.csv", index=False)
    with pytest.raises(DataError):
        load_dataset(d)


def test_missing_profile_counts(mso8):
    ds = inject_point(mso8, 0.3, seed=0)
    prof = missing_profile(ds, {"all": (0, ds.num_timesteps)})
    assert prof["all"]["original_missing"] == 0.0
    assert abs(prof["all"]["synthetic"] + prof["all"]["observed"] - 1.0) < 1e-12
    summary = dataset_summary(ds, {"all": (0, ds.num_timesteps)})
    assert summary["num_nodes"] == 8
    assert "missing_fraction" in summary


# ----------------------------------------------------------
# missing patterns
# ----------------------------------------------------------
def test_point_bookkeeping(mso8):
    ds = inject_point(mso8, 0.25, seed=1)
    hidden = mso8.mask & ~ds.mask
    assert hidden.any()
    assert np.array_equal(hidden, ds.synthetic_mask)
    assert np.array_equal(ds.eval_truth[hidden], mso8.values[hidden])


def _blank(num_nodes, num_timesteps):
    values = np.zeros((num_nodes, num_timesteps, 1))
    return SpatioTemporalDataset(values, np.ones(values.shape, dtype=bool), None, grid_graph(num_nodes))


def test_point_count_in_binomial_band():
    # 10,000 entries at p=0.25: mean 2500, sd sqrt(1875)
    base = _blank(50, 200)
    counts = [int(inject_point(base, 0.25, seed=s).synthetic_mask.sum()) for s in range(10)]
    assert 2370 <= counts[0] <= 2630
    assert abs(np.mean(counts) - 2500.0) <= 4 * np.sqrt(1875.0 / 10)


def test_point_one_hides_everything(mso8):
    ds = inject_point(mso8, 1.0, seed=0)
    assert not ds.mask.any()
    assert np.array_equal(ds.eval_truth, mso8.values)


def test_block_t_fraction_matches_rate():
    base = _blank(50, 2000)
    fractions = [inject_block_t(base, 2.0, (20, 40), seed=s).synthetic_mask.mean() for s in range(10)]
    # rate / 1000 * mean duration
    assert 0.04 <= np.mean(fractions) <= 0.08
    assert all(0.03 <= f <= 0.09 for f in fractions)


def test_block_t_zero_rate_is_identity(mso8):
    assert np.array_equal(inject_block_t(mso8, 0.0, seed=1).mask, mso8.mask)


def test_point_zero_probability_is_identity(mso8):
    ds = inject_point(mso8, 0.0, seed=1)
    assert np.array_equal(ds.mask, mso8.mask)


def test_point_only_hides_observed(grid8):
    mask = np.ones((8, 30, 1), dtype=bool)
    mask[:, :5] = False
    base = SpatioTemporalDataset(np.ones((8, 30, 1)), mask, None, grid8)
    ds = inject_point(base, 1.0, seed=0)
    assert not ds.synthetic_mask[:, :5].any()
    assert ds.synthetic_mask[:, 5:].all()


def test_point_node_streams_independent_of_node_count(grid8):
    small = generate_mso(grid8, 2, 60, 0.0, seed=0)
    big = generate_mso(grid_graph(12), 2, 60, 0.0, seed=0)
    a = inject_point(small, 0.3, seed=5).mask
    b = inject_point(big, 0.3, seed=5).mask
    assert np.array_equal(a, b[:8])


def test_block_drop_clips_at_end():
    drop = block_drop((2, 10, 1), [1], 8, 5)
    assert drop[1, 8:].all() and not drop[1, :8].any() and not drop[0].any()


def test_block_t_runs_are_contiguous(mso8):
    ds = inject_block_t(mso8, rate=20.0, duration=(5, 5), seed=2)
    hidden = mso8.mask & ~ds.mask
    assert hidden.any()
    # every channel of a node goes down together
    assert np.array_equal(hidden[..., 0], hidden.all(axis=-1))


def test_block_t_duration_bounds(mso8):
    with pytest.raises(ContractViolation):
        inject_block_t(mso8, 2.0, duration=(0, 5))
    with pytest.raises(ContractViolation):
        inject_block_t(mso8, 2.0, duration=(10, 5))


def test_bfs_ball(grid8):
    assert bfs_ball(grid8, 4, 0) == [4]
    assert bfs_ball(grid8, 4, 1) == [1, 3, 4, 5, 7]


def test_block_st_hides_neighbourhoods(mso8):
    ds = inject_block_st(mso8, events=1, radius=1, duration=(10, 10), seed=3)
    hidden = (mso8.mask & ~ds.mask)[..., 0]
    nodes = np.flatnonzero(hidden.any(axis=1))
    assert len(nodes) >= 2
    # one event: all affected nodes share the same outage window
    rows = hidden[nodes]
    assert (rows == rows[0]).all()


def test_block_st_per_split_events(mso8):
    splits = {k: tuple(v) for k, v in chronological_split(mso8.num_timesteps).items()}
    ds = inject_block_st(mso8, events=1, radius=0, duration=(3, 3), seed=0, splits=splits)
    assert ds.synthetic_mask.sum() > 0
    assert ds.synthetic_mask.sum() <= 3 * 3


def test_block_st_on_path_by_hand():
    g = SensorGraph.from_edges(6, [(i, i + 1) for i in range(5)])
    drop = block_drop((6, 12, 1), bfs_ball(g, 2, 1), 4, 4)
    assert np.flatnonzero(drop.any(axis=(1, 2))).tolist() == [1, 2, 3]
    assert np.flatnonzero(drop[2, :, 0]).tolist() == [4, 5, 6, 7]


def test_block_st_large_radius_covers_network(mso8):
    ds = inject_block_st(mso8, events=1, radius=10, duration=(6, 6), seed=4)
    hidden = ds.synthetic_mask[..., 0]
    cols = np.flatnonzero(hidden.any(axis=0))
    assert hidden[:, cols].all()
    assert 1 <= len(cols) <= 6


@pytest.mark.parametrize("name", ["train", "val", "test"])
def test_block_st_blocks_stay_in_their_split(mso8, name):
    a, b = chronological_split(mso8.num_timesteps)[name]
    # outages up to 40 steps; val is only 12 steps long
    ds = inject_block_st(mso8, events=5, radius=1, duration=(10, 40), seed=7, splits={name: (a, b)})
    hidden = ds.synthetic_mask.any(axis=(0, 2))
    assert hidden[a:b].any()
    assert not hidden[:a].any() and not hidden[b:].any()


def test_block_drop_clips_at_given_end():
    drop = block_drop((1, 20, 1), [0], 5, 10, end=8)
    assert np.flatnonzero(drop[0, :, 0]).tolist() == [5, 6, 7]


def test_inject_unknown_pattern(mso8):
    with pytest.raises(ContractViolation):
        inject(mso8, "burst")


# ----------------------------------------------------------
# splits, imputation, normalisation, windows
# ----------------------------------------------------------
@pytest.mark.parametrize("T,a,b", [(10, 7, 8), (100, 70, 80), (1000, 700, 800), (33, 23, 26)])
def test_chronological_split_floor(T, a, b):
    s = chronological_split(T)
    assert tuple(s["train"]) == (0, a)
    assert tuple(s["val"]) == (a, b)
    assert tuple(s["test"]) == (b, T)


def test_split_too_short():
    with pytest.raises(ContractViolation):
        chronological_split(9)


def test_impute_last_forward_fills():
    values = np.array([[[np.nan], [1.0], [np.nan], [np.nan], [4.0], [np.nan]]])
    mask = ~np.isnan(values)
    out = impute_last(values, mask, fill_value=-9.0)
    assert out[0, :, 0].tolist() == [-9.0, 1.0, 1.0, 1.0, 4.0, 4.0]


def _series(row):
    values = np.array(row, dtype=np.float64).reshape(1, -1, 1)
    return values, ~np.isnan(values)


def test_impute_last_leading_gap_defaults_to_zero():
    values, mask = _series([np.nan, 5.0, np.nan, 7.0])
    assert impute_last(values, mask)[0, :, 0].tolist() == [0.0, 5.0, 5.0, 7.0]


def test_impute_last_edge_series():
    full, full_mask = _series([1.0, 2.0, 3.0])
    assert np.array_equal(impute_last(full, full_mask), full)
    empty, empty_mask = _series([np.nan] * 4)
    assert impute_last(empty, empty_mask)[0, :, 0].tolist() == [0.0] * 4


def test_impute_last_is_idempotent(mso8):
    ds = inject_block_t(inject_point(mso8, 0.3, seed=1), 20.0, (5, 15), seed=1)
    once = impute_last(ds)
    assert np.array_equal(impute_last(once, ds.mask), once)
    assert np.array_equal(once[ds.mask], ds.values[ds.mask])
    assert np.isfinite(once).all()


def test_impute_last_raw_units_with_normalizer(mso8):
    mask = mso8.mask.copy()
    mask[:3, :5] = False
    ds = SpatioTemporalDataset(mso8.values, mask, None, mso8.graph)
    prep = prepare(ds)
    raw = impute_last(ds, normalizer=prep.normalizer)
    assert np.allclose(raw[:3, :5], np.broadcast_to(prep.normalizer.mean[:3, None, :], (3, 5, 1)))
    assert np.allclose(prep.normalizer.apply(raw), prep.inputs, rtol=0.0, atol=1e-10)


def test_impute_last_normalizer_shape_checked(mso8):
    norm = Normalizer(np.zeros((3, 1)), np.ones((3, 1)))
    with pytest.raises(ContractViolation):
        impute_last(mso8, normalizer=norm)


def test_normalizer_uses_training_entries_only():
    values = np.concatenate([np.full((1, 7, 1), 2.0), np.full((1, 3, 1), 100.0)], axis=1)
    values[0, :7:2, 0] = 4.0
    norm = Normalizer.fit(values, np.ones_like(values, dtype=bool), chronological_split(10)["train"])
    assert np.allclose(norm.mean, [[(4 * 4.0 + 3 * 2.0) / 7]])
    assert np.allclose(norm.invert(norm.apply(values)), values)


def test_normalizer_std_floor():
    values = np.full((2, 10, 1), 3.0)
    norm = Normalizer.fit(values, np.ones_like(values, dtype=bool), chronological_split(10)["train"])
    assert (norm.std == 1e-8).all()


def test_window_count_and_alignment(mso8):
    prep = prepare(mso8)
    train = prep.splits["train"]
    ws = make_windows(prep, train, 12, 12, 1)
    assert len(ws) == len(train) - 24 + 1
    w = ws[5]
    assert w.t0 == 5
    assert np.array_equal(w.inputs, prep.inputs[:, 5:17])
    assert np.array_equal(w.targets_raw, mso8.values[:, 17:29])


def test_window_stride(mso8):
    prep = prepare(mso8)
    ws = make_windows(prep, prep.splits["train"], 12, 12, 5)
    assert [w.t0 for w in ws[:3]] == [0, 5, 10]


def test_short_split_gives_no_windows(mso8):
    prep = prepare(mso8)
    assert make_windows(prep, prep.splits["val"], 12, 12) == []


def test_synthetic_targets_scored_only_under_eval_mask(mso8):
    ds = inject_point(mso8, 0.3, seed=2)
    prep = prepare(ds)
    syn = ds.synthetic_mask
    assert np.array_equal(prep.eval_mask, ds.mask | syn)
    assert not (prep.train_mask & syn).any()
    assert np.array_equal(prep.targets_raw[syn], ds.eval_truth[syn])
    # inputs never see hidden values
    assert np.isfinite(prep.inputs).all()


def test_stack_windows(mso8):
    prep = prepare(mso8)
    ws = make_windows(prep, prep.splits["train"], 4, 2)
    batch = stack_windows(ws[:3])
    assert batch.inputs.shape == (3, 8, 4, 1)
    assert batch.targets.shape == (3, 8, 2, 1)
    assert batch.t0.tolist() == [0, 1, 2]
    with pytest.raises(ContractViolation):
        stack_windows([])
