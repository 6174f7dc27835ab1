# tgmm_lab/tools/dataset.py
"""
Spatio-temporal dataset model, directory format and the MSO synthetic generator.

Dataset directory:
    meta.json        {name, num_nodes, num_timesteps, num_channels, sample_period_seconds, channel_names}
    values.csv       T rows x N*C columns, header n{i}_c{j}; empty cell = missing
    mask.csv         same shape, 0/1
    eval_truth.csv   node,timestep,channel,value   (synthetically masked entries only)
    edges.csv        src,dst,weight

In memory the mask is authoritative: values under mask==0 are NaN.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import ContractViolation, DataError
from ..utils.io import PathLike, ensure_dir, load_json, require_dir, save_json
from ..utils.log import get_logger
from .graphpart import SensorGraph, make_graph

logger = get_logger("dataset")

FLOAT_FORMAT = "%.17g"
MSO_MIN_FREQ = 1.0 / 200.0
MSO_MAX_FREQ = 1.0 / 10.0


@dataclass
class DataConfig:
    graph_kind: str = "grid"
    num_nodes: int = 8
    num_timesteps: int = 400
    oscillators: int = 5
    noise_sigma: float = 0.05
    graph_seed: int = 0
    mean_degree: float = 6.0
    smoothing_rounds: int = 3
    window: int = 12
    horizon: int = 12
    stride: int = 1

    def __post_init__(self):
        if self.graph_kind not in ("grid", "random-geometric"):
            raise ContractViolation(f"data.graph_kind must be 'grid' or 'random-geometric', got {self.graph_kind!r}")
        for name in ("num_nodes", "num_timesteps", "oscillators", "window", "horizon", "stride"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"data.{name} must be >= 1, got {getattr(self, name)}")
        if self.noise_sigma < 0:
            raise ContractViolation(f"data.noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.smoothing_rounds < 0:
            raise ContractViolation(f"data.smoothing_rounds must be >= 0, got {self.smoothing_rounds}")


@dataclass
class SpatioTemporalDataset:
    values: np.ndarray                 # [N, T, C], NaN where mask is 0
    mask: np.ndarray                   # [N, T, C] bool
    eval_truth: np.ndarray             # [N, T, C], finite only at synthetically masked entries
    graph: SensorGraph
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.eval_truth is None:
            self.eval_truth = np.full(self.values.shape, np.nan)
        self.eval_truth = np.asarray(self.eval_truth, dtype=np.float64)
        if self.values.ndim != 3:
            raise ContractViolation(f"values must be [N, T, C], got shape {list(self.values.shape)}")
        if self.mask.shape != self.values.shape or self.eval_truth.shape != self.values.shape:
            raise ContractViolation(
                f"values {list(self.values.shape)}, mask {list(self.mask.shape)} and eval_truth "
                f"{list(self.eval_truth.shape)} must share a shape")
        if self.graph.num_nodes != self.values.shape[0]:
            raise ContractViolation(f"graph has {self.graph.num_nodes} nodes, values have {self.values.shape[0]}")
        self.values = np.where(self.mask, self.values, np.nan)
        self.meta.setdefault("name", "dataset")
        self.meta.setdefault("sample_period_seconds", 300)
        self.meta.setdefault("channel_names", [f"c{j}" for j in range(self.num_channels)])

    @property
    def num_nodes(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_timesteps(self) -> int:
        return int(self.values.shape[1])

    @property
    def num_channels(self) -> int:
        return int(self.values.shape[2])

    @property
    def synthetic_mask(self) -> np.ndarray:
        return ~np.isnan(self.eval_truth)

    def copy(self) -> "SpatioTemporalDataset":
        return SpatioTemporalDataset(self.values.copy(), self.mask.copy(), self.eval_truth.copy(),
                                     self.graph, dict(self.meta))

    def check(self) -> None:
        if not np.isfinite(self.values[self.mask]).all():
            raise DataError("non-finite value at an observed position")
        syn = self.synthetic_mask
        if (syn & self.mask).any():
            raise DataError("eval_truth defined at an observed position")
        if not np.isfinite(self.eval_truth[syn]).all():
            raise DataError("non-finite eval_truth value")


# ----------------------------------------------------------
# MSO generator
# ----------------------------------------------------------
def smooth_over_graph(field_: np.ndarray, graph: SensorGraph, rounds: int = 3) -> np.ndarray:
    """Replace each node's row by the mean over its closed neighbourhood, `rounds` times."""
    out = np.array(field_, dtype=np.float64)
    n = graph.num_nodes
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    counts = 1.0 + np.bincount(src, minlength=n) + np.bincount(dst, minlength=n)
    for _ in range(rounds):
        acc = out.copy()
        np.add.at(acc, src, out[dst])
        np.add.at(acc, dst, out[src])
        out = acc / counts.reshape((-1,) + (1,) * (out.ndim - 1))
    return out


def superpose_sinusoids(amplitudes: np.ndarray, freqs: np.ndarray, phases: np.ndarray, num_timesteps: int) -> np.ndarray:
    """x_i(t) = sum_k a_ik sin(2 pi f_k t + phi_ik); returns [N, T]."""
    t = np.arange(num_timesteps, dtype=np.float64)
    arg = 2.0 * np.pi * freqs[None, :, None] * t[None, None, :] + phases[:, :, None]
    return np.einsum("nk,nkt->nt", amplitudes, np.sin(arg))


def generate_mso(graph: SensorGraph, oscillators: int = 5, num_timesteps: int = 400, noise_sigma: float = 0.05,
                 seed: int = 0, smoothing_rounds: int = 3, name: str = "mso") -> SpatioTemporalDataset:
    """Sum of K sinusoids per node with graph-smoothed amplitudes and phases; fully observed, one channel."""
    if oscillators < 1 or num_timesteps < 1:
        raise ContractViolation(f"need K >= 1 and T >= 1, got K={oscillators}, T={num_timesteps}")
    rng = np.random.default_rng(seed)
    n, K = graph.num_nodes, oscillators
    freqs = np.exp(rng.uniform(math.log(MSO_MIN_FREQ), math.log(MSO_MAX_FREQ), size=K))
    amplitudes = smooth_over_graph(rng.uniform(0.0, 2.0, size=(n, K)), graph, smoothing_rounds)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=K)
    phases = theta[None, :] + 0.5 * smooth_over_graph(rng.standard_normal((n, K)), graph, smoothing_rounds)
    x = superpose_sinusoids(amplitudes, freqs, phases, num_timesteps)
    if noise_sigma > 0:
        x = x + rng.normal(0.0, noise_sigma, size=x.shape)
    values = x[:, :, None]
    meta = {
        "name": name,
        "sample_period_seconds": 300,
        "channel_names": ["value"],
        "generator": {
            "oscillators": K,
            "noise_sigma": noise_sigma,
            "seed": seed,
            "smoothing_rounds": smoothing_rounds,
            "frequencies": [float(f) for f in freqs],
        },
    }
    return SpatioTemporalDataset(values, np.ones(values.shape, dtype=bool), None, graph, meta)


def generate_mso_from_config(cfg: DataConfig, seed: int) -> SpatioTemporalDataset:
    graph = make_graph(cfg.graph_kind, cfg.num_nodes, cfg.graph_seed, cfg.mean_degree)
    ds = generate_mso(graph, cfg.oscillators, cfg.num_timesteps, cfg.noise_sigma, seed, cfg.smoothing_rounds)
    ds.meta["graph"] = {"kind": cfg.graph_kind, "seed": cfg.graph_seed, "mean_degree": cfg.mean_degree}
    return ds


# ----------------------------------------------------------
# Directory format
# ----------------------------------------------------------
def _columns(n: int, c: int) -> List[str]:
    return [f"n{i}_c{j}" for i in range(n) for j in range(c)]


def _to_table(arr: np.ndarray) -> np.ndarray:
    n, t, c = arr.shape
    return arr.transpose(1, 0, 2).reshape(t, n * c)


def _from_table(table: np.ndarray, n: int, c: int) -> np.ndarray:
    t = table.shape[0]
    return table.reshape(t, n, c).transpose(1, 0, 2)


def save_dataset(ds: SpatioTemporalDataset, directory: PathLike) -> Path:
    d = ensure_dir(directory)
    n, t, c = ds.values.shape
    cols = _columns(n, c)
    pd.DataFrame(_to_table(ds.values), columns=cols).to_csv(
        d / "values.csv", index=False, float_format=FLOAT_FORMAT, na_rep="")
    pd.DataFrame(_to_table(ds.mask.astype(np.int64)), columns=cols).to_csv(d / "mask.csv", index=False)
    syn = np.argwhere(ds.synthetic_mask)
    truth = pd.DataFrame({
        "node": syn[:, 0], "timestep": syn[:, 1], "channel": syn[:, 2],
        "value": ds.eval_truth[ds.synthetic_mask],
    })
    truth.to_csv(d / "eval_truth.csv", index=False, float_format=FLOAT_FORMAT)
    pd.DataFrame({"src": ds.graph.edges[:, 0], "dst": ds.graph.edges[:, 1], "weight": ds.graph.weights}).to_csv(
        d / "edges.csv", index=False, float_format=FLOAT_FORMAT)
    meta = dict(ds.meta)
    meta.update({"num_nodes": n, "num_timesteps": t, "num_channels": c})
    save_json(meta, d / "meta.json")
    return d


def _read_csv(path: Path, **kw) -> pd.DataFrame:
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        return pd.read_csv(path, float_precision="round_trip", **kw)
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot parse {path}: {e}") from e
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror or e}") from e


def load_dataset(directory: PathLike) -> SpatioTemporalDataset:
    d = require_dir(directory, "dataset directory")
    meta = load_json(d / "meta.json")
    try:
        n, t, c = int(meta["num_nodes"]), int(meta["num_timesteps"]), int(meta["num_channels"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{d / 'meta.json'} lacks num_nodes/num_timesteps/num_channels: {e}")
    cols = _columns(n, c)

    values_df = _read_csv(d / "values.csv", keep_default_na=True, na_values=["nan"])
    mask_df = _read_csv(d / "mask.csv")
    for path, df in ((d / "values.csv", values_df), (d / "mask.csv", mask_df)):
        if list(df.columns) != cols or len(df) != t:
            raise DataError(f"{path} must have {t} rows and columns n{{i}}_c{{j}} for {n} nodes x {c} channels")
    mask_tab = mask_df.to_numpy()
    if not np.isin(mask_tab, (0, 1)).all():
        raise DataError(f"{d / 'mask.csv'} must contain only 0/1")
    values = _from_table(values_df.to_numpy(dtype=np.float64), n, c)
    mask = _from_table(mask_tab.astype(bool), n, c)
    if not np.isfinite(values[mask]).all():
        raise DataError(f"{d / 'values.csv'} has missing or non-finite entries where mask.csv is 1")

    eval_truth = np.full((n, t, c), np.nan)
    truth_path = d / "eval_truth.csv"
    if truth_path.exists():
        truth = _read_csv(truth_path)
        if list(truth.columns) != ["node", "timestep", "channel", "value"]:
            raise DataError(f"{truth_path} must have columns node,timestep,channel,value")
        idx = truth[["node", "timestep", "channel"]].to_numpy(dtype=np.int64)
        if len(idx) and ((idx < 0).any() or (idx >= np.array([n, t, c])).any()):
            raise DataError(f"{truth_path} has indices outside the dataset shape")
        eval_truth[idx[:, 0], idx[:, 1], idx[:, 2]] = truth["value"].to_numpy(dtype=np.float64)

    edges_df = _read_csv(d / "edges.csv")
    if list(edges_df.columns) != ["src", "dst", "weight"]:
        raise DataError(f"{d / 'edges.csv'} must have columns src,dst,weight")
    try:
        graph = SensorGraph.from_edges(n, edges_df[["src", "dst"]].to_numpy(dtype=np.int64),
                                       edges_df["weight"].to_numpy(dtype=np.float64))
    except ContractViolation as e:
        raise DataError(f"{d / 'edges.csv'}: {e}") from e

    meta = {k: v for k, v in meta.items() if k not in ("num_nodes", "num_timesteps", "num_channels")}
    ds = SpatioTemporalDataset(values, mask, eval_truth, graph, meta)
    ds.check()
    logger.debug("loaded dataset %s: N=%d T=%d C=%d E=%d", d, n, t, c, graph.num_edges)
    return ds


# ----------------------------------------------------------
# Summaries
# ----------------------------------------------------------
def missing_profile(ds: SpatioTemporalDataset, splits: Dict[str, Tuple[int, int]]) -> Dict[str, Dict[str, float]]:
    """Per split: fraction of entries missing in the source data and fraction masked synthetically."""
    syn = ds.synthetic_mask
    natural = ~ds.mask & ~syn
    out = {}
    for name, (a, b) in splits.items():
        total = max(1, natural[:, a:b].size)
        out[name] = {
            "original_missing": float(natural[:, a:b].sum()) / total,
            "synthetic": float(syn[:, a:b].sum()) / total,
            "observed": float(ds.mask[:, a:b].sum()) / total,
        }
    return out


def dataset_summary(ds: SpatioTemporalDataset, splits: Optional[Dict[str, Tuple[int, int]]] = None) -> Dict[str, Any]:
    summary = {
        "name": ds.meta.get("name"),
        "num_nodes": ds.num_nodes,
        "num_timesteps": ds.num_timesteps,
        "num_channels": ds.num_channels,
        "num_edges": ds.graph.num_edges,
        "observed_fraction": float(ds.mask.mean()),
        "synthetic_fraction": float(ds.synthetic_mask.mean()),
    }
    if splits is not None:
        summary["missing_fraction"] = missing_profile(ds, splits)
    return summary


def channel_stats(values: np.ndarray, mask: np.ndarray, axis: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, population std and count of masked entries reduced over `axis`."""
    axis = tuple(axis)
    cnt = mask.sum(axis=axis)
    x = np.where(mask, values, 0.0)
    safe = np.maximum(cnt, 1)
    mean = x.sum(axis=axis) / safe
    dev = np.where(mask, values - np.expand_dims(mean, axis), 0.0)
    std = np.sqrt((dev * dev).sum(axis=axis) / safe)
    return mean, std, cnt
