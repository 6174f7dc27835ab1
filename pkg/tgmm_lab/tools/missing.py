# tgmm_lab/tools/missing.py
"""
Synthetic missing-data injectors: Point, BlockT, BlockST.

Injectors only ever hide observed entries; the hidden values move into
eval_truth so test metrics can still score them. Random streams derive from
(seed, pattern tag, node id) for the per-node patterns and from
(seed, pattern tag, split index) for BlockST, so results do not depend on
iteration order.
"""

from typing import Dict, Iterable, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..errors import ContractViolation
from ..utils.log import get_logger
from .dataset import SpatioTemporalDataset
from .graphpart import SensorGraph

logger = get_logger("missing")

TAG_POINT = 1
TAG_BLOCK_T = 2
TAG_BLOCK_ST = 3

PATTERNS = ("point", "block_t", "block_st")


def hide_entries(ds: SpatioTemporalDataset, drop: np.ndarray) -> SpatioTemporalDataset:
    """Return a copy with `drop & mask` hidden and their values recorded in eval_truth."""
    if drop.shape != ds.mask.shape:
        raise ContractViolation(f"drop mask {list(drop.shape)} does not match dataset {list(ds.mask.shape)}")
    out = ds.copy()
    hit = drop & out.mask
    out.eval_truth[hit] = out.values[hit]
    out.values[hit] = np.nan
    out.mask[hit] = False
    return out


def block_drop(shape: Tuple[int, int, int], nodes: Iterable[int], t0: int, length: int,
               drop: Optional[np.ndarray] = None, end: Optional[int] = None) -> np.ndarray:
    """Mark nodes x [t0, t0+length) x all channels; the block is clipped at `end` (default T)."""
    if drop is None:
        drop = np.zeros(shape, dtype=bool)
    t1 = min(shape[1] if end is None else end, t0 + length)
    drop[list(nodes), t0:t1, :] = True
    return drop


def bfs_ball(graph: SensorGraph, center: int, radius: int, g: Optional[nx.Graph] = None) -> Sequence[int]:
    if radius < 0:
        raise ContractViolation(f"radius must be >= 0, got {radius}")
    g = graph.to_networkx() if g is None else g
    return sorted(nx.single_source_shortest_path_length(g, center, cutoff=radius))


def _check_duration(duration: Sequence[int], num_timesteps: int) -> Tuple[int, int]:
    lo, hi = int(duration[0]), int(duration[1])
    if not 1 <= lo <= hi <= num_timesteps:
        raise ContractViolation(f"duration [{lo}, {hi}] must satisfy 1 <= l_min <= l_max <= T={num_timesteps}")
    return lo, hi


def inject_point(ds: SpatioTemporalDataset, p: float, seed: int = 0) -> SpatioTemporalDataset:
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"point probability must be in [0, 1], got {p}")
    N, T, C = ds.values.shape
    drop = np.zeros((N, T, C), dtype=bool)
    for n in range(N):
        rng = np.random.default_rng([seed, TAG_POINT, n])
        drop[n] = rng.random((T, C)) < p
    out = hide_entries(ds, drop)
    logger.debug("point p=%.3f hid %d entries", p, int((ds.mask & ~out.mask).sum()))
    return out


def inject_block_t(ds: SpatioTemporalDataset, rate: float, duration: Sequence[int] = (10, 40),
                   seed: int = 0) -> SpatioTemporalDataset:
    """Per node, failures start as a Bernoulli process with rate/1000 per step; each hides a run on all channels."""
    if rate < 0:
        raise ContractViolation(f"failure rate must be >= 0, got {rate}")
    N, T, C = ds.values.shape
    lo, hi = _check_duration(duration, T)
    drop = np.zeros((N, T, C), dtype=bool)
    for n in range(N):
        rng = np.random.default_rng([seed, TAG_BLOCK_T, n])
        starts = np.flatnonzero(rng.random(T) < rate / 1000.0)
        lengths = rng.integers(lo, hi + 1, size=len(starts))
        for t0, length in zip(starts.tolist(), lengths.tolist()):
            block_drop((N, T, C), [n], t0, length, drop)
    out = hide_entries(ds, drop)
    logger.debug("block_t rate=%.3f hid %d entries", rate, int((ds.mask & ~out.mask).sum()))
    return out


def inject_block_st(ds: SpatioTemporalDataset, events: Optional[int] = None, radius: int = 2,
                    duration: Sequence[int] = (10, 40), seed: int = 0,
                    splits: Optional[Dict[str, Tuple[int, int]]] = None) -> SpatioTemporalDataset:
    """
    Spatio-temporal outages: each event hides every node within `radius` hops
    of a random centre for a random contiguous duration.

    With `splits`, `events` events are drawn inside each split's time range
    (default max(1, N // 10)) and each block is clipped at the end of its
    split; otherwise `events` are drawn over [0, T).
    """
    if radius < 0:
        raise ContractViolation(f"radius must be >= 0, got {radius}")
    N, T, C = ds.values.shape
    lo, hi = _check_duration(duration, T)
    count = max(1, N // 10) if events is None else int(events)
    if count < 0:
        raise ContractViolation(f"event count must be >= 0, got {count}")
    ranges = list(splits.values()) if splits else [(0, T)]
    g = ds.graph.to_networkx()
    drop = np.zeros((N, T, C), dtype=bool)
    for i, (a, b) in enumerate(ranges):
        if b <= a:
            continue
        rng = np.random.default_rng([seed, TAG_BLOCK_ST, i])
        for _ in range(count):
            center = int(rng.integers(0, N))
            t0 = int(rng.integers(a, b))
            length = int(rng.integers(lo, hi + 1))
            block_drop((N, T, C), bfs_ball(ds.graph, center, radius, g), t0, length, drop, end=b)
    out = hide_entries(ds, drop)
    logger.debug("block_st events=%d radius=%d hid %d entries", count, radius, int((ds.mask & ~out.mask).sum()))
    return out


def inject(ds: SpatioTemporalDataset, pattern: str, seed: int = 0, **kw) -> SpatioTemporalDataset:
    if pattern == "point":
        return inject_point(ds, kw.get("p", 0.05), seed)
    if pattern == "block_t":
        return inject_block_t(ds, kw.get("rate", 2.0), kw.get("duration", (10, 40)), seed)
    if pattern == "block_st":
        return inject_block_st(ds, kw.get("events"), kw.get("radius", 2), kw.get("duration", (10, 40)), seed,
                               kw.get("splits"))
    raise ContractViolation(f"unknown missing pattern {pattern!r}; expected one of {list(PATTERNS)}")
