# tgmm_lab/tools/graphpart.py
"""
Sensor graph, multilevel balanced partitioning, one-hop halo expansion.

Partitioning follows the usual multilevel recipe:
  1) coarsen by heavy-edge matching (seeded visit order) until the graph is small
  2) grow P balanced regions on the coarsest graph from far-apart seeds
  3) project back level by level, refining with boundary moves and pairwise swaps
  4) on the original graph, repair empty parts and enforce the size cap

Ties are always broken by the lowest node (or part) index, and parts are
renumbered by their smallest node id at the end, so the result depends only on
(graph, P, imbalance, seed).
"""

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..errors import ContractViolation, DataError
from ..utils.log import get_logger

logger = get_logger("graphpart")

DEFAULT_IMBALANCE = 0.1
MEAN_CORE_SIZE = 16


# ----------------------------------------------------------
# Sensor graph
# ----------------------------------------------------------
class SensorGraph:
    """Undirected weighted graph; edges stored once with src < dst, sorted."""

    def __init__(self, num_nodes: int, edges: np.ndarray, weights: np.ndarray):
        self.num_nodes = int(num_nodes)
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        self._validate()
        self._build_csr()

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Sequence[Sequence[int]],
                   weights: Optional[Sequence[float]] = None) -> "SensorGraph":
        """Canonicalise an arbitrary edge list: orient src<dst, drop self-loops, merge duplicates (max weight)."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        w = np.ones(len(e)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(w) != len(e):
            raise ContractViolation(f"{len(e)} edges but {len(w)} weights")
        if e.size and (e.min() < 0 or e.max() >= num_nodes):
            raise ContractViolation(f"edge endpoint outside [0, {num_nodes})")
        loops = e[:, 0] == e[:, 1]
        if loops.any():
            logger.warning("dropping %d self-loop(s)", int(loops.sum()))
            e, w = e[~loops], w[~loops]
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        merged: Dict[Tuple[int, int], float] = {}
        for a, b, wt in zip(lo.tolist(), hi.tolist(), w.tolist()):
            key = (a, b)
            merged[key] = max(merged[key], wt) if key in merged else wt
        if len(merged) < len(lo):
            logger.warning("merged %d duplicate edge(s)", len(lo) - len(merged))
        keys = sorted(merged)
        arr = np.array(keys, dtype=np.int64).reshape(-1, 2)
        return cls(num_nodes, arr, np.array([merged[k] for k in keys], dtype=np.float64))

    @classmethod
    def from_networkx(cls, g: nx.Graph, weight: str = "weight") -> "SensorGraph":
        nodes = sorted(g.nodes())
        index = {v: i for i, v in enumerate(nodes)}
        edges = [(index[u], index[v]) for u, v in g.edges()]
        weights = [float(d.get(weight, 1.0)) for _, _, d in g.edges(data=True)]
        return cls.from_edges(len(nodes), edges, weights)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.num_nodes))
        for (a, b), w in zip(self.edges.tolist(), self.weights.tolist()):
            g.add_edge(a, b, weight=w)
        return g

    def _validate(self) -> None:
        n, e, w = self.num_nodes, self.edges, self.weights
        if n < 1:
            raise ContractViolation(f"graph needs at least one node, got {n}")
        if len(w) != len(e):
            raise ContractViolation(f"{len(e)} edges but {len(w)} weights")
        if len(e):
            if e.min() < 0 or e.max() >= n:
                raise ContractViolation(f"edge endpoint outside [0, {n})")
            if not (e[:, 0] < e[:, 1]).all():
                raise ContractViolation("edges must satisfy src < dst (no self-loops)")
            keys = e[:, 0] * n + e[:, 1]
            if not (np.diff(keys) > 0).all():
                raise ContractViolation("edge list must be sorted and duplicate-free")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ContractViolation("edge weights must be finite and non-negative")

    def _build_csr(self) -> None:
        n = self.num_nodes
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        wts = np.concatenate([self.weights, self.weights])
        order = np.lexsort((dst, src))
        self._nbr = dst[order]
        self._nbr_w = wts[order]
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=n))]).astype(np.int64)

    @property
    def num_edges(self) -> int:
        return int(len(self.edges))

    def neighbors(self, v: int) -> np.ndarray:
        return self._nbr[self._indptr[v]:self._indptr[v + 1]]

    def neighbor_weights(self, v: int) -> np.ndarray:
        return self._nbr_w[self._indptr[v]:self._indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self._indptr)

    def adjacency(self) -> List[Dict[int, float]]:
        return [dict(zip(self.neighbors(v).tolist(), self.neighbor_weights(v).tolist()))
                for v in range(self.num_nodes)]

    def __eq__(self, other) -> bool:
        return (isinstance(other, SensorGraph) and self.num_nodes == other.num_nodes
                and np.array_equal(self.edges, other.edges) and np.array_equal(self.weights, other.weights))

    def __repr__(self) -> str:
        return f"SensorGraph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


def grid_graph(num_nodes: int) -> SensorGraph:
    """Row-major grid with about sqrt(N) columns, truncated to N nodes; unit weights."""
    if num_nodes < 1:
        raise ContractViolation(f"grid needs at least one node, got {num_nodes}")
    cols = int(math.ceil(math.sqrt(num_nodes)))
    rows = int(math.ceil(num_nodes / cols))
    g = nx.grid_2d_graph(rows, cols)
    g = nx.convert_node_labels_to_integers(g, ordering="sorted")
    g = g.subgraph(range(num_nodes)).copy()
    return SensorGraph.from_networkx(g)


def geometric_radius(num_nodes: int, mean_degree: float) -> float:
    return math.sqrt(mean_degree / (math.pi * max(num_nodes - 1, 1)))


def random_geometric_graph(num_nodes: int, mean_degree: float = 6.0, seed: int = 0) -> Tuple[SensorGraph, np.ndarray]:
    """
    Points uniform in the unit square, linked within the radius giving the
    requested mean degree; Gaussian-kernel weights exp(-d^2 / (2 sigma^2)),
    sigma = radius / 2. Returns (graph, positions [N, 2]).
    """
    if num_nodes < 1:
        raise ContractViolation(f"graph needs at least one node, got {num_nodes}")
    radius = geometric_radius(num_nodes, mean_degree)
    pos = np.random.default_rng(seed).random((num_nodes, 2))
    g = nx.random_geometric_graph(num_nodes, radius, pos={i: tuple(p) for i, p in enumerate(pos)})
    sigma = radius / 2.0
    for u, v in g.edges():
        d2 = float(np.sum((pos[u] - pos[v]) ** 2))
        g[u][v]["weight"] = math.exp(-d2 / (2.0 * sigma * sigma))
    return SensorGraph.from_networkx(g), pos


def make_graph(kind: str, num_nodes: int, seed: int = 0, mean_degree: float = 6.0) -> SensorGraph:
    if kind == "grid":
        return grid_graph(num_nodes)
    if kind in ("random-geometric", "random_geometric", "rgg"):
        return random_geometric_graph(num_nodes, mean_degree, seed)[0]
    raise ContractViolation(f"unknown graph kind {kind!r}; expected 'grid' or 'random-geometric'")


def default_num_patches(num_nodes: int) -> int:
    return max(1, int(round(num_nodes / MEAN_CORE_SIZE)))


# ----------------------------------------------------------
# Patch partition
# ----------------------------------------------------------
@dataclass
class PatchPartition:
    num_patches: int
    core_assignment: np.ndarray
    halo_patches: List[np.ndarray] = field(default_factory=list)
    membership: List[List[int]] = field(default_factory=list)
    local_edges: List[np.ndarray] = field(default_factory=list)
    local_weights: List[np.ndarray] = field(default_factory=list)
    global_to_local: List[Dict[int, int]] = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return int(len(self.core_assignment))

    @property
    def halos_filled(self) -> bool:
        return len(self.halo_patches) == self.num_patches

    def cores(self) -> List[np.ndarray]:
        return [np.flatnonzero(self.core_assignment == p) for p in range(self.num_patches)]

    def to_json(self) -> Dict[str, Any]:
        return {
            "num_patches": int(self.num_patches),
            "core_assignment": [int(x) for x in self.core_assignment],
            "halo_patches": [[int(x) for x in h] for h in self.halo_patches],
        }

    @classmethod
    def from_json(cls, obj: Dict[str, Any], graph: SensorGraph) -> "PatchPartition":
        """Rebuild a partition from partition.json; halos are recomputed and must match the stored ones."""
        try:
            num_patches = int(obj["num_patches"])
            core = np.asarray(obj["core_assignment"], dtype=np.int64)
            stored = [sorted(int(x) for x in h) for h in obj.get("halo_patches", [])]
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"corrupt partition file: {e}")
        if len(core) != graph.num_nodes:
            raise DataError(f"partition covers {len(core)} nodes, graph has {graph.num_nodes}")
        part = expand_one_hop(PatchPartition(num_patches, core), graph)
        if stored and stored != [h.tolist() for h in part.halo_patches]:
            raise DataError("partition halo_patches do not match the one-hop expansion of core_assignment")
        return part

    def check_invariants(self, graph: SensorGraph, imbalance: Optional[float] = None) -> None:
        """Raise ContractViolation on the first broken structural invariant."""
        n, P = graph.num_nodes, self.num_patches
        core = self.core_assignment
        if len(core) != n:
            raise ContractViolation(f"core assignment has {len(core)} entries for {n} nodes")
        if n and (core.min() < 0 or core.max() >= P):
            raise ContractViolation("core assignment outside [0, P)")
        sizes = np.bincount(core, minlength=P)
        if (sizes == 0).any():
            raise ContractViolation(f"empty core patch(es): {np.flatnonzero(sizes == 0).tolist()}")
        if imbalance is not None:
            cap = balance_cap(n, P, imbalance)
            if sizes.max() > cap:
                raise ContractViolation(f"core patch of size {int(sizes.max())} exceeds cap {cap}")
        if not self.halos_filled:
            return
        members = [set() for _ in range(n)]
        for p, halo in enumerate(self.halo_patches):
            hs = set(halo.tolist())
            if not set(np.flatnonzero(core == p).tolist()) <= hs:
                raise ContractViolation(f"halo of patch {p} is not a superset of its core")
            for v in hs:
                members[v].add(p)
            inside = {(int(a), int(b)) for a, b in graph.edges if a in hs and b in hs}
            loc = self.local_edges[p]
            back = {(int(halo[a]), int(halo[b])) for a, b in loc}
            if back != inside or len(loc) != len(inside):
                raise ContractViolation(f"induced subgraph of patch {p} does not match the halo's internal edges")
        for v in range(n):
            if not members[v]:
                raise ContractViolation(f"node {v} is in no halo patch")
            if sorted(members[v]) != list(self.membership[v]):
                raise ContractViolation(f"membership of node {v} inconsistent with halo_patches")
        for a, b in graph.edges.tolist():
            if not (members[a] & members[b]):
                raise ContractViolation(f"edge ({a}, {b}) not covered by any halo patch")


def balance_cap(num_nodes: int, num_patches: int, imbalance: float) -> int:
    # tolerance keeps ceil() exact when (1+imb)*N/P is an integer up to rounding
    return int(math.ceil((1.0 + imbalance) * num_nodes / num_patches - 1e-9))


# ----------------------------------------------------------
# Multilevel partitioner internals
# ----------------------------------------------------------
class _Level:
    """One graph of the multilevel hierarchy; `cmap` maps this level's nodes to the next coarser level."""

    def __init__(self, adj: List[Dict[int, float]], vw: np.ndarray):
        self.adj = adj
        self.vw = vw
        self.cmap: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return len(self.adj)


def _match(level: _Level, rng: np.random.Generator, max_vw: int) -> Tuple[np.ndarray, int]:
    n = level.n
    match = -np.ones(n, dtype=np.int64)
    for u in rng.permutation(n).tolist():
        if match[u] >= 0:
            continue
        best, best_w = -1, -1.0
        for v in sorted(level.adj[u]):
            w = level.adj[u][v]
            if match[v] >= 0 or level.vw[u] + level.vw[v] > max_vw:
                continue
            if w > best_w:
                best, best_w = v, w
        if best >= 0:
            match[u], match[best] = best, u
        else:
            match[u] = u
    cmap = -np.ones(n, dtype=np.int64)
    nc = 0
    for u in range(n):
        if cmap[u] < 0:
            cmap[u] = nc
            cmap[match[u]] = nc
            nc += 1
    return cmap, nc


def _contract(level: _Level, cmap: np.ndarray, nc: int) -> _Level:
    adj: List[Dict[int, float]] = [dict() for _ in range(nc)]
    vw = np.zeros(nc, dtype=np.int64)
    np.add.at(vw, cmap, level.vw)
    for u in range(level.n):
        cu = int(cmap[u])
        for v, w in level.adj[u].items():
            cv = int(cmap[v])
            if cu != cv:
                adj[cu][cv] = adj[cu].get(cv, 0.0) + w
    return _Level(adj, vw)


def _bfs_dist(adj: List[Dict[int, float]], sources: Sequence[int]) -> np.ndarray:
    dist = np.full(len(adj), np.iinfo(np.int64).max, dtype=np.int64)
    q = deque()
    for s in sources:
        dist[s] = 0
        q.append(s)
    while q:
        u = q.popleft()
        for v in sorted(adj[u]):
            if dist[v] > dist[u] + 1:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def _farthest(dist: np.ndarray, allowed: np.ndarray) -> int:
    d = np.where(allowed, dist, -1)
    return int(np.argmax(d))  # argmax returns the lowest index on ties


def _pseudo_peripheral(adj: List[Dict[int, float]], start: int) -> int:
    comp = _bfs_dist(adj, [start])
    reach = comp < np.iinfo(np.int64).max
    a = _farthest(comp, reach)
    return _farthest(_bfs_dist(adj, [a]), reach)


def _grow_regions(level: _Level, P: int, start: int) -> np.ndarray:
    n, adj, vw = level.n, level.adj, level.vw
    parts = -np.ones(n, dtype=np.int64)
    remaining = float(vw.sum())
    seeds = [_pseudo_peripheral(adj, start)]
    for k in range(P):
        unassigned = parts < 0
        if not unassigned.any():
            break
        if k == P - 1:
            parts[unassigned] = k
            break
        if k > 0:
            seeds.append(_farthest(_bfs_dist(adj, seeds), unassigned))
        seed = seeds[-1]
        if parts[seed] >= 0:
            seed = int(np.flatnonzero(unassigned)[0])
        target = remaining / (P - k)
        weight = 0.0
        conn: Dict[int, float] = {}
        nxt = seed
        while True:
            parts[nxt] = k
            weight += vw[nxt]
            conn.pop(nxt, None)
            for v, w in adj[nxt].items():
                if parts[v] < 0:
                    conn[v] = conn.get(v, 0.0) + w
            if weight >= target:
                break
            if (parts < 0).sum() <= P - 1 - k:
                break  # leave one node for each part still to grow
            if conn:
                nxt = min(conn, key=lambda v: (-conn[v], v))
            else:
                # component exhausted: continue in the nearest unassigned component
                nxt = int(np.flatnonzero(parts < 0)[0])
        remaining -= weight
    return parts


def _connections(adj: Dict[int, float], parts: np.ndarray) -> Dict[int, float]:
    conn: Dict[int, float] = {}
    for u, w in adj.items():
        p = int(parts[u])
        conn[p] = conn.get(p, 0.0) + w
    return conn


def _cut(level: _Level, parts: np.ndarray) -> float:
    total = 0.0
    for u in range(level.n):
        for v, w in level.adj[u].items():
            if u < v and parts[u] != parts[v]:
                total += w
    return total


def _refine_moves(level: _Level, parts: np.ndarray, pw: np.ndarray, cap: int, max_passes: int = 8) -> None:
    adj, vw = level.adj, level.vw
    for _ in range(max_passes):
        order = []
        for v in range(level.n):
            conn = _connections(adj[v], parts)
            a = int(parts[v])
            ext = [w for p, w in conn.items() if p != a]
            if ext:
                order.append((-(max(ext) - conn.get(a, 0.0)), v))
        order.sort()
        moved = 0
        for _, v in order:
            a = int(parts[v])
            if pw[a] - vw[v] <= 0:
                continue
            conn = _connections(adj[v], parts)
            internal = conn.get(a, 0.0)
            best, best_gain = -1, 0.0
            for b in sorted(conn):
                if b == a or pw[b] + vw[v] > cap:
                    continue
                gain = conn[b] - internal
                better_balance = gain == 0.0 and pw[a] - pw[b] > vw[v]
                if gain > best_gain or (best < 0 and better_balance):
                    best, best_gain = b, gain
            if best >= 0:
                parts[v] = best
                pw[a] -= vw[v]
                pw[best] += vw[v]
                moved += 1
        if moved == 0:
            break


def _refine_swaps(level: _Level, parts: np.ndarray, pw: np.ndarray, cap: int) -> None:
    adj, vw = level.adj, level.vw
    for u in range(level.n):
        for v in sorted(adj[u]):
            if v <= u or parts[u] == parts[v]:
                continue
            a, b = int(parts[u]), int(parts[v])
            cu = _connections(adj[u], parts)
            cv = _connections(adj[v], parts)
            gain = (cu.get(b, 0.0) - cu.get(a, 0.0)) + (cv.get(a, 0.0) - cv.get(b, 0.0)) - 2.0 * adj[u][v]
            if gain <= 0.0:
                continue
            if pw[a] - vw[u] + vw[v] > cap or pw[b] - vw[v] + vw[u] > cap:
                continue
            parts[u], parts[v] = b, a
            pw[a] += vw[v] - vw[u]
            pw[b] += vw[u] - vw[v]


def _refine(level: _Level, parts: np.ndarray, P: int, cap: int) -> None:
    pw = np.bincount(parts, weights=level.vw, minlength=P).astype(np.int64)
    _refine_moves(level, parts, pw, cap)
    _refine_swaps(level, parts, pw, cap)
    _refine_moves(level, parts, pw, cap, max_passes=2)


def _fix_empty(level: _Level, parts: np.ndarray, P: int) -> None:
    sizes = np.bincount(parts, minlength=P)
    for p in np.flatnonzero(sizes == 0).tolist():
        donor = int(np.argmax(sizes))
        cand = np.flatnonzero(parts == donor)
        # cheapest node to give away: least internal connection
        v = min(cand.tolist(), key=lambda x: (_connections(level.adj[x], parts).get(donor, 0.0), x))
        parts[v] = p
        sizes[donor] -= 1
        sizes[p] += 1


def _fix_balance(level: _Level, parts: np.ndarray, P: int, cap: int) -> None:
    sizes = np.bincount(parts, minlength=P)
    while sizes.max() > cap:
        a = int(np.argmax(sizes))
        best = None
        for v in np.flatnonzero(parts == a).tolist():
            conn = _connections(level.adj[v], parts)
            for b, w in conn.items():
                if b != a and sizes[b] < cap:
                    key = (-(w - conn.get(a, 0.0)), v, b)
                    if best is None or key < best:
                        best = key
        if best is None:
            # no neighbouring part with room: send the loosest node to the smallest part
            b = int(np.argmin(sizes))
            v = min(np.flatnonzero(parts == a).tolist(),
                    key=lambda x: (_connections(level.adj[x], parts).get(a, 0.0), x))
        else:
            _, v, b = best
        parts[v] = b
        sizes[a] -= 1
        sizes[b] += 1


def _canonical_labels(parts: np.ndarray, P: int) -> np.ndarray:
    first = {}
    for v, p in enumerate(parts.tolist()):
        if p not in first:
            first[p] = len(first)
    return np.array([first[p] for p in parts.tolist()], dtype=np.int64)


# ----------------------------------------------------------
# Public operations
# ----------------------------------------------------------
def partition(graph: SensorGraph, num_patches: int, imbalance: float = DEFAULT_IMBALANCE,
              seed: int = 0, trials: int = 4) -> PatchPartition:
    """Balanced P-way partition of the graph's nodes into core patches (halos not yet filled)."""
    N, P = graph.num_nodes, int(num_patches)
    if P < 1 or P > N:
        raise ContractViolation(f"patch count P={P} must satisfy 1 <= P <= N={N}")
    if imbalance < 0:
        raise ContractViolation(f"imbalance must be >= 0, got {imbalance}")
    if P == 1:
        return PatchPartition(1, np.zeros(N, dtype=np.int64))

    rng = np.random.default_rng(seed)
    cap = balance_cap(N, P, imbalance)

    levels = [_Level(graph.adjacency(), np.ones(N, dtype=np.int64))]
    coarse_target = max(20, 4 * P)
    max_vw = max(1, int(math.ceil(N / (3.0 * P))))
    while levels[-1].n > coarse_target:
        fine = levels[-1]
        cmap, nc = _match(fine, rng, max_vw)
        if nc > 0.95 * fine.n or nc < P:
            break
        fine.cmap = cmap
        levels.append(_contract(fine, cmap, nc))
    coarsest = levels[-1]

    best_parts, best_key = None, None
    starts = [0] + rng.integers(0, coarsest.n, size=max(0, trials - 1)).tolist()
    for start in starts:
        parts = _grow_regions(coarsest, P, int(start))
        _refine(coarsest, parts, P, cap)
        pw = np.bincount(parts, weights=coarsest.vw, minlength=P)
        key = (max(0.0, float(pw.max()) - cap), _cut(coarsest, parts))
        if best_key is None or key < best_key:
            best_parts, best_key = parts, key
    parts = best_parts

    for level in reversed(levels[:-1]):
        parts = parts[level.cmap].copy()
        _refine(level, parts, P, cap)

    finest = levels[0]
    _fix_empty(finest, parts, P)
    _fix_balance(finest, parts, P, cap)
    _refine(finest, parts, P, cap)
    parts = _canonical_labels(parts, P)

    result = PatchPartition(P, parts)
    logger.debug("partition N=%d P=%d levels=%d coarsest=%d cut=%.4f sizes=%s", N, P, len(levels),
                 coarsest.n, _cut(finest, parts), np.bincount(parts, minlength=P).tolist())
    return result


def expand_one_hop(part: PatchPartition, graph: SensorGraph) -> PatchPartition:
    """Fill halos (core + neighbours), membership lists and induced local subgraphs."""
    N, P = graph.num_nodes, part.num_patches
    core = np.asarray(part.core_assignment, dtype=np.int64)
    if len(core) != N:
        raise ContractViolation(f"core assignment has {len(core)} entries for {N} nodes")
    if N and (core.min() < 0 or core.max() >= P):
        raise ContractViolation("core assignment outside [0, P)")
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    halos, local_edges, local_weights, g2l = [], [], [], []
    membership: List[List[int]] = [[] for _ in range(N)]
    for p in range(P):
        in_core = core == p
        in_halo = in_core.copy()
        in_halo[dst[in_core[src]]] = True
        in_halo[src[in_core[dst]]] = True
        halo = np.flatnonzero(in_halo)
        pos = -np.ones(N, dtype=np.int64)
        pos[halo] = np.arange(len(halo))
        keep = in_halo[src] & in_halo[dst]
        local_edges.append(np.stack([pos[src[keep]], pos[dst[keep]]], axis=1).reshape(-1, 2))
        local_weights.append(graph.weights[keep].copy())
        halos.append(halo)
        g2l.append({int(v): i for i, v in enumerate(halo.tolist())})
        for v in halo.tolist():
            membership[v].append(p)
    return PatchPartition(P, core, halos, membership, local_edges, local_weights, g2l)


def partition_stats(part: PatchPartition, graph: SensorGraph) -> Dict[str, Any]:
    if not part.halos_filled:
        raise ContractViolation("partition_stats needs halos; call expand_one_hop first")
    N = graph.num_nodes
    core = part.core_assignment
    crossing = core[graph.edges[:, 0]] != core[graph.edges[:, 1]] if graph.num_edges else np.zeros(0, bool)
    counts = np.array([len(m) for m in part.membership], dtype=np.int64)
    hist = {str(k): int(c) for k, c in zip(*np.unique(counts, return_counts=True))}
    sizes = np.bincount(core, minlength=part.num_patches)
    mean_membership = float(sum(len(h) for h in part.halo_patches)) / N
    return {
        "num_nodes": N,
        "num_edges": graph.num_edges,
        "num_patches": part.num_patches,
        "edge_cut": int(crossing.sum()),
        "cut_weight": float(graph.weights[crossing].sum()),
        "sizes": [int(s) for s in sizes],
        "halo_sizes": [int(len(h)) for h in part.halo_patches],
        "max_core_size": int(sizes.max()),
        "membership_histogram": hist,
        "mean_membership": mean_membership,
        "node_computation_factor": mean_membership,
    }


def build_partition(graph: SensorGraph, num_patches: Optional[int] = None,
                    imbalance: float = DEFAULT_IMBALANCE, seed: int = 0) -> PatchPartition:
    """partition + expand_one_hop; P defaults to about one patch per 16 nodes."""
    P = default_num_patches(graph.num_nodes) if num_patches is None else num_patches
    return expand_one_hop(partition(graph, P, imbalance, seed), graph)
