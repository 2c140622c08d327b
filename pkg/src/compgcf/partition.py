"""Balanced k-way graph partitioning and community-based assignment initialization.

The partitioner follows the usual multilevel recipe: coarsen by heavy-edge
matching, grow ``c`` regions greedily on the coarsest graph, then project
back level by level with greedy boundary refinement. A final pass at the
finest level enforces the balance bound and non-empty parts exactly.
"""
import heapq
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .embedding import SparseAssignment
from .linalg import as_csr


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Partitioning:
    num_parts: int
    labels: np.ndarray

    @property
    def part_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_parts)


def edge_cut(a, labels) -> float:
    """Total weight of edges whose endpoints sit in different parts (each undirected edge once)."""
    coo = sp.coo_array(a)
    cross = labels[coo.row] != labels[coo.col]
    return float(coo.data[cross].sum()) / 2.0


def max_part_size(n: int, c: int, balance_factor: float) -> int:
    return max(math.ceil(n / c), int(math.floor(balance_factor * math.ceil(n / c) + 1e-9)))


def _clean_graph(a) -> sp.csr_array:
    g = as_csr(a).astype(np.float64)
    g.setdiag(0)
    g.eliminate_zeros()
    g = as_csr(g)
    return g


def _heavy_edge_matching(g: sp.csr_array, vwgt: np.ndarray, max_vw: float, rng) -> np.ndarray:
    """Return ``cmap``: fine node -> coarse node id."""
    n = g.shape[0]
    match = np.full(n, -1, dtype=np.int64)
    ptr, idx, val = g.indptr, g.indices, g.data
    for v in rng.permutation(n):
        if match[v] >= 0:
            continue
        nbrs = idx[ptr[v]:ptr[v + 1]]
        w = val[ptr[v]:ptr[v + 1]]
        ok = (match[nbrs] < 0) & (vwgt[nbrs] + vwgt[v] <= max_vw)
        if ok.any():
            cand = nbrs[ok]
            cw = w[ok]
            # heaviest edge, lowest index on ties (indices are sorted)
            u = cand[np.argmax(cw)]
            match[v], match[u] = u, v
        else:
            match[v] = v
    cmap = np.full(n, -1, dtype=np.int64)
    nc = 0
    for v in range(n):
        if cmap[v] < 0:
            cmap[v] = nc
            cmap[match[v]] = nc
            nc += 1
    return cmap


def _contract(g: sp.csr_array, vwgt: np.ndarray, cmap: np.ndarray):
    nc = int(cmap.max()) + 1
    p = sp.csr_array((np.ones(len(cmap)), (np.arange(len(cmap)), cmap)), shape=(len(cmap), nc))
    gc = _clean_graph(p.T @ g @ p)
    return gc, np.bincount(cmap, weights=vwgt, minlength=nc)


def _grow_regions(g: sp.csr_array, vwgt: np.ndarray, c: int, max_w: float, rng) -> np.ndarray:
    """Greedy graph growing: fill parts one at a time by strongest connectivity."""
    n = g.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    total = vwgt.sum()
    ptr, idx, val = g.indptr, g.indices, g.data
    unassigned = n
    for k in range(c - 1):
        target = (total - vwgt[labels >= 0].sum()) / (c - k)
        weight = 0.0
        conn: dict[int, float] = {}
        heap: list[tuple[float, int]] = []
        while weight < target and unassigned > (c - 1 - k):
            if not heap:
                free = np.flatnonzero(labels < 0)
                v = int(free[rng.integers(len(free))])
                if weight > 0 and weight + vwgt[v] > max_w:
                    break
            else:
                negc, v = heapq.heappop(heap)
                if labels[v] >= 0 or -negc != conn.get(v):
                    continue
            if weight > 0 and weight + vwgt[v] > max_w:
                conn.pop(v, None)
                continue
            labels[v] = k
            unassigned -= 1
            weight += vwgt[v]
            for u, w in zip(idx[ptr[v]:ptr[v + 1]], val[ptr[v]:ptr[v + 1]]):
                if labels[u] < 0:
                    conn[u] = conn.get(u, 0.0) + w
                    heapq.heappush(heap, (-conn[u], int(u)))
    labels[labels < 0] = c - 1
    return labels


def _part_connectivity(g, labels, v):
    ptr, idx, val = g.indptr, g.indices, g.data
    nb = labels[idx[ptr[v]:ptr[v + 1]]]
    parts, inv = np.unique(nb, return_inverse=True)
    return parts, np.bincount(inv, weights=val[ptr[v]:ptr[v + 1]])


def _refine(g: sp.csr_array, vwgt: np.ndarray, labels: np.ndarray, sizes: np.ndarray,
            counts: np.ndarray, max_w: float, rng, passes: int = 8) -> None:
    """Greedy boundary refinement; moves keep every part within ``max_w`` and non-empty."""
    coo = g.tocoo()
    for _ in range(passes):
        cross = labels[coo.row] != labels[coo.col]
        boundary = np.unique(coo.row[cross])
        moved = 0
        for v in boundary[rng.permutation(len(boundary))]:
            own = labels[v]
            if counts[own] <= 1:
                continue
            parts, conn = _part_connectivity(g, labels, v)
            own_conn = conn[parts == own].sum()
            best, best_gain = -1, 0.0
            for q, cq in zip(parts, conn):
                if q == own or sizes[q] + vwgt[v] > max_w:
                    continue
                gain = cq - own_conn
                better_balance = sizes[q] + vwgt[v] < sizes[own]
                if gain > best_gain or (gain == best_gain and best < 0 and gain == 0 and better_balance):
                    best, best_gain = q, gain
            if best >= 0:
                labels[v] = best
                sizes[own] -= vwgt[v]
                sizes[best] += vwgt[v]
                counts[own] -= 1
                counts[best] += 1
                moved += 1
        if moved == 0:
            break


def _rebalance(g: sp.csr_array, labels: np.ndarray, c: int, max_w: int) -> None:
    """Enforce ``size <= max_w`` and non-empty parts on the unit-weight finest graph."""
    sizes = np.bincount(labels, minlength=c)
    while True:
        empty = np.flatnonzero(sizes == 0)
        over = np.flatnonzero(sizes > max_w)
        if len(empty) == 0 and len(over) == 0:
            return
        src = int(over[0]) if len(over) else int(np.argmax(sizes))
        members = np.flatnonzero(labels == src)
        room = sizes < max_w
        room[src] = False
        if len(empty):
            room[:] = False
            room[empty[0]] = True
        best_v, best_q, best_gain = -1, -1, -np.inf
        for v in members:
            parts, conn = _part_connectivity(g, labels, v)
            own_conn = conn[parts == src].sum()
            cand = [(cq - own_conn, q) for q, cq in zip(parts, conn) if room[q]]
            if cand:
                gain, q = max(cand, key=lambda x: (x[0], -x[1]))
            else:
                q = int(np.flatnonzero(room)[np.argmin(sizes[room])])
                gain = -own_conn
            if gain > best_gain:
                best_v, best_q, best_gain = int(v), int(q), gain
        labels[best_v] = best_q
        sizes[src] -= 1
        sizes[best_q] += 1


def partition_graph(a, c: int, seed: int = 0, balance_factor: float = 1.05,
                    coarsen_to: int | None = None) -> Partitioning:
    """Split the nodes of symmetric graph ``a`` into ``c`` balanced parts with a small edge cut.

    Deterministic for fixed ``(a, c, seed)``. Disconnected graphs are fine;
    components get packed into parts by size.
    """
    n = a.shape[0]
    if c < 1:
        raise PartitionError("need at least one part")
    if c > n:
        raise PartitionError(f"cannot split {n} nodes into {c} parts")
    if balance_factor < 1.0:
        raise PartitionError("balance_factor must be >= 1.0")
    if c == 1:
        return Partitioning(1, np.zeros(n, dtype=np.int64))
    rng = np.random.default_rng(seed)
    max_w = max_part_size(n, c, balance_factor)
    coarsen_to = coarsen_to or max(20 * c, 100)

    g = _clean_graph(a)
    vwgt = np.ones(n)
    levels = []
    while g.shape[0] > coarsen_to:
        max_vw = min(max_w, max(1.5 * n / coarsen_to, 2.0))
        cmap = _heavy_edge_matching(g, vwgt, max_vw, rng)
        nc = int(cmap.max()) + 1
        if nc > 0.95 * g.shape[0]:
            break
        levels.append((g, vwgt, cmap))
        g, vwgt = _contract(g, vwgt, cmap)

    labels = _grow_regions(g, vwgt, c, max_w, rng)
    sizes = np.bincount(labels, weights=vwgt, minlength=c)
    counts = np.bincount(labels, minlength=c)
    _refine(g, vwgt, labels, sizes, counts, max_w, rng)
    for fine_g, fine_w, cmap in reversed(levels):
        labels = labels[cmap]
        g, vwgt = fine_g, fine_w
        counts = np.bincount(labels, minlength=c)
        _refine(g, vwgt, labels, sizes, counts, max_w, rng)

    _rebalance(g, labels, c, max_w)
    sizes = np.bincount(labels, minlength=c).astype(np.float64)
    counts = np.bincount(labels, minlength=c)
    _refine(g, np.ones(n), labels, sizes, counts, max_w, rng)
    return Partitioning(c, labels)


def random_partitioning(n: int, c: int, seed: int = 0) -> Partitioning:
    """Balanced partition that ignores the graph: a shuffled round-robin of labels."""
    if c > n:
        raise PartitionError(f"cannot split {n} nodes into {c} parts")
    rng = np.random.default_rng([seed, 104729])
    return Partitioning(c, rng.permutation(np.arange(n) % c).astype(np.int64))


def init_assignment(part: Partitioning, t: int, w_star: float, seed: int = 0) -> SparseAssignment:
    """Anchor each entity at its part with weight ``w_star``; spread the rest over ``t - 1`` random others.

    The extra indexes are distinct and never equal the anchor.
    """
    c = part.num_parts
    if t < 1:
        raise PartitionError("t must be at least 1")
    if t > c:
        raise PartitionError(f"t={t} exceeds c={c}")
    if t == 1:
        w_star = 1.0
    elif not 0.0 < w_star <= 1.0:
        raise PartitionError("w_star must lie in (0, 1]")
    n = len(part.labels)
    rng = np.random.default_rng([seed, 15485863])
    index = np.empty((n, t), dtype=np.int64)
    index[:, 0] = part.labels
    for j in range(1, t):
        todo = np.arange(n)
        while len(todo):
            draw = rng.integers(0, c - 1, size=len(todo))
            draw = draw + (draw >= part.labels[todo])  # skip the anchor
            index[todo, j] = draw
            clash = (index[todo, 1:j] == draw[:, None]).any(axis=1)
            todo = todo[clash]
    weight = np.empty((n, t))
    weight[:, 0] = w_star
    if t > 1:
        weight[:, 1:] = (1.0 - w_star) / (t - 1)
    return SparseAssignment(c, index, weight)
