"""Bipartite interaction graph, its expansion with meta-embedding nodes, and normalization."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import InteractionDataset
from .linalg import as_csr


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class ExpandedGraph:
    """Adjacency over ``N`` entities plus ``c`` meta-embedding nodes."""

    adjacency: sp.csr_array
    normalized: sp.csr_array
    degrees: np.ndarray
    n_entities: int

    @property
    def n_meta(self) -> int:
        return self.adjacency.shape[0] - self.n_entities


def build_adjacency(data: InteractionDataset, pairs=None) -> sp.csr_array:
    """``N x N`` symmetric block matrix ``[[0, R], [R^T, 0]]`` with unit weights.

    ``pairs`` defaults to the train split.
    """
    pairs = data.train if pairs is None else np.asarray(pairs).reshape(-1, 2)
    n = data.num_entities
    rows = pairs[:, 0]
    cols = pairs[:, 1] + data.num_users
    ones = np.ones(len(pairs))
    a = sp.coo_array(
        (np.concatenate([ones, ones]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n))
    a = as_csr(a)
    a.data[:] = 1.0  # binarized even if duplicates slipped through
    return a


def normalize(a: sp.csr_array):
    """Symmetric degree normalization ``D^-1/2 A D^-1/2``.

    Zero-degree rows and columns stay zero. Returns ``(normalized, degrees)``.
    """
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = np.zeros_like(deg, dtype=np.float64)
    nz = deg > 0
    inv_sqrt[nz] = deg[nz] ** -0.5
    coo = a.tocoo()
    vals = coo.data * inv_sqrt[coo.row] * inv_sqrt[coo.col]
    out = sp.csr_array((vals, (coo.row, coo.col)), shape=a.shape)
    out.sort_indices()
    return out, deg


def expand_adjacency(a: sp.csr_array, s) -> ExpandedGraph:
    """Append ``c`` meta-embedding nodes linked to entities by the weights of ``s``.

    ``s`` is a :class:`~compgcf.embedding.SparseAssignment` or any ``N x c``
    matrix. Exact-zero weights are dropped from the graph.
    """
    s_mat = s.to_csr() if hasattr(s, "to_csr") else as_csr(s)
    n = a.shape[0]
    if s_mat.shape[0] != n:
        raise GraphError(f"assignment has {s_mat.shape[0]} rows, graph has {n} nodes")
    if s_mat.nnz and s_mat.data.min() < 0:
        raise GraphError("negative assignment weight cannot be normalized")
    s_mat = s_mat.copy()
    s_mat.eliminate_zeros()
    c = s_mat.shape[1]
    if c == 0:
        full = as_csr(a)
    else:
        zeros = sp.csr_array((c, c))
        full = as_csr(sp.block_array([[a, s_mat], [s_mat.T, zeros]], format="csr"))
        full.eliminate_zeros()
    normalized, deg = normalize(full)
    return ExpandedGraph(full, normalized, deg, n)
