"""Meta-embedding codebook, sparse assignment, and mean-pooled graph propagation.

Entity embeddings are never stored: they are composed on demand as
``S @ E_meta``. Propagation stacks the composed entity rows on top of the
codebook rows and repeatedly multiplies by the normalized expanded graph.
Because that whole forward map is linear in the codebook (for a fixed
assignment), :func:`backward` is its exact adjoint.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import ExpandedGraph
from .linalg import spmm


class AssignmentError(ValueError):
    pass


@dataclass
class MetaCodebook:
    weights: np.ndarray

    @property
    def c(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "MetaCodebook":
        return MetaCodebook(self.weights.copy())


def xavier_codebook(c: int, d: int, rng: np.random.Generator, dtype=np.float64) -> MetaCodebook:
    """Glorot-uniform codebook, bound ``sqrt(6 / (c + d))``."""
    bound = np.sqrt(6.0 / (c + d))
    return MetaCodebook(rng.uniform(-bound, bound, size=(c, d)).astype(dtype))


@dataclass
class SparseAssignment:
    """Row-sparse ``N x c`` assignment with ``t`` slots per row.

    ``index[p]`` holds distinct meta-embedding ids for entity ``p`` and
    ``weight[p]`` their weights; a slot whose weight is exactly zero does
    not count as a nonzero.
    """

    c: int
    index: np.ndarray
    weight: np.ndarray
    anchor: np.ndarray = field(init=False)

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.index.ndim != 2 or self.index.shape != self.weight.shape:
            raise AssignmentError("index and weight must be matching (N, t) arrays")
        if self.index.size:
            if self.index.min() < 0 or self.index.max() >= self.c:
                raise AssignmentError("meta index out of range")
            srt = np.sort(self.index, axis=1)
            if np.any(srt[:, 1:] == srt[:, :-1]):
                raise AssignmentError("duplicate meta index within a row")
        if not np.all(np.isfinite(self.weight)):
            raise AssignmentError("non-finite assignment weight")
        self.anchor = self._anchors()

    def _anchors(self) -> np.ndarray:
        if self.t == 0:
            return np.zeros(self.n_entities, dtype=np.int64)
        # first slot wins ties
        best = np.argmax(self.weight, axis=1)
        return self.index[np.arange(self.n_entities), best]

    @property
    def n_entities(self) -> int:
        return self.index.shape[0]

    @property
    def t(self) -> int:
        return self.index.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_entities, self.c)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.weight))

    def rows(self, p: int) -> list[tuple[int, float]]:
        return [(int(q), float(w)) for q, w in zip(self.index[p], self.weight[p]) if w != 0]

    def to_csr(self) -> sp.csr_array:
        n, t = self.index.shape
        keep = self.weight.ravel() != 0
        rows = np.repeat(np.arange(n), t)[keep]
        out = sp.csr_array((self.weight.ravel()[keep], (rows, self.index.ravel()[keep])),
                           shape=(n, self.c))
        out.sort_indices()
        return out

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def copy(self) -> "SparseAssignment":
        return SparseAssignment(self.c, self.index.copy(), self.weight.copy())

    def __eq__(self, other):
        if not isinstance(other, SparseAssignment):
            return NotImplemented
        # zero-weight slots carry no information, so only nonzeros and anchors count
        if self.shape != other.shape or self.t != other.t:
            return False
        a, b = self.to_csr(), other.to_csr()
        return (np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)
                and np.array_equal(a.data, b.data) and np.array_equal(self.anchor, other.anchor))


@dataclass
class PropagationState:
    layers: list[np.ndarray] | None
    pooled: np.ndarray
    num_layers: int


def compose_batch(s: SparseAssignment, codebook: MetaCodebook, rows=slice(None)) -> np.ndarray:
    """Composed embeddings ``S[rows] @ E_meta`` for a slice or index array of entities."""
    if s.c != codebook.c:
        raise AssignmentError(f"assignment has c={s.c}, codebook has c={codebook.c}")
    idx = s.index[rows]
    w = s.weight[rows].astype(codebook.weights.dtype, copy=False)
    out = np.zeros((idx.shape[0], codebook.d), dtype=codebook.weights.dtype)
    for j in range(idx.shape[1]):
        out += w[:, j, None] * codebook.weights[idx[:, j]]
    return out


def compose(s: SparseAssignment, codebook: MetaCodebook) -> np.ndarray:
    return compose_batch(s, codebook)


def propagate(graph: ExpandedGraph, composed: np.ndarray, codebook: MetaCodebook,
              num_layers: int, retain_layers: bool = True) -> PropagationState:
    h = np.vstack([composed, codebook.weights])
    if h.shape[0] != graph.adjacency.shape[0]:
        raise ValueError(f"graph has {graph.adjacency.shape[0]} nodes, embeddings have {h.shape[0]} rows")
    op = graph.normalized.astype(h.dtype, copy=False)
    layers = [h] if retain_layers else None
    total = h.copy()
    for _ in range(num_layers):
        h = spmm(op, h)
        total += h
        if retain_layers:
            layers.append(h)
    return PropagationState(layers, total / (num_layers + 1), num_layers)


def split(pooled: np.ndarray, n: int):
    """``(H_full, H_meta)``: the first ``n`` rows and the rest."""
    return pooled[:n], pooled[n:]


def backward(graph: ExpandedGraph, state: PropagationState, grad_pooled: np.ndarray,
             s: SparseAssignment, grad_layer0: np.ndarray | None = None) -> np.ndarray:
    """Gradient w.r.t. the codebook given the gradient w.r.t. the pooled output.

    ``grad_layer0`` optionally adds a gradient taken directly on the layer-0
    rows (e.g. an L2 penalty on composed embeddings).
    """
    n = graph.n_entities
    op = graph.normalized.astype(grad_pooled.dtype, copy=False)
    share = grad_pooled / (state.num_layers + 1)
    g = share.copy()
    for _ in range(state.num_layers):
        # normalized adjacency is symmetric, so it is its own transpose
        g = share + spmm(op, g)
    if grad_layer0 is not None:
        g = g + grad_layer0
    s_csr = s.to_csr().astype(g.dtype)
    return np.asarray(s_csr.T @ g[:n]) + g[n:]


def parameter_count(s: SparseAssignment, codebook: MetaCodebook) -> int:
    """Stored scalars: assignment nonzeros plus the dense codebook."""
    return s.nnz + codebook.c * codebook.d
