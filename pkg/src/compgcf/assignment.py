"""Closed-form assignment update.

Propagated entity rows should be reproducible from propagated meta rows
with the same weights, ``H_full ~ S @ H_meta``. Solving that in the least
squares sense gives ``S = H_full @ pinv(H_meta)``; each dense row is then
cut back to its ``t`` largest weights.
"""
import logging

import numpy as np

from .embedding import SparseAssignment, compose, propagate, split
from .graph import expand_adjacency
from .linalg import pinv, rows_topk

log = logging.getLogger(__name__)


def solve_assignment(h_full: np.ndarray, h_meta: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    h_full = np.asarray(h_full, dtype=np.float64)
    h_meta = np.asarray(h_meta, dtype=np.float64)
    if not np.any(h_meta):
        log.warning("propagated codebook is all zero; assignment solve degenerates to zero")
        return np.zeros((h_full.shape[0], h_meta.shape[0]))
    return h_full @ pinv(h_meta, rcond)


def solve_assignment_batched(h_full_rows: np.ndarray, h_meta_pinv: np.ndarray) -> np.ndarray:
    """One batch of rows against a pseudo-inverse computed once per round."""
    return np.asarray(h_full_rows, dtype=np.float64) @ h_meta_pinv


def sparsify(dense_rows: np.ndarray, t: int):
    """Keep each row's ``t`` largest entries (signed), clamp negatives to zero.

    A row left with no positive weight falls back to ``1/t`` on its selected
    slots. Returns ``(index, weight)`` arrays of shape ``(rows, t)``.
    """
    dense_rows = np.asarray(dense_rows, dtype=np.float64)
    index = rows_topk(dense_rows, t)
    weight = np.take_along_axis(dense_rows, index, axis=1)
    np.maximum(weight, 0.0, out=weight)
    dead = weight.sum(axis=1) <= 1e-12
    weight[dead] = 1.0 / index.shape[1]
    return index, weight


def update_assignment(h_full: np.ndarray, h_meta: np.ndarray, t: int, rcond: float = 1e-10,
                      batch_rows: int = 4096) -> SparseAssignment:
    """Batched solve + sparsify over all entity rows."""
    c = h_meta.shape[0]
    h_meta = np.asarray(h_meta, dtype=np.float64)
    if np.any(h_meta):
        h_pinv = pinv(h_meta, rcond)
    else:
        log.warning("propagated codebook is all zero; assignment solve degenerates to zero")
        h_pinv = np.zeros((h_meta.shape[1], c))
    n = h_full.shape[0]
    t = min(t, c)
    index = np.empty((n, t), dtype=np.int64)
    weight = np.empty((n, t))
    for start in range(0, n, batch_rows):
        stop = min(start + batch_rows, n)
        dense = solve_assignment_batched(h_full[start:stop], h_pinv)
        index[start:stop], weight[start:stop] = sparsify(dense, t)
    return SparseAssignment(c, index, weight)


def update_round(state, num_layers: int, t: int, rcond: float = 1e-10, batch_rows: int = 4096):
    """Fresh forward pass, new assignment, rebuilt expanded graph.

    ``state`` needs ``codebook``, ``assignment``, ``graph`` and ``base_adjacency``
    attributes; the last three are replaced in place and the codebook is left alone.
    """
    fwd = propagate(state.graph, compose(state.assignment, state.codebook), state.codebook,
                    num_layers, retain_layers=False)
    h_full, h_meta = split(fwd.pooled, state.graph.n_entities)
    state.assignment = update_assignment(h_full, h_meta, t, rcond, batch_rows)
    state.graph = expand_adjacency(state.base_adjacency, state.assignment)
    return state
