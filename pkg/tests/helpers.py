"""Shared builders and oracles for the test suite."""
import numpy as np

from compgcf.data import InteractionDataset
from compgcf.embedding import MetaCodebook, SparseAssignment, compose, propagate, split
from compgcf.graph import build_adjacency, expand_adjacency
from compgcf.trainer import TrainState, Triplets, bpr_loss_and_grad


def random_bpr_instance(rng, n_users, n_items, c, d, layers, n_trip, l2, t=2):
    """Random graph, assignment, codebook and triplets (float64 throughout)."""
    pairs = [(u, i) for u in range(n_users) for i in range(n_items) if rng.random() < 0.4]
    pairs += [(u, rng.integers(n_items)) for u in range(n_users)]
    data = InteractionDataset(n_users, n_items, np.array(pairs), np.empty((0, 2)))
    n = data.num_entities
    t = min(t, c)
    index = np.argsort(rng.random((n, c)), axis=1)[:, :t]
    s = SparseAssignment(c, index, rng.uniform(0.1, 1.0, size=(n, t)))
    a = build_adjacency(data)
    codebook = MetaCodebook(rng.standard_normal((c, d)))
    state = TrainState(codebook, s, expand_adjacency(a, s), a,
                       np.zeros((c, d)), np.zeros((c, d)))
    users = rng.integers(0, n_users, size=n_trip)
    pos = rng.integers(0, n_items, size=n_trip) + n_users
    neg = rng.integers(0, n_items, size=n_trip) + n_users
    return state, Triplets(users, pos, neg), layers, l2


def bpr_loss(state, batch, layers, l2, weights):
    cb = MetaCodebook(weights)
    composed = compose(state.assignment, cb)
    pooled = propagate(state.graph, composed, cb, layers, retain_layers=False).pooled
    h_full, _ = split(pooled, state.graph.n_entities)
    return bpr_loss_and_grad(batch, h_full, composed, l2)[0]


def fd_codebook_gradient(state, batch, layers, l2, step=1e-5):
    """Central finite differences of the BPR loss w.r.t. every codebook entry."""
    w = state.codebook.weights
    out = np.zeros_like(w)
    for idx in np.ndindex(*w.shape):
        up, dn = w.copy(), w.copy()
        up[idx] += step
        dn[idx] -= step
        out[idx] = (bpr_loss(state, batch, layers, l2, up) - bpr_loss(state, batch, layers, l2, dn)) / (2 * step)
    return out
