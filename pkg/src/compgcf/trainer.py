"""BPR training with a frozen-assignment warm-up followed by alternating assignment updates."""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .assignment import update_round
from .config import TrainConfig
from .data import InteractionDataset, split_validation
from .embedding import (MetaCodebook, SparseAssignment, backward, compose, parameter_count,
                        propagate, split, xavier_codebook)
from .graph import ExpandedGraph, build_adjacency, expand_adjacency
from .metrics import evaluate_ranking
from .partition import init_assignment, partition_graph, random_partitioning

log = logging.getLogger(__name__)

LOG_HEADER = "epoch\tphase\tloss\tndcg@10\trecall@10\tndcg@20\trecall@20\ts_nnz\twall_seconds"


class Triplets(NamedTuple):
    """Parallel arrays of entity ids: user, positive item, negative item."""

    user: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def __len__(self):
        return len(self.user)

    def take(self, sel) -> "Triplets":
        return Triplets(self.user[sel], self.pos[sel], self.neg[sel])


@dataclass
class TrainState:
    codebook: MetaCodebook
    assignment: SparseAssignment
    graph: ExpandedGraph
    base_adjacency: object
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int = 0
    epoch: int = 0
    phase: str = "pretrain"

    def snapshot(self) -> "TrainState":
        return replace(self, codebook=self.codebook.copy(), assignment=self.assignment.copy(),
                       adam_m=self.adam_m.copy(), adam_v=self.adam_v.copy())


@dataclass
class TrainResult:
    state: TrainState
    log_lines: list[str]
    best_valid: float
    best_epoch: int
    test_metrics: dict[str, float]
    update_epochs: list[int] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def log_text(self) -> str:
        return "\n".join([LOG_HEADER, *self.log_lines]) + "\n"


def sample_triplets(data: InteractionDataset, k_neg: int, seed) -> Triplets:
    """``k_neg`` triplets per train pair, negatives uniform over the user's unseen items.

    Users who have interacted with every item are skipped with a warning.
    Returned ids are entity ids (items shifted by ``num_users``).
    """
    rng = np.random.default_rng(seed)
    pairs = data.train
    n_items = data.num_items
    counts = np.bincount(pairs[:, 0], minlength=data.num_users)
    full = counts >= n_items
    if full.any():
        log.warning("skipping negative sampling for %d user(s) with no unseen items", int(full.sum()))
        pairs = pairs[~full[pairs[:, 0]]]
    users = np.repeat(pairs[:, 0], k_neg)
    pos = np.repeat(pairs[:, 1], k_neg)
    keys = pairs[:, 0] * n_items + pairs[:, 1]  # sorted, since pairs are sorted
    neg = rng.integers(0, n_items, size=len(users))
    todo = np.arange(len(users))
    while len(todo):
        probe = users[todo] * n_items + neg[todo]
        loc = np.minimum(np.searchsorted(keys, probe), max(len(keys) - 1, 0))
        clash = keys[loc] == probe if len(keys) else np.zeros(len(todo), dtype=bool)
        todo = todo[clash]
        neg[todo] = rng.integers(0, n_items, size=len(todo))
    off = data.num_users
    return Triplets(users, pos + off, neg + off)


def bpr_loss_and_grad(batch: Triplets, h_full: np.ndarray, layer0: np.ndarray, l2: float):
    """Mean BPR loss over the batch plus ``l2`` times the mean squared layer-0 norm of its entities.

    Returns ``(loss, grad_h, grad_layer0)`` where both gradients are
    ``N x d`` arrays (zero outside the batch's rows).
    """
    b = len(batch)
    hu, hp, hn = h_full[batch.user], h_full[batch.pos], h_full[batch.neg]
    diff = np.einsum("ij,ij->i", hu, hp - hn)
    loss = np.logaddexp(0.0, -diff).mean()  # softplus(-x) == -log(sigmoid(x))
    g = (-np.exp(-np.logaddexp(0.0, diff)) / b).astype(h_full.dtype)  # -sigmoid(-x) / b
    grad_h = np.zeros_like(h_full)
    np.add.at(grad_h, batch.user, g[:, None] * (hp - hn))
    np.add.at(grad_h, batch.pos, g[:, None] * hu)
    np.add.at(grad_h, batch.neg, -g[:, None] * hu)

    grad_l0 = np.zeros_like(layer0)
    if l2:
        eu, ep, en = layer0[batch.user], layer0[batch.pos], layer0[batch.neg]
        sq = (eu * eu).sum(1) + (ep * ep).sum(1) + (en * en).sum(1)
        loss = loss + l2 * sq.mean()
        scale = 2.0 * l2 / b
        np.add.at(grad_l0, batch.user, scale * eu)
        np.add.at(grad_l0, batch.pos, scale * ep)
        np.add.at(grad_l0, batch.neg, scale * en)
    return float(loss), grad_h, grad_l0


def adam_step(state: TrainState, grad: np.ndarray, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    w = state.codebook.weights
    if grad.shape != w.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match codebook {w.shape}")
    state.step += 1
    state.adam_m *= beta1
    state.adam_m += (1 - beta1) * grad
    state.adam_v *= beta2
    state.adam_v += (1 - beta2) * grad * grad
    m_hat = state.adam_m / (1 - beta1 ** state.step)
    v_hat = state.adam_v / (1 - beta2 ** state.step)
    w -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(w.dtype)


def codebook_gradient(state: TrainState, batch: Triplets, num_layers: int, l2: float):
    """One forward/backward pass; returns ``(loss, d loss / d codebook)``."""
    n = state.graph.n_entities
    composed = compose(state.assignment, state.codebook)
    fwd = propagate(state.graph, composed, state.codebook, num_layers)
    h_full, _ = split(fwd.pooled, n)
    loss, grad_h, grad_l0 = bpr_loss_and_grad(batch, h_full, composed, l2)
    c, d = state.codebook.weights.shape
    pad = np.zeros((c, d), dtype=grad_h.dtype)
    grad = backward(state.graph, fwd, np.vstack([grad_h, pad]), state.assignment,
                    np.vstack([grad_l0, pad]))
    return loss, grad


def _cast_graph(graph: ExpandedGraph, dtype) -> ExpandedGraph:
    return replace(graph, normalized=graph.normalized.astype(dtype, copy=False))


def init_state(fit: InteractionDataset, cfg: TrainConfig) -> TrainState:
    dtype = np.float32 if cfg.scalar_width == 32 else np.float64
    codebook = xavier_codebook(cfg.c, cfg.d, np.random.default_rng([cfg.seed, 1]), dtype)
    adjacency = build_adjacency(fit)
    if cfg.init_method == "partition":
        part = partition_graph(adjacency, cfg.c, seed=cfg.seed, balance_factor=cfg.balance_factor)
    else:
        part = random_partitioning(fit.num_entities, cfg.c, seed=cfg.seed)
    assignment = init_assignment(part, cfg.t, cfg.w_star, seed=cfg.seed)
    graph = _cast_graph(expand_adjacency(adjacency, assignment), dtype)
    zeros = np.zeros_like(codebook.weights)
    return TrainState(codebook, assignment, graph, adjacency, zeros, zeros.copy())


def entity_embeddings(state: TrainState, num_layers: int) -> np.ndarray:
    """Propagated entity rows ``H_full`` for the current state."""
    fwd = propagate(state.graph, compose(state.assignment, state.codebook), state.codebook,
                    num_layers, retain_layers=False)
    return split(fwd.pooled, state.graph.n_entities)[0]


def evaluate_state(state: TrainState, data: InteractionDataset, num_layers: int,
                   relevant_pairs: np.ndarray, exclude_pairs: np.ndarray) -> dict[str, float]:
    def per_user(pairs):
        tmp = InteractionDataset(data.num_users, data.num_items, pairs, np.empty((0, 2)))
        return tmp.user_items("train")

    h_full = entity_embeddings(state, num_layers)
    res = evaluate_ranking(h_full, data.num_users, per_user(relevant_pairs), per_user(exclude_pairs))
    return res.summary


def train(data: InteractionDataset, cfg: TrainConfig,
          on_log: Callable[[str], None] | None = None) -> TrainResult:
    """Warm up the codebook with the assignment frozen, then alternate codebook epochs
    with closed-form assignment updates every ``cfg.m`` epochs.

    Both stages stop after ``cfg.patience`` epochs without a better validation
    NDCG@20 (or at their epoch cap). The returned state is the best one seen.
    """
    cfg.validate(data.num_entities)
    fit_pairs, valid_pairs = split_validation(data, cfg.validation_fraction, cfg.seed)
    fit = InteractionDataset(data.num_users, data.num_items, fit_pairs, valid_pairs)
    has_valid = len(valid_pairs) > 0
    state = init_state(fit, cfg)
    dtype = state.codebook.weights.dtype

    lines: list[str] = []
    losses: list[float] = []
    updates: list[int] = []
    best = state.snapshot()
    best_score, best_epoch = -np.inf, 0

    def emit(loss, metrics, t0):
        wall = f"{time.perf_counter() - t0:.3f}" if cfg.log_wall_time else "-"
        line = "\t".join([
            str(state.epoch), state.phase, f"{loss:.6f}",
            *(f"{metrics.get(k, 0.0):.6f}" for k in ("ndcg@10", "recall@10", "ndcg@20", "recall@20")),
            str(state.assignment.nnz), wall])
        lines.append(line)
        if on_log:
            on_log(line)

    def run_epoch() -> float:
        trip = sample_triplets(fit, cfg.negatives_per_positive, [cfg.seed, state.epoch])
        order = np.random.default_rng([cfg.seed, state.epoch, 2]).permutation(len(trip))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size_triplets):
            batch = trip.take(order[start:start + cfg.batch_size_triplets])
            loss, grad = codebook_gradient(state, batch, cfg.L, cfg.l2)
            adam_step(state, grad, cfg.lr)
            total += loss * len(batch)
        return total / max(len(trip), 1)

    def run_phase(phase: str, max_epochs: int):
        nonlocal best, best_score, best_epoch
        state.phase = phase
        stale = 0
        for local in range(max_epochs):
            t0 = time.perf_counter()
            state.epoch += 1
            loss = run_epoch()
            if phase == "main" and local % cfg.m == 0:
                update_round(state, cfg.L, cfg.t, cfg.rcond, cfg.assignment_batch_rows)
                state.graph = _cast_graph(state.graph, dtype)
                updates.append(local)
            losses.append(loss)
            metrics = evaluate_state(state, data, cfg.L, valid_pairs, fit_pairs) if has_valid else {}
            emit(loss, metrics, t0)
            score = metrics.get("ndcg@20", 0.0)
            if not has_valid or score > best_score:
                best, best_score, best_epoch = state.snapshot(), score, state.epoch
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        return best

    run_phase("pretrain", cfg.epochs_pretrain_max)
    _restore(state, best, dtype)
    run_phase("main", cfg.epochs_main_max)
    _restore(state, best, dtype)

    test = evaluate_state(state, data, cfg.L, data.test, data.train) if len(data.test) else {}
    return TrainResult(state, lines, float(best_score), best_epoch, test, updates, losses)


def _restore(state: TrainState, snap: TrainState, dtype) -> None:
    state.codebook = snap.codebook.copy()
    state.assignment = snap.assignment.copy()
    state.adam_m, state.adam_v = snap.adam_m.copy(), snap.adam_v.copy()
    state.step = snap.step
    state.graph = snap.graph if snap.graph.normalized.dtype == dtype else _cast_graph(snap.graph, dtype)


def parameters(state: TrainState) -> int:
    return parameter_count(state.assignment, state.codebook)
