"""Full-ranking top-N evaluation (NDCG@N, Recall@N)."""
from dataclasses import dataclass, field

import numpy as np


def ndcg_at(ranked, relevant, n: int) -> float:
    relevant = set(int(x) for x in relevant)
    if not relevant:
        return 0.0
    dcg = sum(1.0 / np.log2(i + 2) for i, item in enumerate(ranked[:n]) if int(item) in relevant)
    idcg = sum(1.0 / np.log2(i + 2) for i in range(min(n, len(relevant))))
    return float(dcg / idcg)


def recall_at(ranked, relevant, n: int) -> float:
    relevant = set(int(x) for x in relevant)
    if not relevant:
        return 0.0
    hits = len(relevant.intersection(int(x) for x in ranked[:n]))
    return hits / len(relevant)


def score_all(h_full: np.ndarray, user: int, num_users: int, exclude=()) -> np.ndarray:
    """Items ranked by ``h_u . h_i`` (descending, lower item id first on ties), ``exclude`` removed."""
    items = h_full[num_users:]
    scores = items @ h_full[user]
    order = np.lexsort((np.arange(len(scores)), -scores))
    if len(exclude):
        order = order[~np.isin(order, np.asarray(list(exclude), dtype=np.int64))]
    return order


def _topn_batch(scores: np.ndarray, n: int) -> np.ndarray:
    """Row-wise top-``n`` with exact tie handling (ties to the lower column)."""
    n = min(n, scores.shape[1])
    if n == scores.shape[1]:
        return np.argsort(-scores, axis=1, kind="stable")
    out = np.empty((scores.shape[0], n), dtype=np.int64)
    part = np.argpartition(-scores, n - 1, axis=1)[:, :n]
    kth = np.take_along_axis(scores, part, axis=1).min(axis=1)
    for r in range(scores.shape[0]):
        cand = np.flatnonzero(scores[r] >= kth[r])
        out[r] = cand[np.argsort(-scores[r, cand], kind="stable")][:n]
    return out


@dataclass
class RankingResult:
    users: np.ndarray
    top: np.ndarray
    per_user: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def summary(self) -> dict[str, float]:
        return {k: float(v.mean()) if len(v) else 0.0 for k, v in self.per_user.items()}


def evaluate_ranking(h_full: np.ndarray, num_users: int, relevant: list, exclude: list,
                     ns=(10, 20), batch_users: int = 1024) -> RankingResult:
    """Rank every item for every user with a non-empty ``relevant`` set.

    ``relevant[u]`` and ``exclude[u]`` are item-id arrays; excluded items are
    pushed below everything else before ranking.
    """
    users = np.array([u for u in range(num_users) if len(relevant[u])], dtype=np.int64)
    max_n = max(ns)
    tops = []
    items = h_full[num_users:]
    for start in range(0, len(users), batch_users):
        batch = users[start:start + batch_users]
        scores = (h_full[batch] @ items.T).astype(np.float64)
        for r, u in enumerate(batch):
            if len(exclude[u]):
                scores[r, exclude[u]] = -np.inf
        tops.append(_topn_batch(scores, max_n))
    top = np.vstack(tops) if tops else np.empty((0, max_n), dtype=np.int64)
    per_user = {f"{m}@{n}": np.empty(len(users)) for n in ns for m in ("ndcg", "recall")}
    for r, u in enumerate(users):
        for n in ns:
            per_user[f"ndcg@{n}"][r] = ndcg_at(top[r], relevant[u], n)
            per_user[f"recall@{n}"][r] = recall_at(top[r], relevant[u], n)
    return RankingResult(users, top, per_user)
