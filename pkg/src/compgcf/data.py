"""User-item interaction data: container, text reader/writer, synthetic generator."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    pass


def _dedup_pairs(pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return pairs
    return np.unique(pairs, axis=0)


@dataclass
class InteractionDataset:
    """Users ``[0, num_users)`` and items ``[0, num_items)`` with train/test pairs.

    Pair arrays are ``(P, 2)`` int64 arrays of ``(user, item)``, sorted and
    deduplicated. Entity ids put users first: entity ``u`` is user ``u`` and
    entity ``num_users + i`` is item ``i``.
    """

    num_users: int
    num_items: int
    train: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = _dedup_pairs(self.train)
        self.test = _dedup_pairs(self.test)
        for name, pairs in (("train", self.train), ("test", self.test)):
            if len(pairs) == 0:
                continue
            if pairs.min() < 0:
                raise DatasetError(f"negative id in {name} pairs")
            if pairs[:, 0].max() >= self.num_users or pairs[:, 1].max() >= self.num_items:
                raise DatasetError(f"{name} pair out of range")

    @property
    def num_entities(self) -> int:
        return self.num_users + self.num_items

    def item_entity(self, items):
        return np.asarray(items) + self.num_users

    def user_items(self, which: str = "train") -> list[np.ndarray]:
        """Per-user sorted item arrays for the ``train`` or ``test`` split."""
        pairs = getattr(self, which)
        bounds = np.searchsorted(pairs[:, 0], np.arange(self.num_users + 1))
        return [pairs[bounds[u]:bounds[u + 1], 1] for u in range(self.num_users)]

    def __eq__(self, other):
        if not isinstance(other, InteractionDataset):
            return NotImplemented
        return (self.num_users == other.num_users and self.num_items == other.num_items
                and np.array_equal(self.train, other.train)
                and np.array_equal(self.test, other.test))


def _read_lines(path) -> list[tuple[int, list[int]]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                ids = [int(tok) for tok in tokens]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer token") from None
            if any(i < 0 for i in ids):
                raise DatasetError(f"{path}:{lineno}: negative id")
            rows.append((ids[0], ids[1:]))
    return rows


def _pairs(rows) -> np.ndarray:
    out = [(u, i) for u, items in rows for i in items]
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def load_dataset(train_path, test_path) -> InteractionDataset:
    """Read two files of ``user item item ...`` lines.

    User and item counts are ``max id + 1`` over both files.
    """
    train_rows = _read_lines(train_path)
    test_rows = _read_lines(test_path)
    all_rows = train_rows + test_rows
    num_users = max((u for u, _ in all_rows), default=-1) + 1
    num_items = max((max(items) for _, items in all_rows if items), default=-1) + 1
    return InteractionDataset(num_users, num_items, _pairs(train_rows), _pairs(test_rows))


def load_dataset_dir(path) -> InteractionDataset:
    path = Path(path)
    for name in ("train.txt", "test.txt"):
        if not (path / name).is_file():
            raise DatasetError(f"missing {path / name}")
    return load_dataset(path / "train.txt", path / "test.txt")


def write_split(pairs: np.ndarray, num_users: int, path) -> None:
    """Write one ``user item item ...`` line per user (users without items get a bare id)."""
    bounds = np.searchsorted(pairs[:, 0], np.arange(num_users + 1))
    with open(path, "w", encoding="utf-8") as fh:
        for u in range(num_users):
            items = pairs[bounds[u]:bounds[u + 1], 1]
            fh.write(" ".join(str(x) for x in (u, *items)) + "\n")


def save_dataset_dir(data: InteractionDataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_split(data.train, data.num_users, path / "train.txt")
    write_split(data.test, data.num_users, path / "test.txt")


def split_validation(data: InteractionDataset, fraction: float = 0.1, seed: int = 0):
    """Hold out ``fraction`` of each user's train positives for validation.

    Only users with at least two positives contribute, and each such user
    gives at least one pair. Returns ``(fit_pairs, valid_pairs)``.
    """
    rng = np.random.default_rng([seed, 7919])
    fit, valid = [], []
    for u, items in enumerate(data.user_items("train")):
        if len(items) < 2:
            fit.extend((u, i) for i in items)
            continue
        n_val = max(1, int(round(fraction * len(items))))
        n_val = min(n_val, len(items) - 1)
        held = set(rng.choice(items, size=n_val, replace=False).tolist())
        for i in items:
            (valid if i in held else fit).append((u, i))
    return _dedup_pairs(fit), _dedup_pairs(valid)


def planted_communities(n_users: int = 400, n_items: int = 400, n_blocks: int = 4,
                        p_in: float = 0.3, p_out: float = 0.0, test_fraction: float = 0.2,
                        popularity_skew: float = 0.0, seed: int = 0) -> InteractionDataset:
    """Synthetic dataset with ``n_blocks`` user blocks matched to ``n_blocks`` item blocks.

    Users interact with items of their own block with probability ``p_in``
    and with other items with probability ``p_out``. Each user's pairs are
    split into train and test by ``test_fraction`` (every user keeps at
    least one train pair).
    """
    rng = np.random.default_rng(seed)
    ublock = np.arange(n_users) * n_blocks // n_users
    iblock = np.arange(n_items) * n_blocks // n_items
    same = ublock[:, None] == iblock[None, :]
    pop = np.ones(n_items)
    if popularity_skew > 0:
        for b in range(n_blocks):
            members = np.flatnonzero(iblock == b)
            ranks = rng.permutation(len(members)) + 1.0
            w = ranks ** -popularity_skew
            pop[members] = w / w.mean()
    prob = np.where(same, np.minimum(p_in * pop[None, :], 1.0), p_out)
    hits = rng.random((n_users, n_items)) < prob
    train, test = [], []
    for u in range(n_users):
        items = np.flatnonzero(hits[u])
        if len(items) == 0:
            items = rng.choice(np.flatnonzero(same[u]), size=1)
        n_test = int(round(test_fraction * len(items)))
        n_test = min(n_test, len(items) - 1)
        perm = rng.permutation(items)
        test.extend((u, i) for i in perm[:n_test])
        train.extend((u, i) for i in perm[n_test:])
    return InteractionDataset(n_users, n_items, np.array(train), np.array(test).reshape(-1, 2))
