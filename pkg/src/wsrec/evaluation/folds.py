"""Random five-fold partition of interactions with cold-start exclusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import DataError, InteractionMatrix, build_interaction_matrix

FOLD_COUNT = 5


@dataclass(frozen=True)
class Fold:
    train: InteractionMatrix
    # (user_index, item_index) pairs in the index space of ``train``
    test: np.ndarray
    dropped: int

    def test_sets(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {}
        for u, i in self.test.tolist():
            out.setdefault(u, set()).add(i)
        return out


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple[Fold, ...]
    assignment: np.ndarray  # fold id of each interaction, in matrix storage order
    seed: int

    @property
    def fold_count(self) -> int:
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    def __getitem__(self, k) -> Fold:
        return self.folds[k]

    def __len__(self) -> int:
        return len(self.folds)


def split_folds(m: InteractionMatrix, seed: int, fold_count: int = FOLD_COUNT) -> FoldSplit:
    """Shuffle interactions with ``seed`` and deal them round-robin into folds.

    Each fold's training matrix is rebuilt from the other folds (fresh id
    maps, first-appearance order over the original storage order), and test
    pairs whose user or item never occurs in that training matrix are dropped.
    """
    n = m.interaction_count
    if n < fold_count:
        raise DataError(f"need at least {fold_count} interactions to split, have {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % fold_count

    users = m.user_indices()
    items = m.indices
    uid = m.user_map.external_ids
    iid = m.item_map.external_ids
    folds = []
    for f in range(fold_count):
        in_test = assignment == f
        train_pairs = [(uid[u], iid[i]) for u, i in zip(users[~in_test].tolist(), items[~in_test].tolist())]
        train = build_interaction_matrix(train_pairs)
        test = []
        dropped = 0
        for u, i in zip(users[in_test].tolist(), items[in_test].tolist()):
            tu = train.user_map.get(uid[u])
            ti = train.item_map.get(iid[i])
            if tu is None or ti is None:
                dropped += 1
            else:
                test.append((tu, ti))
        test_arr = np.asarray(test, dtype=np.int64).reshape(-1, 2)
        folds.append(Fold(train, test_arr, dropped))
    return FoldSplit(tuple(folds), assignment, seed)
