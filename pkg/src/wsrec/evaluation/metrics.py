"""Hit rate and NDCG over top-N lists.

Both are pooled over the users that have at least one test item. NDCG is
micro-averaged: total DCG over all users divided by total IDCG.
"""

from __future__ import annotations

from typing import Mapping, Sequence, Union

import numpy as np

from ..core import DataError
from ..recommend import RecommendationList

Recs = Union[Sequence[RecommendationList], Mapping[int, Sequence[int]]]


def _as_lists(recs: Recs) -> dict[int, list[int]]:
    if isinstance(recs, Mapping):
        return {int(u): [int(i) for i in items] for u, items in recs.items()}
    return {r.user_index: r.items.tolist() for r in recs}


def _evaluable(test: Mapping[int, set]) -> list[int]:
    users = [u for u, items in test.items() if len(items) > 0]
    if not users:
        raise DataError("no user has a test item; metrics are undefined")
    return users


def hit_rate(recs: Recs, test: Mapping[int, set], n: int | None = None, per_user: bool = True) -> float:
    """Share of evaluable users with a test item in their top-``n``.

    ``per_user=False`` counts every hit item instead of every hit user (the
    result can then exceed 1).
    """
    lists = _as_lists(recs)
    users = _evaluable(test)
    hits = 0
    for u in users:
        top = lists.get(u, [])[:n] if n is not None else lists.get(u, [])
        found = sum(1 for i in top if i in test[u])
        hits += (found > 0) if per_user else found
    return hits / len(users)


def _discounts(length: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, length + 2))


def ndcg(recs: Recs, test: Mapping[int, set], n: int | None = None, cap_idcg_at_n: bool = True) -> float:
    """Pooled DCG / IDCG over evaluable users.

    The ideal gain for a user counts one hit per test item; with
    ``cap_idcg_at_n`` (default) only the first ``min(|test_u|, n)`` ranks
    count, so the ratio stays in [0, 1].
    """
    lists = _as_lists(recs)
    users = _evaluable(test)
    dcg = 0.0
    idcg = 0.0
    for u in users:
        top = lists.get(u, [])
        if n is not None:
            top = top[:n]
        disc = _discounts(len(top))
        dcg += float(sum(disc[k] for k, i in enumerate(top) if i in test[u]))
        ideal = len(test[u])
        if cap_idcg_at_n and n is not None:
            ideal = min(ideal, n)
        idcg += float(_discounts(ideal).sum())
    return dcg / idcg


def curves(
    recs: Recs,
    test: Mapping[int, set],
    n_max: int,
    cap_idcg_at_n: bool = True,
    per_user: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """HR@N and NDCG@N for every N in 1..n_max in one pass.

    Returns two arrays of length ``n_max`` (index k holds N = k + 1).
    """
    lists = _as_lists(recs)
    users = _evaluable(test)
    hits = np.zeros((len(users), n_max), dtype=bool)
    sizes = np.zeros(len(users), dtype=np.int64)
    for row, u in enumerate(users):
        t = test[u]
        sizes[row] = len(t)
        top = lists.get(u, [])[:n_max]
        for k, i in enumerate(top):
            if i in t:
                hits[row, k] = True

    disc = _discounts(n_max)
    cum_hits = np.cumsum(hits, axis=1)
    if per_user:
        hr = (cum_hits > 0).sum(axis=0) / len(users)
    else:
        hr = cum_hits.sum(axis=0) / len(users)
    dcg = np.cumsum((hits * disc).sum(axis=0))

    ideal_prefix = np.concatenate([[0.0], np.cumsum(_discounts(int(sizes.max())))])
    if cap_idcg_at_n:
        Ns = np.arange(1, n_max + 1)
        idcg = ideal_prefix[np.minimum(sizes[:, None], Ns[None, :])].sum(axis=0)
    else:
        idcg = np.full(n_max, ideal_prefix[sizes].sum())
    return hr.astype(np.float64), dcg / idcg
