"""User-item, item-item and weighted-similarity top-N recommendation.

All three recommenders share one pair of embeddings. For user u and an item
i outside the history I_u:

* user-item score   R = sim(p_u, q_i)
* item-item score   S = mean over j in I_u of sim(q_i, q_j)
* weighted score    Z = (w_R * R + w_S * S) / (w_R + w_S)

``sim`` is the dot product or cosine similarity. Because both are bilinear
once vectors are (optionally) normalised, S equals sim(q_i, centroid of the
normalised history), which is what the batch scorer uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import EmbeddingPair, IdMap, InteractionMatrix

DOT = "dot"
COSINE = "cosine"
METRICS = (DOT, COSINE)

DEFAULT_RATIOS = ((1, 4), (2, 3), (1, 1), (3, 2), (4, 1))


@dataclass(frozen=True)
class WeightConfig:
    w_r: float = 1.0
    w_s: float = 1.0
    metric: str = DOT

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.w_r < 0 or self.w_s < 0:
            raise ValueError("weights must be non-negative")
        if not self.w_r + self.w_s > 0:
            raise ValueError("at least one weight must be positive")

    @property
    def label(self) -> str:
        return f"{self.metric}:{self.w_r:g}:{self.w_s:g}"


USER_ITEM = WeightConfig(1.0, 0.0, DOT)
ITEM_ITEM = WeightConfig(0.0, 1.0, DOT)


def weight_grid(ratios: Iterable[tuple[float, float]] = DEFAULT_RATIOS, metrics: Iterable[str] = METRICS) -> list[WeightConfig]:
    return [WeightConfig(float(r), float(s), m) for m in metrics for r, s in ratios]


@dataclass(frozen=True)
class RecommendationList:
    user_index: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.items)

    def truncated(self, n: int) -> "RecommendationList":
        return RecommendationList(self.user_index, self.items[:n], self.scores[:n])


def _normalize(v: np.ndarray) -> np.ndarray:
    """Row-normalise; zero rows stay zero."""
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, v / safe, 0.0)


def similarity(a: np.ndarray, b: np.ndarray, metric: str) -> float:
    """Similarity of two vectors; cosine is 0 when either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if metric == DOT:
        return float(a @ b)
    if metric == COSINE:
        na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return float(a @ b) / (na * nb)
    raise ValueError(f"unknown metric {metric!r}")


def user_item_score(e: EmbeddingPair, u: int, i: int, metric: str = DOT) -> float:
    return similarity(e.P[u], e.Q[i], metric)


def item_item_score(e: EmbeddingPair, history: Iterable[int], i: int, metric: str = DOT) -> float:
    """Mean similarity of item ``i`` to the consumed items; 0 for an empty history."""
    history = list(history)
    if not history:
        return 0.0
    return sum(similarity(e.Q[i], e.Q[j], metric) for j in history) / len(history)


def weighted_score(r: float, s: float, w: WeightConfig) -> float:
    total = w.w_r + w.w_s
    if not total > 0:
        raise ValueError("both weights are zero")
    return (w.w_r * r + w.w_s * s) / total


class Scorer:
    """Batch scorer over one embedding pair and one interaction matrix.

    Caches the normalised factors and per-user history centroids per metric
    so several weight settings can be scored from the same precomputation.
    """

    def __init__(self, e: EmbeddingPair, m: InteractionMatrix):
        e.check_matches(m)
        self.e = e
        self.m = m
        self._cache: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _prepared(self, metric: str):
        hit = self._cache.get(metric)
        if hit is None:
            if metric == DOT:
                P, Q = self.e.P, self.e.Q
            elif metric == COSINE:
                P, Q = _normalize(self.e.P), _normalize(self.e.Q)
            else:
                raise ValueError(f"unknown metric {metric!r}")
            lengths = self.m.row_lengths()
            sums = self.m.to_csr() @ Q
            centroids = np.where(lengths[:, None] > 0, sums / np.maximum(lengths, 1)[:, None], 0.0)
            hit = self._cache[metric] = (P, Q, centroids)
        return hit

    def scores(self, users: np.ndarray, w: WeightConfig) -> np.ndarray:
        """Z for ``users`` x all items (history not yet masked)."""
        P, Q, C = self._prepared(w.metric)
        total = w.w_r + w.w_s
        if w.w_s == 0:
            return (w.w_r * (P[users] @ Q.T)) / total
        if w.w_r == 0:
            return (w.w_s * (C[users] @ Q.T)) / total
        return (w.w_r * (P[users] @ Q.T) + w.w_s * (C[users] @ Q.T)) / total

    def top_n(self, w: WeightConfig, n: int, users: Sequence[int] | None = None, batch: int = 1024) -> list[RecommendationList]:
        if n < 1:
            raise ValueError("N must be at least 1")
        users = np.arange(self.m.n_users) if users is None else np.asarray(users, dtype=np.int64)
        out: list[RecommendationList] = []
        indptr, indices = self.m.indptr, self.m.indices
        for start in range(0, len(users), batch):
            block = users[start : start + batch]
            Z = self.scores(block, w)
            for row, u in enumerate(block.tolist()):
                z = Z[row]
                z[indices[indptr[u] : indptr[u + 1]]] = -np.inf
                out.append(_select(int(u), z, n))
        return out


def _select(u: int, z: np.ndarray, n: int) -> RecommendationList:
    """Top-n of ``z`` by descending score, ties by ascending index, skipping -inf."""
    n_cand = int(np.count_nonzero(z > -np.inf))
    n = min(n, n_cand)
    if n == 0:
        return RecommendationList(u, np.zeros(0, dtype=np.int64), np.zeros(0))
    neg = -z
    if n < len(z):
        kth = np.partition(neg, n - 1)[n - 1]
        cand = np.flatnonzero(neg <= kth)
    else:
        cand = np.arange(len(z))
    order = cand[np.argsort(neg[cand], kind="stable")][:n]
    return RecommendationList(u, order.astype(np.int64), z[order].copy())


def top_n(
    e: EmbeddingPair,
    m: InteractionMatrix,
    w: WeightConfig,
    n: int,
    users: Sequence[int] | None = None,
) -> list[RecommendationList]:
    """Top-``n`` unseen items per user ranked by the weighted score Z."""
    return Scorer(e, m).top_n(w, n, users)


def format_recommendations(recs: Sequence[RecommendationList], user_map: IdMap, item_map: IdMap) -> str:
    """``user_id<TAB>item:score,...`` lines, scores to 6 decimals, users in map order."""
    by_user = {r.user_index: r for r in recs}
    lines = []
    for u in sorted(by_user):
        r = by_user[u]
        body = ",".join(f"{item_map[i]}:{s:.6f}" for i, s in zip(r.items.tolist(), r.scores.tolist()))
        lines.append(f"{user_map[u]}\t{body}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_recommendations(path, recs, user_map: IdMap, item_map: IdMap) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_recommendations(recs, user_map, item_map))
