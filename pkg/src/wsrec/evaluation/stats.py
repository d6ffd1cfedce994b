"""Friedman test over per-dataset model ranks, with the Nemenyi critical difference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import chi2, rankdata

from ..core import DataError

# q_alpha / sqrt(2) for the studentized range with infinite degrees of
# freedom, indexed by the number of models k = 2..20.
NEMENYI_Q = {
    0.05: (
        1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878,
        3.101730, 3.163684, 3.218654, 3.268004, 3.312739, 3.353618, 3.391230,
        3.426041, 3.458425, 3.488685, 3.517073, 3.543799,
    ),
    0.10: (
        1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884,
        2.854606, 2.919889, 2.977768, 3.029694, 3.076733, 3.119693, 3.159199,
        3.195743, 3.229723, 3.261461, 3.291224, 3.319233,
    ),
}


@dataclass(frozen=True)
class StatTestResult:
    friedman_statistic: float
    p_value: float
    k: int
    n: int
    average_ranks: tuple[float, ...]
    nemenyi_cd: float
    alpha: float
    models: tuple[str, ...] = ()

    def significant_pairs(self) -> list[tuple[str, str, float]]:
        """Model pairs whose average ranks differ by more than the CD."""
        names = self.models or tuple(str(j) for j in range(self.k))
        out = []
        for a in range(self.k):
            for b in range(a + 1, self.k):
                gap = abs(self.average_ranks[a] - self.average_ranks[b])
                if gap > self.nemenyi_cd:
                    out.append((names[a], names[b], gap))
        return out


def nemenyi_q(k: int, alpha: float) -> float:
    table = NEMENYI_Q.get(round(alpha, 2))
    if table is None:
        raise ValueError(f"alpha must be one of {sorted(NEMENYI_Q)}, got {alpha}")
    if not 2 <= k <= len(table) + 1:
        raise ValueError(f"tabulated for 2 <= k <= {len(table) + 1}, got k={k}")
    return table[k - 2]


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    """``q_alpha * sqrt(k (k + 1) / (6 n))``."""
    return nemenyi_q(k, alpha) * math.sqrt(k * (k + 1) / (6.0 * n))


def average_ranks(scores: np.ndarray) -> np.ndarray:
    """Rank models within each dataset (row); 1 is the highest score, ties share the mean rank."""
    return np.vstack([rankdata(-row, method="average") for row in scores]).mean(axis=0)


def friedman_test(
    scores: Sequence[Sequence[float]],
    alpha: float = 0.05,
    models: Sequence[str] = (),
) -> StatTestResult:
    """Friedman statistic for an n-datasets x k-models score table (higher is better).

    No tie correction is applied to the statistic.
    """
    table = np.asarray(scores, dtype=np.float64)
    if table.ndim != 2:
        raise DataError("score table must be two-dimensional")
    n, k = table.shape
    if n < 2 or k < 2:
        raise DataError(f"need at least 2 datasets and 2 models, got {n}x{k}")
    if not np.isfinite(table).all():
        raise DataError("score table has missing or non-finite cells")
    if models and len(models) != k:
        raise DataError(f"{len(models)} model names for {k} columns")
    ranks = average_ranks(table)
    stat = 12.0 * n / (k * (k + 1)) * (float(np.sum(ranks**2)) - k * (k + 1) ** 2 / 4.0)
    stat = max(stat, 0.0)
    return StatTestResult(
        friedman_statistic=stat,
        p_value=float(chi2.sf(stat, k - 1)),
        k=k,
        n=n,
        average_ranks=tuple(float(r) for r in ranks),
        nemenyi_cd=nemenyi_cd(k, n, alpha),
        alpha=alpha,
        models=tuple(models),
    )
