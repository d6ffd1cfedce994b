"""Cross-validation protocol, ranking metrics, grid search and significance tests."""

from .folds import FOLD_COUNT, Fold, FoldSplit, split_folds
from .metrics import curves, hit_rate, ndcg
from .search import (
    FINE_TUNE,
    ITEM_ITEM,
    REUSE,
    USER_ITEM,
    WEIGHTED,
    EvalReport,
    SearchResult,
    evaluate_embeddings,
    grid_search,
)
from .stats import StatTestResult, friedman_test, nemenyi_cd

__all__ = [
    "FOLD_COUNT", "Fold", "FoldSplit", "split_folds",
    "curves", "hit_rate", "ndcg",
    "FINE_TUNE", "ITEM_ITEM", "REUSE", "USER_ITEM", "WEIGHTED",
    "EvalReport", "SearchResult", "evaluate_embeddings", "grid_search",
    "StatTestResult", "friedman_test", "nemenyi_cd",
]
