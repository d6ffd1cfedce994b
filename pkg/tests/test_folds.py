import numpy as np
import pytest

from conftest import synthetic_pairs
from wsrec.core import DataError, build_interaction_matrix
from wsrec.evaluation import split_folds


def test_ten_interactions_make_five_pairs_of_two():
    pairs = [(f"u{k % 3}", f"i{k}") for k in range(10)]
    m = build_interaction_matrix(pairs)
    split = split_folds(m, seed=1)
    assert np.bincount(split.assignment).tolist() == [2, 2, 2, 2, 2]
    for f, fold in enumerate(split):
        assert fold.train.interaction_count == 8
        assert len(fold.test) + fold.dropped == 2


def test_partition_and_disjointness(rng):
    m = build_interaction_matrix(synthetic_pairs(rng, 50, 80, 703))
    split = split_folds(m, seed=7)
    sizes = np.bincount(split.assignment)
    assert sizes.max() - sizes.min() <= 1
    all_pairs = set(m.pairs())
    tested = set()
    for fold in split:
        train = set(fold.train.pairs())
        test = {(fold.train.user_map[u], fold.train.item_map[i]) for u, i in fold.test.tolist()}
        assert not train & test
        assert not tested & test
        tested |= test
        assert train | test <= all_pairs
    dropped = sum(f.dropped for f in split)
    assert len(tested) + dropped == m.interaction_count


def test_cold_start_pairs_dropped():
    pairs = [("solo", "a")] + [(f"u{k}", "a") for k in range(4)] + [(f"u{k}", "b") for k in range(4)]
    m = build_interaction_matrix(pairs)
    split = split_folds(m, seed=0)
    f = int(split.assignment[0])
    fold = split[f]
    assert "solo" not in fold.train.user_map
    assert fold.dropped >= 1
    for u, i in fold.test.tolist():
        assert fold.train.user_map[u] != "solo"


def test_deterministic_per_seed(rng):
    m = build_interaction_matrix(synthetic_pairs(rng, 20, 30, 150))
    a, b, c = split_folds(m, 3), split_folds(m, 3), split_folds(m, 4)
    assert np.array_equal(a.assignment, b.assignment)
    assert not np.array_equal(a.assignment, c.assignment)
    for x, y in zip(a, b):
        assert np.array_equal(x.test, y.test) and x.train.digest() == y.train.digest()


def test_too_few_interactions():
    with pytest.raises(DataError):
        split_folds(build_interaction_matrix([("u", "i"), ("v", "i")]), 0)
