import numpy as np
import pytest
from scipy.stats import friedmanchisquare, studentized_range

from reference_tables import FINE_TUNED_NDCG10, MODELS
from wsrec.core import DataError
from wsrec.evaluation import friedman_test, nemenyi_cd
from wsrec.evaluation.stats import NEMENYI_Q


def test_null_case():
    r = friedman_test(np.full((4, 3), 0.2))
    assert r.average_ranks == (2.0, 2.0, 2.0)
    assert r.friedman_statistic == 0.0
    assert r.significant_pairs() == []


def test_strict_ordering_two_by_two():
    r = friedman_test([[0.9, 0.1], [0.8, 0.3]])
    assert r.average_ranks == (1.0, 2.0)


def test_ranks_sum():
    rng = np.random.default_rng(0)
    for k in range(2, 8):
        r = friedman_test(rng.integers(0, 3, size=(5, k)).astype(float))
        assert sum(r.average_ranks) == pytest.approx(k * (k + 1) / 2)


def test_published_table_statistic():
    r = friedman_test(FINE_TUNED_NDCG10, alpha=0.10, models=MODELS)
    assert r.friedman_statistic == pytest.approx(30.2815, abs=0.05)
    assert r.p_value < 0.05


def test_agrees_with_scipy_without_ties():
    rng = np.random.default_rng(1)
    scores = rng.random((7, 5))
    r = friedman_test(scores)
    assert r.friedman_statistic == pytest.approx(friedmanchisquare(*scores.T).statistic, rel=1e-12)


def test_rank_invariance_under_monotone_maps():
    rng = np.random.default_rng(2)
    scores = rng.random((6, 4))
    a = friedman_test(scores).friedman_statistic
    b = friedman_test(np.exp(3 * scores) - 7).friedman_statistic
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.05, 0.10])
def test_q_table_matches_studentized_range(alpha):
    for k, q in enumerate(NEMENYI_Q[alpha], start=2):
        ref = studentized_range.ppf(1 - alpha, k, np.inf) / np.sqrt(2)
        assert q == pytest.approx(ref, abs=2e-6)


def test_cd_formula():
    assert nemenyi_cd(9, 9, 0.10) == pytest.approx(2.854606 * np.sqrt(90 / 54))
    assert nemenyi_cd(2, 10, 0.05) == pytest.approx(1.959964 * np.sqrt(6 / 60))
    with pytest.raises(ValueError):
        nemenyi_cd(21, 5)
    with pytest.raises(ValueError):
        nemenyi_cd(3, 5, alpha=0.01)


def test_input_errors():
    with pytest.raises(DataError):
        friedman_test([[0.1, 0.2]])
    with pytest.raises(DataError):
        friedman_test([[0.1, np.nan], [0.2, 0.3]])
    with pytest.raises(DataError):
        friedman_test([[0.1, 0.2], [0.2, 0.3]], models=("a",))
