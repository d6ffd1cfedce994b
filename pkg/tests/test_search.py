import json

import numpy as np
import pytest

from conftest import synthetic_pairs
from wsrec.core import TrainingError, build_interaction_matrix
from wsrec.embed import AlsConfig, BprConfig, export_embeddings, train
from wsrec.evaluation import FINE_TUNE, ITEM_ITEM, REUSE, USER_ITEM, WEIGHTED, evaluate_embeddings, grid_search, split_folds
from wsrec.evaluation import search as search_mod
from wsrec.recommend import WeightConfig


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(11)
    return build_interaction_matrix(synthetic_pairs(rng, 60, 45, 700))


SMALL_ALS = {"epochs": (2, 4), "regularization": (0.01, 0.1), "dim": (4,)}


def test_singleton_grid_equals_direct_evaluation(toy):
    res = grid_search(toy, "als", {"epochs": (3,), "regularization": (0.1,), "dim": (5,)},
                      weight_ratios=[(2, 3)], metrics=["cosine"], seed=2, n_max=10)
    folds = split_folds(toy, 2)
    w = WeightConfig(2, 3, "cosine")
    ndcg = []
    for fold in folds:
        e = train(fold.train, AlsConfig(epochs=3, regularization=0.1, dim=5, seed=2))
        ndcg.append(evaluate_embeddings(e, fold, [w], 10)[w.label][1])
    assert np.array_equal(res.best[WEIGHTED].report.ndcg, np.array(ndcg))
    assert res.best[WEIGHTED].report.weights == w


def test_user_item_weight_reproduces_user_item(toy):
    res = grid_search(toy, "bpr", {"epochs": (3,), "learning_rate": (0.05,), "regularization": (0.01,), "dim": (4,)},
                      weight_ratios=[(1, 0)], metrics=["dot"], seed=0, n_max=12)
    a, b = res.reuse[WEIGHTED].report, res.reuse[USER_ITEM].report
    assert np.array_equal(a.ndcg, b.ndcg) and np.array_equal(a.hr, b.hr)


def test_selection_rules(toy):
    res = grid_search(toy, "als", SMALL_ALS, weight_ratios=[(1, 0), (1, 1), (0, 1)], seed=5, n_max=10)
    assert len(res.hypers) == 4 and not res.errors
    for name in (USER_ITEM, ITEM_ITEM, WEIGHTED):
        assert res.fine_tune[name].score >= res.reuse[name].score
        assert res.improvement()[name] >= 0
    # reuse: embeddings chosen by user-item NDCG@10, shared by all recommenders
    h = res.reuse[USER_ITEM].report.hyper
    assert res.reuse[USER_ITEM].score == max(res.report(x, WeightConfig(1, 0)).ndcg_at(10) for x in res.hypers)
    assert res.reuse[WEIGHTED].report.hyper == h and res.reuse[ITEM_ITEM].report.hyper == h
    best = res.reuse[WEIGHTED].score
    for metric in ("dot", "cosine"):
        assert best >= res.report(h, WeightConfig(1, 0, metric)).ndcg_at(10)
        assert best >= res.report(h, WeightConfig(0, 1, metric)).ndcg_at(10)
    # fine-tune: argmax over every cell of the recommender
    cells = [res.report(x, w) for x in res.hypers for w in res.settings[WEIGHTED]]
    assert res.fine_tune[WEIGHTED].score == max(c.ndcg_at(10) for c in cells)
    assert res.best is res.reuse
    assert grid_search(toy, "als", SMALL_ALS, weight_ratios=[(1, 1)], seed=5, n_max=10,
                       mode=FINE_TUNE).best[WEIGHTED].score == pytest.approx(
        max(res.report(x, WeightConfig(1, 1, m)).ndcg_at(10) for x in res.hypers for m in ("dot", "cosine")))


def test_curves_are_monotone_where_guaranteed(toy):
    res = grid_search(toy, "als", {"epochs": (3,), "regularization": (0.1,), "dim": (4,)},
                      weight_ratios=[(3, 2)], seed=1, cap_idcg_at_n=False)
    for rep in res.reports.values():
        assert (np.diff(rep.hr, axis=1) >= 0).all()
        assert (np.diff(rep.ndcg, axis=1) >= -1e-15).all()
        assert rep.hr.shape == (5, 20)


def test_failed_cell_is_recorded(toy, monkeypatch):
    real = search_mod.train_snapshots

    def flaky(m, cfg, epochs):
        if cfg.regularization == 0.1:
            raise TrainingError("diverged")
        return real(m, cfg, epochs)

    monkeypatch.setattr(search_mod, "train_snapshots", flaky)
    res = grid_search(toy, "als", SMALL_ALS, weight_ratios=[(1, 1)], seed=0, n_max=10)
    assert len(res.errors) == 2 and all("diverged" in v for v in res.errors.values())
    assert all("reg=0.01" in r.report.hyper for r in res.fine_tune.values())

    monkeypatch.setattr(search_mod, "train_snapshots", lambda *a: (_ for _ in ()).throw(TrainingError("x")))
    with pytest.raises(TrainingError, match="every grid cell failed"):
        grid_search(toy, "als", SMALL_ALS, weight_ratios=[(1, 1)], seed=0, n_max=10)


def test_checkpoints_resume(toy, tmp_path, monkeypatch):
    first = grid_search(toy, "als", SMALL_ALS, weight_ratios=[(1, 4)], seed=3, n_max=10, checkpoint_dir=tmp_path)
    assert len(list(tmp_path.glob("*.json"))) == 2 * 5  # epoch groups x folds
    monkeypatch.setattr(search_mod, "train_snapshots", lambda *a: (_ for _ in ()).throw(AssertionError("retrained")))
    again = grid_search(toy, "als", SMALL_ALS, weight_ratios=[(1, 4)], seed=3, n_max=10, checkpoint_dir=tmp_path)
    assert json.dumps(first.to_dict()) == json.dumps(again.to_dict())


def test_worker_count_does_not_change_results(toy):
    grid = {"epochs": (2,), "learning_rate": (0.05,), "regularization": (0.01, 0.1), "dim": (4,)}
    a = grid_search(toy, "bpr", grid, weight_ratios=[(1, 1)], seed=4, n_max=10, workers=1)
    b = grid_search(toy, "bpr", grid, weight_ratios=[(1, 1)], seed=4, n_max=10, workers=2)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_external_embeddings(toy, tmp_path):
    folds = split_folds(toy, 9)
    for f, fold in enumerate(folds):
        e = train(fold.train, BprConfig(epochs=2, dim=3, seed=f))
        export_embeddings(e, fold.train.user_map, fold.train.item_map, tmp_path / f"fold{f}.wse")
    res = grid_search(toy, "external", weight_ratios=[(1, 1)], seed=9, n_max=10,
                      learner_params={"path": str(tmp_path / "fold{fold}.wse")})
    assert res.hypers == [f"external(path={tmp_path / 'fold{fold}.wse'})"]
    assert 0 <= res.best[WEIGHTED].score <= 1


def test_argument_validation(toy):
    with pytest.raises(ValueError):
        grid_search(toy, "als", {"epochs": ()})
    with pytest.raises(ValueError):
        grid_search(toy, "als", SMALL_ALS, mode="greedy")
    with pytest.raises(ValueError):
        grid_search(toy, "als", SMALL_ALS, metrics=[])
    with pytest.raises(ValueError):
        grid_search(toy, "svd")
    with pytest.raises(ValueError):
        grid_search(toy, "external")
    assert REUSE != FINE_TUNE
