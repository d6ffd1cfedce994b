import numpy as np
import pytest

import oracles
from conftest import block_pairs, make_matrix
from wsrec.core import DataError, EmbeddingPair, IdMap, build_interaction_matrix
from wsrec.embed import (
    AlsConfig,
    BprConfig,
    als_loss,
    bpr_triplet_grad,
    bpr_triplet_loss,
    export_embeddings,
    import_embeddings,
    train,
    train_als,
    train_bpr,
    train_snapshots,
)


def test_als_single_cell_matches_scalar_iteration():
    m = build_interaction_matrix([("u", "i")])
    cfg = AlsConfig(epochs=15, regularization=0.01, dim=1, seed=4)
    e = train_als(m, cfg)
    x0 = np.random.default_rng(4).uniform(-0.01, 0.01, size=2)
    x, y = oracles.scalar_als(40.0, 0.01, x0[0], x0[1], 15)
    assert e.P[0, 0] * e.Q[0, 0] > 0.5
    assert e.P[0, 0] == pytest.approx(x, rel=1e-9)
    assert e.Q[0, 0] == pytest.approx(y, rel=1e-9)


@pytest.mark.parametrize("cfg", [AlsConfig(epochs=3, dim=5), BprConfig(epochs=3, dim=5)])
def test_deterministic(cfg):
    m = build_interaction_matrix(block_pairs(2, 3, 4, np.random.default_rng(0), 0.7))
    a, b = train(m, cfg), train(m, cfg)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.Q, b.Q)
    c = train(m, cfg.__class__(**{**cfg.__dict__, "seed": 1}))
    assert not np.array_equal(a.P, c.P)


def test_als_separates_disjoint_blocks():
    m = build_interaction_matrix(block_pairs(2, 2, 2))
    margins = []
    for seed in range(20):
        e = train_als(m, AlsConfig(epochs=15, dim=2, regularization=0.01, seed=seed))
        S = e.P @ e.Q.T
        within = np.mean([S[0, 0], S[0, 1], S[1, 0], S[1, 1], S[2, 2], S[2, 3], S[3, 2], S[3, 3]])
        across = np.mean([S[0, 2], S[0, 3], S[1, 2], S[1, 3], S[2, 0], S[2, 1], S[3, 0], S[3, 1]])
        margins.append(within - across)
    assert np.mean(margins) > 0


def test_als_loss_matches_dense_oracle(rng):
    history = [set(np.flatnonzero(rng.random(10) < 0.3).tolist()) for _ in range(10)]
    m = make_matrix(history, 10)
    P, Q = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
    dense = [[i in h for i in range(10)] for h in history]
    cfg = AlsConfig(regularization=0.1, confidence_scale=5.0)
    assert als_loss(m, P, Q, cfg) == pytest.approx(oracles.dense_als_loss(dense, P, Q, 5.0, 0.1), rel=1e-12)


def test_als_loss_non_increasing(rng):
    history = [set(np.flatnonzero(rng.random(10) < 0.3).tolist()) | {u} for u in range(10)]
    m = make_matrix(history, 10)
    cfg = AlsConfig(epochs=12, dim=4, regularization=0.05)
    losses = []
    train_als(m, cfg, callback=lambda ep, P, Q: losses.append(als_loss(m, P, Q, cfg)))
    assert len(losses) == 12
    assert all(b <= a * (1 + 1e-12) for a, b in zip(losses, losses[1:]))


def test_bpr_orders_diagonal_toy():
    m = build_interaction_matrix([("a", "x"), ("b", "y")])
    # 50 epochs of 2 triplets is only 100 steps; at lr=0.01 some seeds have
    # not moved far enough from the +-0.01 init, hence the larger step
    for seed in range(20):
        e = train_bpr(m, BprConfig(epochs=50, dim=4, learning_rate=0.1, regularization=0.001, seed=seed))
        S = e.P @ e.Q.T
        # AUC over every (user, positive, negative) triple
        assert S[0, 0] > S[0, 1] and S[1, 1] > S[1, 0]


def test_bpr_zero_step_keeps_init():
    m = build_interaction_matrix(block_pairs(2, 2, 3))
    e = train_bpr(m, BprConfig(epochs=5, dim=3, learning_rate=0.0, seed=9))
    rng = np.random.default_rng(9)
    P0 = rng.uniform(-0.01, 0.01, size=(4, 3))
    Q0 = rng.uniform(-0.01, 0.01, size=(6, 3))
    assert np.array_equal(e.P, P0) and np.array_equal(e.Q, Q0)


def test_bpr_gradient_matches_finite_differences(rng):
    for _ in range(25):
        d = int(rng.integers(1, 6))
        p, qi, qj = rng.normal(size=(3, d))
        reg = float(rng.uniform(0, 0.2))
        flat = np.concatenate([p, qi, qj]).tolist()

        def f(v):
            v = np.array(v)
            return bpr_triplet_loss(v[:d], v[d : 2 * d], v[2 * d :], reg)

        numeric = np.array(oracles.central_difference(f, flat))
        analytic = np.concatenate(bpr_triplet_grad(p, qi, qj, reg))
        assert np.linalg.norm(analytic - numeric) <= 1e-4 * max(np.linalg.norm(numeric), 1e-8)


def test_bpr_skips_saturated_user():
    m = build_interaction_matrix([("a", "x"), ("a", "y"), ("b", "x")])
    with pytest.warns(RuntimeWarning, match="consumed every item"):
        e = train_bpr(m, BprConfig(epochs=2, dim=2))
    assert e.P.shape == (2, 2)
    with pytest.raises(DataError):
        train_bpr(build_interaction_matrix([("a", "x")]), BprConfig(epochs=1, dim=2))


@pytest.mark.parametrize("cfg", [AlsConfig(epochs=5, dim=3), BprConfig(epochs=5, dim=3)])
def test_snapshots_equal_separate_runs(cfg):
    m = build_interaction_matrix(block_pairs(3, 3, 3, np.random.default_rng(1), 0.6))
    snaps = train_snapshots(m, cfg, [2, 5, 3])
    assert sorted(snaps) == [2, 3, 5]
    for k, e in snaps.items():
        ref = train(m, cfg.__class__(**{**cfg.__dict__, "epochs": k}))
        assert np.array_equal(e.P, ref.P) and np.array_equal(e.Q, ref.Q)
        assert e.source_tag == ref.source_tag


def test_config_validation():
    with pytest.raises(ValueError):
        AlsConfig(regularization=0)
    with pytest.raises(ValueError):
        AlsConfig(epochs=1.5)
    with pytest.raises(ValueError):
        BprConfig(learning_rate=-1)


def test_export_import_round_trip(tmp_path, rng):
    users, items = IdMap(["u0", "u1", "u2"]), IdMap(["a", "b"])
    e = EmbeddingPair(rng.normal(size=(3, 2)), rng.normal(size=(2, 2)) * 1e3)
    f = tmp_path / "e.wse"
    export_embeddings(e, users, items, f)
    assert f.read_text().splitlines()[0] == "WSE\t1\t2"
    back = import_embeddings(f, users, items)
    assert np.abs(back.P - e.P).max() <= 1e-12 and np.abs(back.Q - e.Q).max() <= 1e-12
    # rows are keyed by id, so a permuted map reorders the rows
    perm = import_embeddings(f, IdMap(["u2", "u0", "u1"]), IdMap(["b", "a"]))
    assert np.array_equal(perm.P, e.P[[2, 0, 1]]) and np.array_equal(perm.Q, e.Q[[1, 0]])


def _write(path, text):
    path.write_text(text)
    return path


@pytest.mark.parametrize(
    "body, match",
    [
        ("WSE\t1\t2\nUSERS\t1\nu\t1\t2\nITEMS\t1\na\t1\t2\n", "item id 'b' missing"),
        ("WSE\t1\t2\nUSERS\t1\nu\t1\t2\nITEMS\t3\na\t1\t2\nb\t1\t2\na\t0\t0\n", "duplicate item id 'a'"),
        ("WSE\t1\t2\nUSERS\t1\nu\t1\t2\t3\nITEMS\t2\na\t1\t2\nb\t1\t2\n", "has 3 values"),
        ("WSE\t1\t2\nUSERS\t1\nu\tnan\t2\nITEMS\t2\na\t1\t2\nb\t1\t2\n", "non-finite"),
        ("EMB\t1\t2\n", "bad header"),
    ],
)
def test_import_errors(tmp_path, body, match):
    f = _write(tmp_path / "e.wse", body)
    with pytest.raises(DataError, match=match):
        import_embeddings(f, IdMap(["u"]), IdMap(["a", "b"]))


def test_import_external_dimension(tmp_path, rng):
    # files from an external trainer only need to follow the format
    d = 200
    users, items = IdMap(["1", "2"]), IdMap(["10", "20", "30"])
    lines = [f"WSE\t1\t{d}", "USERS\t2"]
    lines += [f"{u}\t" + "\t".join(f"{v:.12g}" for v in rng.normal(size=d)) for u in ("2", "1")]
    lines += ["ITEMS\t4"]
    lines += [f"{i}\t" + "\t".join(f"{v:.12g}" for v in rng.normal(size=d)) for i in ("30", "10", "20", "99")]
    f = _write(tmp_path / "vae.wse", "\n".join(lines) + "\n")
    e = import_embeddings(f, users, items, source_tag="recvae")
    assert e.dim == 200 and e.source_tag == "recvae"
