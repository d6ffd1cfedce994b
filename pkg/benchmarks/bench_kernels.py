"""Compare the compiled training kernels with the pure-Python fallback.

Runs on a synthetic matrix the size of the Filmtrust benchmark (about 1.5k
users, 1.9k items, 28.6k interactions). Usage::

    python3 benchmarks/bench_kernels.py --dim 64 --repeat 3
"""

import argparse
import time

import numpy as np

from wsrec import _kernels_py
from wsrec.core import build_interaction_matrix
from wsrec.embed import _item_major

try:
    from wsrec import _kernels as compiled
except ImportError:
    compiled = None


def synthetic_matrix(rng, n_users=1492, n_items=1881, n_interactions=28579):
    pairs = {}
    while len(pairs) < n_interactions:
        us = rng.zipf(1.3, size=n_interactions) % n_users
        its = rng.zipf(1.2, size=n_interactions) % n_items
        for u, i in zip(us.tolist(), its.tolist()):
            pairs.setdefault((f"u{u}", f"i{i}"), None)
            if len(pairs) == n_interactions:
                break
    return build_interaction_matrix(list(pairs))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_als(m, dim, repeat, backends):
    rng = np.random.default_rng(0)
    P0 = rng.uniform(-0.01, 0.01, size=(m.n_users, dim))
    Q0 = rng.uniform(-0.01, 0.01, size=(m.n_items, dim))
    ip, ii = _item_major(m)
    res = {}
    for name, mod in backends.items():
        def epoch():
            P, Q = P0.copy(), Q0.copy()
            mod.als_half_pass(P, Q, m.indptr, m.indices, 40.0, 0.01)
            mod.als_half_pass(Q, P, ip, ii, 40.0, 0.01)
            return P, Q
        res[name] = best_of(epoch, repeat)
    return res


def bench_bpr(m, dim, repeat, backends):
    rng = np.random.default_rng(0)
    P0 = rng.uniform(-0.01, 0.01, size=(m.n_users, dim))
    Q0 = rng.uniform(-0.01, 0.01, size=(m.n_items, dim))
    k = m.interaction_count
    users = m.user_indices()[rng.integers(0, k, size=k)]
    pos = rng.integers(0, m.n_items, size=k)
    neg = rng.integers(0, m.n_items, size=k)
    res = {}
    for name, mod in backends.items():
        def epoch():
            P, Q = P0.copy(), Q0.copy()
            mod.bpr_epoch(P, Q, users, pos, neg, 0.01, 0.01)
            return P, Q
        res[name] = best_of(epoch, repeat)
    return res


def report(label, res):
    print(f"{label}:")
    for name, (t, _) in res.items():
        print(f"  {name:9s} {t * 1000:10.1f} ms/epoch")
    if len(res) == 2:
        (tc, (Pc, Qc)), (tp, (Pp, Qp)) = res["compiled"], res["python"]
        diff = max(np.abs(Pc - Pp).max(), np.abs(Qc - Qp).max())
        print(f"  speedup   {tp / tc:10.1f}x   max |diff| {diff:.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    m = synthetic_matrix(np.random.default_rng(args.seed))
    print(f"matrix: {m.n_users} users x {m.n_items} items, {m.interaction_count} interactions, d={args.dim}")
    backends = {"python": _kernels_py}
    if compiled is not None:
        backends = {"compiled": compiled, **backends}
    else:
        print("compiled kernels not built; timing the fallback only")
    report("ALS (user pass + item pass)", bench_als(m, args.dim, args.repeat, backends))
    report("BPR (|R| SGD steps)", bench_bpr(m, args.dim, args.repeat, backends))


if __name__ == "__main__":
    main()
