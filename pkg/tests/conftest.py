import os
from pathlib import Path

import numpy as np
import pytest

from wsrec.core import EmbeddingPair, IdMap, InteractionMatrix

REPO = Path(__file__).resolve().parent.parent


def make_matrix(history, n_items):
    """InteractionMatrix straight from per-user item sets (items may be unconsumed)."""
    indptr = [0]
    indices = []
    for items in history:
        indices.extend(sorted(items))
        indptr.append(len(indices))
    return InteractionMatrix(
        IdMap(f"u{k}" for k in range(len(history))),
        IdMap(f"i{k}" for k in range(n_items)),
        np.array(indptr),
        np.array(indices, dtype=np.int64),
    )


def random_instance(rng, n_users, n_items, dim, density=0.3, zero_history_ok=True):
    history = []
    for _ in range(n_users):
        mask = rng.random(n_items) < density
        if not zero_history_ok and not mask.any():
            mask[rng.integers(n_items)] = True
        history.append(set(np.flatnonzero(mask).tolist()))
    P = rng.normal(size=(n_users, dim))
    Q = rng.normal(size=(n_items, dim))
    return history, make_matrix(history, n_items), EmbeddingPair(P, Q, "random")


def synthetic_pairs(rng, n_users, n_items, n_interactions, user_skew=1.3, item_skew=1.2):
    """Power-law user/item activity, deduplicated, as external-id pairs."""
    pairs = {}
    while len(pairs) < n_interactions:
        k = 2 * (n_interactions - len(pairs)) + 16
        us = rng.zipf(user_skew, size=k) % n_users
        its = rng.zipf(item_skew, size=k) % n_items
        for u, i in zip(us.tolist(), its.tolist()):
            pairs.setdefault((f"u{u}", f"i{i}"), None)
            if len(pairs) == n_interactions:
                break
    return list(pairs)


def block_pairs(n_blocks, users_per_block, items_per_block, rng=None, density=1.0):
    """Users of block b consume only items of block b."""
    out = []
    for b in range(n_blocks):
        for u in range(users_per_block):
            for i in range(items_per_block):
                if rng is None or rng.random() < density:
                    out.append((f"u{b}_{u}", f"i{b}_{i}"))
    return out


def filmtrust_path():
    """The raw Filmtrust ratings file, if the user has supplied one."""
    env = os.environ.get("WSREC_FILMTRUST")
    candidates = [Path(env)] if env else []
    candidates += [REPO / "data" / "filmtrust" / "ratings.txt", REPO / "data" / "filmtrust.txt"]
    for p in candidates:
        if p.is_file():
            return p
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(20250312)


# one "[PASS]/[FAIL] criterion N: ..." line per acceptance criterion, echoed
# in the terminal summary so the outcome is visible without -s
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
