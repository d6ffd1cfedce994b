"""Embedding learners (implicit ALS, BPR) and the embedding file format."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .core import DataError, EmbeddingPair, IdMap, InteractionMatrix, TrainingError

logger = logging.getLogger(__name__)

ALS_GRID = {
    "epochs": (15, 30, 50),
    "regularization": (1e-3, 1e-2, 1e-1),
    "dim": (32, 64, 128),
}
BPR_GRID = {
    "epochs": (15, 30, 50),
    "learning_rate": (1e-3, 1e-2, 1e-1),
    "regularization": (1e-3, 1e-2, 1e-1),
    "dim": (32, 64, 128),
}

INIT_SCALE = 0.01

EpochCallback = Callable[[int, np.ndarray, np.ndarray], None]


def _positive(name, value, integer=False):
    if integer and (not isinstance(value, (int, np.integer)) or isinstance(value, bool)):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class AlsConfig:
    epochs: int = 15
    regularization: float = 0.01
    dim: int = 64
    confidence_scale: float = 40.0
    seed: int = 0

    def __post_init__(self):
        _positive("epochs", self.epochs, integer=True)
        _positive("dim", self.dim, integer=True)
        _positive("regularization", self.regularization)
        _positive("confidence_scale", self.confidence_scale)

    def tag(self) -> str:
        return (
            f"als(epochs={self.epochs},reg={self.regularization:g},dim={self.dim},"
            f"alpha={self.confidence_scale:g},seed={self.seed})"
        )


@dataclass(frozen=True)
class BprConfig:
    epochs: int = 15
    learning_rate: float = 0.01
    regularization: float = 0.01
    dim: int = 64
    seed: int = 0

    def __post_init__(self):
        _positive("epochs", self.epochs, integer=True)
        _positive("dim", self.dim, integer=True)
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate!r}")
        if self.regularization < 0:
            raise ValueError(f"regularization must be non-negative, got {self.regularization!r}")

    def tag(self) -> str:
        return (
            f"bpr(epochs={self.epochs},lr={self.learning_rate:g},reg={self.regularization:g},"
            f"dim={self.dim},seed={self.seed})"
        )


def _init_factors(rng: np.random.Generator, n_users: int, n_items: int, dim: int):
    P = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_users, dim))
    Q = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_items, dim))
    return P, Q


def _check_finite(epoch: int, *arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise TrainingError(f"training diverged: non-finite factors after epoch {epoch}")


# --- ALS ---------------------------------------------------------------------


def als_loss(m: InteractionMatrix, P: np.ndarray, Q: np.ndarray, cfg: AlsConfig) -> float:
    """Confidence-weighted squared error over all (u, i) cells plus L2.

    Uses sum_{u,i} (p_u.q_i)^2 = <P'P, Q'Q> so the full |U| x |I| grid is
    never materialised; observed cells are then corrected individually.
    """
    alpha = cfg.confidence_scale
    all_sq = float(np.sum((P.T @ P) * (Q.T @ Q)))
    s = np.einsum("ij,ij->i", P[m.user_indices()], Q[m.indices])
    observed = float(np.sum((1.0 + alpha) * (1.0 - s) ** 2 - s**2))
    l2 = cfg.regularization * (float(np.sum(P * P)) + float(np.sum(Q * Q)))
    return all_sq + observed + l2


def _item_major(m: InteractionMatrix):
    csc = m.to_csc()
    return (
        np.ascontiguousarray(csc.indptr, dtype=np.int64),
        np.ascontiguousarray(csc.indices, dtype=np.int64),
    )


def _als_run(m: InteractionMatrix, cfg: AlsConfig, epochs: int, callback: EpochCallback | None):
    if m.n_users < 1 or m.n_items < 1:
        raise DataError("ALS needs at least one user and one item")
    rng = np.random.default_rng(cfg.seed)
    P, Q = _init_factors(rng, m.n_users, m.n_items, cfg.dim)
    u_ptr, u_idx = m.indptr, m.indices
    i_ptr, i_idx = _item_major(m)
    alpha, reg = float(cfg.confidence_scale), float(cfg.regularization)
    for epoch in range(1, epochs + 1):
        try:
            kernels.als_half_pass(P, Q, u_ptr, u_idx, alpha, reg)
            kernels.als_half_pass(Q, P, i_ptr, i_idx, alpha, reg)
        except ArithmeticError as exc:
            raise TrainingError(f"ALS epoch {epoch}: {exc}") from None
        _check_finite(epoch, P, Q)
        if callback is not None:
            callback(epoch, P, Q)
    return P, Q


def train_als(m: InteractionMatrix, cfg: AlsConfig, callback: EpochCallback | None = None) -> EmbeddingPair:
    """Implicit-feedback ALS with confidence ``1 + alpha`` on observed cells.

    Each epoch solves every user's ridge system with items fixed, then every
    item's with users fixed. ``callback(epoch, P, Q)`` sees the live arrays
    after each epoch and must not modify them.
    """
    P, Q = _als_run(m, cfg, cfg.epochs, callback)
    return EmbeddingPair(P, Q, cfg.tag())


# --- BPR ---------------------------------------------------------------------


def bpr_triplet_loss(p_u, q_i, q_j, reg: float) -> float:
    """``-ln sigmoid(p_u.(q_i - q_j)) + reg/2 * (|p_u|^2 + |q_i|^2 + |q_j|^2)``."""
    x = float(np.dot(p_u, q_i - q_j))
    # -ln sigmoid(x) = log1p(exp(-x)), evaluated stably
    nll = math.log1p(math.exp(-x)) if x > -30 else -x + math.log1p(math.exp(x))
    return nll + 0.5 * reg * float(p_u @ p_u + q_i @ q_i + q_j @ q_j)


def bpr_triplet_grad(p_u, q_i, q_j, reg: float):
    """Gradients of :func:`bpr_triplet_loss` w.r.t. ``(p_u, q_i, q_j)``.

    The SGD kernels step along exactly the negation of these.
    """
    x = float(np.dot(p_u, q_i - q_j))
    g = 1.0 / (1.0 + math.exp(x)) if x < 700 else 0.0
    return (
        -g * (q_i - q_j) + reg * p_u,
        -g * p_u + reg * q_i,
        g * p_u + reg * q_j,
    )


class _TripletSampler:
    """Uniform (u, i+, i-) sampling: i+ drawn via a uniform interaction, i- outside I_u."""

    def __init__(self, m: InteractionMatrix):
        if m.n_items < 2:
            raise DataError("BPR needs at least two items so that negatives exist")
        self.n_items = m.n_items
        users = m.user_indices()
        full = np.flatnonzero(m.row_lengths() == m.n_items)
        keep = np.ones(len(users), dtype=bool)
        if len(full):
            warnings.warn(
                f"{len(full)} user(s) consumed every item and cannot be sampled; skipping them",
                RuntimeWarning,
                stacklevel=3,
            )
            keep = ~np.isin(users, full)
        self.users = users[keep]
        self.pos = m.indices[keep]
        # CSR rows are sorted and users ascend, so these keys are sorted
        self.keys = users * m.n_items + m.indices
        self.n_samples = m.interaction_count

    def sample(self, rng: np.random.Generator):
        if len(self.users) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        k = rng.integers(0, len(self.users), size=self.n_samples)
        users = self.users[k]
        pos = self.pos[k]
        neg = rng.integers(0, self.n_items, size=self.n_samples)
        bad = self._consumed(users, neg)
        while bad.any():
            where = np.flatnonzero(bad)
            neg[where] = rng.integers(0, self.n_items, size=len(where))
            bad[where] = self._consumed(users[where], neg[where])
        return (
            np.ascontiguousarray(users, dtype=np.int64),
            np.ascontiguousarray(pos, dtype=np.int64),
            np.ascontiguousarray(neg, dtype=np.int64),
        )

    def _consumed(self, users, items):
        q = users * self.n_items + items
        at = np.searchsorted(self.keys, q)
        at = np.minimum(at, len(self.keys) - 1)
        return self.keys[at] == q


def _bpr_run(m: InteractionMatrix, cfg: BprConfig, epochs: int, callback: EpochCallback | None):
    sampler = _TripletSampler(m)
    rng = np.random.default_rng(cfg.seed)
    P, Q = _init_factors(rng, m.n_users, m.n_items, cfg.dim)
    lr, reg = float(cfg.learning_rate), float(cfg.regularization)
    for epoch in range(1, epochs + 1):
        users, pos, neg = sampler.sample(rng)
        kernels.bpr_epoch(P, Q, users, pos, neg, lr, reg)
        _check_finite(epoch, P, Q)
        if callback is not None:
            callback(epoch, P, Q)
    return P, Q


def train_bpr(m: InteractionMatrix, cfg: BprConfig, callback: EpochCallback | None = None) -> EmbeddingPair:
    """Matrix factorisation by BPR with plain sequential SGD.

    Every epoch draws |R| triplets with replacement. The sampling order
    depends only on ``cfg.seed``, so a run's first k epochs equal a k-epoch run.
    """
    P, Q = _bpr_run(m, cfg, cfg.epochs, callback)
    return EmbeddingPair(P, Q, cfg.tag())


def train(m: InteractionMatrix, cfg: AlsConfig | BprConfig, callback: EpochCallback | None = None) -> EmbeddingPair:
    if isinstance(cfg, AlsConfig):
        return train_als(m, cfg, callback)
    if isinstance(cfg, BprConfig):
        return train_bpr(m, cfg, callback)
    raise TypeError(f"unknown learner config {type(cfg).__name__}")


def train_snapshots(m: InteractionMatrix, cfg: AlsConfig | BprConfig, epochs: Iterable[int]) -> dict[int, EmbeddingPair]:
    """Train once for ``max(epochs)`` and keep the factors after each listed epoch.

    Equal to separate runs per epoch count because training is deterministic
    and has no early stopping.
    """
    wanted = sorted(set(int(e) for e in epochs))
    if not wanted or wanted[0] < 1:
        raise ValueError("epochs must be positive integers")
    out: dict[int, EmbeddingPair] = {}

    def keep(epoch, P, Q):
        if epoch in wanted:
            c = cfg.__class__(**{**asdict(cfg), "epochs": epoch})
            out[epoch] = EmbeddingPair(P.copy(), Q.copy(), c.tag())

    run = _als_run if isinstance(cfg, AlsConfig) else _bpr_run
    run(m, cfg, wanted[-1], keep)
    return out


# --- file format -------------------------------------------------------------

MAGIC = "WSE"
FORMAT_VERSION = 1


def export_embeddings(e: EmbeddingPair, user_map: IdMap, item_map: IdMap, path) -> None:
    """Write ``e`` as UTF-8 text keyed by external id (17 significant digits)."""
    if len(user_map) != e.n_users or len(item_map) != e.n_items:
        raise ValueError("id maps do not match the embedding row counts")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MAGIC}\t{FORMAT_VERSION}\t{e.dim}\n")
        for label, ids, M in (("USERS", user_map, e.P), ("ITEMS", item_map, e.Q)):
            fh.write(f"{label}\t{len(ids)}\n")
            for ext_id, row in zip(ids, M):
                fh.write(ext_id + "\t" + "\t".join(format(v, ".17g") for v in row) + "\n")


def _read_section(lines, label, dim, path):
    head = next(lines, None)
    if head is None:
        raise DataError(f"{path}: missing {label} section")
    parts = head.rstrip("\r\n").split("\t")
    if len(parts) != 2 or parts[0] != label:
        raise DataError(f"{path}: expected '{label}<TAB><count>', got {head.strip()!r}")
    count = int(parts[1])
    rows: dict[str, np.ndarray] = {}
    for _ in range(count):
        line = next(lines, None)
        if line is None:
            raise DataError(f"{path}: {label} section ends early")
        fields = line.rstrip("\r\n").split("\t")
        ext_id, values = fields[0], fields[1:]
        if len(values) != dim:
            raise DataError(f"{path}: {label} row {ext_id!r} has {len(values)} values, header says {dim}")
        if ext_id in rows:
            raise DataError(f"{path}: duplicate {label.lower()[:-1]} id {ext_id!r}")
        try:
            vec = np.array([float(v) for v in values])
        except ValueError:
            raise DataError(f"{path}: unparseable value in {label} row {ext_id!r}") from None
        if not np.isfinite(vec).all():
            raise DataError(f"{path}: non-finite value in {label} row {ext_id!r}")
        rows[ext_id] = vec
    return rows


def _gather(rows: dict, ids: IdMap, dim: int, what: str, path) -> np.ndarray:
    out = np.empty((len(ids), dim))
    for k, ext_id in enumerate(ids):
        vec = rows.get(ext_id)
        if vec is None:
            raise DataError(f"{path}: {what} id {ext_id!r} missing from embedding file")
        out[k] = vec
    extra = len(rows) - len(ids)
    if extra > 0:
        logger.debug("%s: ignoring %d %s ids not in the id map", path, extra, what)
    return out


def import_embeddings(path, user_map: IdMap, item_map: IdMap, source_tag: str | None = None) -> EmbeddingPair:
    """Load an embedding file, reordering rows to match the given id maps."""
    with open(path, encoding="utf-8") as fh:
        lines = iter(fh)
        header = next(lines, "").rstrip("\r\n").split("\t")
        if len(header) != 3 or header[0] != MAGIC:
            raise DataError(f"{path}: not an embedding file (bad header {header!r})")
        if header[1] != str(FORMAT_VERSION):
            raise DataError(f"{path}: unsupported format version {header[1]}")
        dim = int(header[2])
        if dim < 1:
            raise DataError(f"{path}: dimension must be positive")
        users = _read_section(lines, "USERS", dim, path)
        items = _read_section(lines, "ITEMS", dim, path)
    P = _gather(users, user_map, dim, "user", path)
    Q = _gather(items, item_map, dim, "item", path)
    return EmbeddingPair(P, Q, source_tag if source_tag is not None else f"file:{path}")
