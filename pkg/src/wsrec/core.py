"""Shared data types: id maps, the implicit-feedback matrix and embedding pairs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class WsrecError(Exception):
    """Base class for all package errors."""


class DataError(WsrecError):
    """Input data is malformed or violates a preprocessing contract."""


class TrainingError(WsrecError):
    """An embedding learner failed to produce usable factors."""


class IdMap:
    """Bijection between opaque external ids and dense indices ``0..n-1``."""

    __slots__ = ("_ids", "_index")

    def __init__(self, external_ids: Iterable[str] = ()):
        ids = tuple(str(x) for x in external_ids)
        index = {x: k for k, x in enumerate(ids)}
        if len(index) != len(ids):
            seen = set()
            dup = next(x for x in ids if x in seen or seen.add(x))
            raise DataError(f"duplicate external id {dup!r}")
        self._ids = ids
        self._index = index

    @property
    def external_ids(self) -> tuple[str, ...]:
        return self._ids

    def index_of(self, external_id: str) -> int:
        return self._index[external_id]

    def get(self, external_id: str, default=None):
        return self._index.get(external_id, default)

    def __contains__(self, external_id) -> bool:
        return external_id in self._index

    def __len__(self) -> int:
        return len(self._ids)

    def __getitem__(self, k: int) -> str:
        return self._ids[k]

    def __iter__(self):
        return iter(self._ids)

    def __eq__(self, other) -> bool:
        return isinstance(other, IdMap) and self._ids == other._ids

    def __hash__(self) -> int:
        return hash(self._ids)

    def __repr__(self) -> str:
        return f"IdMap(n={len(self._ids)})"


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Deduplicated user x item implicit feedback, stored user-major (CSR).

    Row ``u`` holds the strictly increasing item indices consumed by user ``u``;
    every stored value is 1.0 so only the index structure is kept.
    """

    user_map: IdMap
    item_map: IdMap
    indptr: np.ndarray
    indices: np.ndarray
    _csc: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        indptr.flags.writeable = False
        indices.flags.writeable = False
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        if len(indptr) != len(self.user_map) + 1:
            raise DataError("indptr length does not match user count")

    @property
    def n_users(self) -> int:
        return len(self.user_map)

    @property
    def n_items(self) -> int:
        return len(self.item_map)

    @property
    def interaction_count(self) -> int:
        return int(self.indptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_users, self.n_items

    def row(self, u: int) -> np.ndarray:
        """Item indices consumed by user ``u`` (sorted)."""
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.indptr)

    def item_counts(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.n_items)

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)

    def to_csc(self) -> sp.csc_matrix:
        # built lazily, cached on the otherwise-immutable instance
        if not self._csc:
            self._csc.append(self.to_csr().tocsc())
        return self._csc[0]

    def user_indices(self) -> np.ndarray:
        """User index of every stored interaction, aligned with ``indices``."""
        return np.repeat(np.arange(self.n_users, dtype=np.int64), self.row_lengths())

    def digest(self) -> str:
        """Content hash of ids and structure, stable across runs."""
        h = hashlib.sha256()
        for ids in (self.user_map.external_ids, self.item_map.external_ids):
            h.update("\x1f".join(ids).encode())
            h.update(b"\x1e")
        h.update(self.indptr.tobytes())
        h.update(self.indices.tobytes())
        return h.hexdigest()

    def pairs(self) -> list[tuple[str, str]]:
        """Flatten back to external ``(user_id, item_id)`` pairs in storage order."""
        users = self.user_map.external_ids
        items = self.item_map.external_ids
        return [
            (users[u], items[i])
            for u, i in zip(self.user_indices().tolist(), self.indices.tolist())
        ]

    def __repr__(self) -> str:
        return (
            f"InteractionMatrix(users={self.n_users}, items={self.n_items}, "
            f"interactions={self.interaction_count})"
        )


@dataclass(frozen=True, eq=False)
class EmbeddingPair:
    """User factors ``P`` (|U| x d) and item factors ``Q`` (|I| x d)."""

    P: np.ndarray
    Q: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        P = np.ascontiguousarray(self.P, dtype=np.float64)
        Q = np.ascontiguousarray(self.Q, dtype=np.float64)
        if P.ndim != 2 or Q.ndim != 2:
            raise ValueError("embedding matrices must be 2-D")
        if P.shape[1] != Q.shape[1]:
            raise ValueError(f"dimension mismatch: P has d={P.shape[1]}, Q has d={Q.shape[1]}")
        if not (np.isfinite(P).all() and np.isfinite(Q).all()):
            raise TrainingError("embeddings contain non-finite values")
        P.flags.writeable = False
        Q.flags.writeable = False
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)

    @property
    def dim(self) -> int:
        return self.P.shape[1]

    @property
    def n_users(self) -> int:
        return self.P.shape[0]

    @property
    def n_items(self) -> int:
        return self.Q.shape[0]

    def check_matches(self, m: InteractionMatrix) -> None:
        if self.n_users != m.n_users or self.n_items != m.n_items:
            raise ValueError(
                f"embeddings are {self.n_users}x{self.n_items} (users x items) "
                f"but the interaction matrix is {m.n_users}x{m.n_items}"
            )

    def __repr__(self) -> str:
        return f"EmbeddingPair(users={self.n_users}, items={self.n_items}, dim={self.dim}, source={self.source_tag!r})"


def build_interaction_matrix(records: Sequence[tuple[str, str]]) -> InteractionMatrix:
    """Re-index ``(user_id, item_id)`` pairs into a dense CSR matrix.

    Users get indices in order of first appearance. Items get indices in order
    of first appearance when the records are scanned user by user, which makes
    the user-major dump written by ``ingest.write_interactions`` re-index to the
    same matrix. Duplicate pairs are rejected: they mean preprocessing was
    skipped or is broken.
    """
    users: dict[str, int] = {}
    grouped: list[list[str]] = []
    for user_id, item_id in records:
        user_id = str(user_id)
        u = users.get(user_id)
        if u is None:
            u = users[user_id] = len(users)
            grouped.append([])
        grouped[u].append(str(item_id))

    items: dict[str, int] = {}
    rows: list[list[int]] = []
    for item_ids in grouped:
        row = []
        for item_id in item_ids:
            i = items.get(item_id)
            if i is None:
                i = items[item_id] = len(items)
            row.append(i)
        rows.append(row)

    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    chunks = []
    for u, row in enumerate(rows):
        arr = np.sort(np.asarray(row, dtype=np.int64))
        if len(arr) > 1 and (np.diff(arr) == 0).any():
            j = arr[np.flatnonzero(np.diff(arr) == 0)[0]]
            raise DataError(
                f"duplicate interaction ({list(users)[u]!r}, {list(items)[j]!r}); "
                "records must be deduplicated before building the matrix"
            )
        chunks.append(arr)
        indptr[u + 1] = indptr[u] + len(arr)
    indices = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    return InteractionMatrix(IdMap(users), IdMap(items), indptr, indices)


def sparsity(m: InteractionMatrix) -> float:
    """``1 - |R| / (|U| * |I|)``."""
    if m.n_users == 0 or m.n_items == 0:
        raise DataError("sparsity is undefined for an empty matrix")
    return 1.0 - m.interaction_count / (m.n_users * m.n_items)
