"""Dataset parsing and the implicit-feedback preprocessing pipeline."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

from .core import DataError, InteractionMatrix, build_interaction_matrix

logger = logging.getLogger(__name__)

EXPLICIT = "explicit"
IMPLICIT = "implicit"
MULTI_LEVEL = "multi-level"
FEEDBACK_KINDS = (EXPLICIT, IMPLICIT, MULTI_LEVEL)

Column = Union[int, str, None]


@dataclass(frozen=True)
class RawRecord:
    user_id: str
    item_id: str
    rating: float | None = None
    interaction_type: str | None = None
    timestamp: int | None = None

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise DataError("user_id and item_id must be non-empty")


@dataclass(frozen=True)
class DatasetSpec:
    """How to read one dataset file.

    Columns are either 0-based positions or header names (the latter needs
    ``has_header``). ``delimiter=None`` splits on runs of whitespace.
    ``inclusive_threshold`` keeps ratings equal to the intermediary rating;
    the default is the strict "higher than" rule.
    """

    name: str
    path: str = ""
    user_col: Column = 0
    item_col: Column = 1
    rating_col: Column = None
    type_col: Column = None
    timestamp_col: Column = None
    delimiter: str | None = ","
    has_header: bool = False
    feedback_kind: str = IMPLICIT
    selected_level: str | None = None
    inclusive_threshold: bool = False

    def __post_init__(self):
        if self.feedback_kind not in FEEDBACK_KINDS:
            raise ValueError(f"feedback_kind must be one of {FEEDBACK_KINDS}, got {self.feedback_kind!r}")
        if self.feedback_kind == MULTI_LEVEL and (self.selected_level is None or self.type_col is None):
            raise ValueError("multi-level feedback needs selected_level and type_col")
        if self.feedback_kind == EXPLICIT and self.rating_col is None:
            raise ValueError("explicit feedback needs rating_col")

    def with_path(self, path) -> "DatasetSpec":
        return replace(self, path=str(path))

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        preset = d.pop("preset", None)
        base = PRESETS[preset] if preset else None
        if base is not None:
            return replace(base, **d)
        return cls(**d)


# Layouts of the public releases of the nine benchmark datasets.
PRESETS: dict[str, DatasetSpec] = {
    "anime": DatasetSpec(
        "anime", user_col="user_id", item_col="anime_id", rating_col="rating",
        delimiter=",", has_header=True, feedback_kind=EXPLICIT,
    ),
    "bestbuy": DatasetSpec(
        "bestbuy", user_col="user", item_col="sku", timestamp_col=None,
        delimiter=",", has_header=True, feedback_kind=IMPLICIT,
    ),
    "ciaodvd": DatasetSpec(
        "ciaodvd", user_col=0, item_col=1, rating_col=4,
        delimiter=",", has_header=False, feedback_kind=EXPLICIT, inclusive_threshold=True,
    ),
    "delicious": DatasetSpec(
        "delicious", user_col="userID", item_col="bookmarkID", timestamp_col="timestamp",
        delimiter="\t", has_header=True, feedback_kind=IMPLICIT,
    ),
    "filmtrust": DatasetSpec(
        "filmtrust", user_col=0, item_col=1, rating_col=2,
        delimiter=None, has_header=False, feedback_kind=EXPLICIT,
    ),
    "jester": DatasetSpec(
        "jester", user_col=0, item_col=1, rating_col=2,
        delimiter=None, has_header=False, feedback_kind=EXPLICIT,
    ),
    "lastfm": DatasetSpec(
        "lastfm", user_col="userID", item_col="artistID",
        delimiter="\t", has_header=True, feedback_kind=IMPLICIT,
    ),
    "movielens-1m": DatasetSpec(
        "movielens-1m", user_col=0, item_col=1, rating_col=2, timestamp_col=3,
        delimiter="::", has_header=False, feedback_kind=EXPLICIT, inclusive_threshold=True,
    ),
    "retailrocket": DatasetSpec(
        "retailrocket", user_col="visitorid", item_col="itemid", type_col="event",
        timestamp_col="timestamp", delimiter=",", has_header=True,
        feedback_kind=MULTI_LEVEL, selected_level="transaction",
    ),
}


@dataclass
class ParseResult:
    records: list[RawRecord]
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def rejected_count(self) -> int:
        return len(self.rejected)

    def __len__(self) -> int:
        return len(self.records)


def _split_lines(path: Path, delimiter: str | None) -> Iterable[list[str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        if delimiter is not None and len(delimiter) == 1:
            for row in csv.reader(fh, delimiter=delimiter):
                yield row
        else:
            for line in fh:
                line = line.rstrip("\r\n")
                yield line.split(delimiter) if delimiter else line.split()


def _resolve(col: Column, header: list[str] | None, what: str) -> int | None:
    if col is None:
        return None
    if isinstance(col, int):
        return col
    if header is None:
        raise DataError(f"{what} column {col!r} is named but the file has no header")
    try:
        return header.index(col)
    except ValueError:
        raise DataError(f"{what} column {col!r} not found in header {header}") from None


def parse_dataset(spec: DatasetSpec, path=None) -> ParseResult:
    """Read one raw record per data row.

    Rows that cannot be coerced (short rows, empty ids, bad numbers) are kept
    out of ``records`` and listed in ``rejected`` with their 1-based line
    number.
    """
    path = Path(path if path is not None else spec.path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")

    rows = iter(_split_lines(path, spec.delimiter))
    header = None
    line_no = 0
    if spec.has_header:
        header = next(rows, None)
        line_no = 1
        if header is None:
            raise DataError(f"{path} is empty")
        header = [h.strip() for h in header]

    cols = {
        "user": _resolve(spec.user_col, header, "user"),
        "item": _resolve(spec.item_col, header, "item"),
        "rating": _resolve(spec.rating_col, header, "rating"),
        "type": _resolve(spec.type_col, header, "type"),
        "timestamp": _resolve(spec.timestamp_col, header, "timestamp"),
    }
    needed = max(c for c in cols.values() if c is not None)

    records: list[RawRecord] = []
    rejected: list[tuple[int, str]] = []
    for row in rows:
        line_no += 1
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) <= needed:
            rejected.append((line_no, f"expected at least {needed + 1} fields, got {len(row)}"))
            continue
        try:
            user = row[cols["user"]].strip()
            item = row[cols["item"]].strip()
            rating = float(row[cols["rating"]]) if cols["rating"] is not None else None
            if rating is not None and not math.isfinite(rating):
                raise ValueError(f"non-finite rating {rating}")
            kind = row[cols["type"]].strip() if cols["type"] is not None else None
            ts = int(float(row[cols["timestamp"]])) if cols["timestamp"] is not None else None
            records.append(RawRecord(user, item, rating, kind, ts))
        except (ValueError, DataError) as exc:
            rejected.append((line_no, str(exc)))

    if rejected:
        logger.warning("%s: rejected %d malformed rows (first at line %d)", path, len(rejected), rejected[0][0])
    if not records:
        raise DataError(f"{path}: no parseable rows ({len(rejected)} rejected)")
    return ParseResult(records, rejected)


def intermediary_rating(all_ratings: Sequence[float]) -> float:
    """Midpoint of the observed rating range: ``min + (max - min) / 2``."""
    if len(all_ratings) == 0:
        raise DataError("cannot compute the intermediary rating of an empty rating list")
    lo = min(all_ratings)
    hi = max(all_ratings)
    return lo + (hi - lo) / 2


def preprocess(records: Sequence[RawRecord], spec: DatasetSpec) -> list[tuple[str, str]]:
    """Turn raw records into unique implicit ``(user_id, item_id)`` pairs.

    Steps, in order: keep only the selected interaction level (multi-level
    data); drop every occurrence of a pair seen with two or more distinct
    ratings; collapse exact duplicates; for explicit data keep ratings above
    the intermediary rating of the whole file. Pairs come out in order of
    first appearance.
    """
    threshold = None
    if spec.feedback_kind == EXPLICIT:
        ratings = [r.rating for r in records if r.rating is not None]
        threshold = intermediary_rating(ratings)

    if spec.feedback_kind == MULTI_LEVEL:
        records = [r for r in records if r.interaction_type == spec.selected_level]

    first: dict[tuple[str, str], float | None] = {}
    inconsistent: set[tuple[str, str]] = set()
    for r in records:
        key = (r.user_id, r.item_id)
        if key in first:
            if first[key] != r.rating:
                inconsistent.add(key)
        else:
            first[key] = r.rating

    out = []
    for key, rating in first.items():
        if key in inconsistent:
            continue
        if threshold is not None:
            if rating is None:
                continue
            keep = rating >= threshold if spec.inclusive_threshold else rating > threshold
            if not keep:
                continue
        out.append(key)

    if not out:
        raise DataError(f"{spec.name}: no interactions left after preprocessing")
    logger.info(
        "%s: %d raw -> %d pairs (%d inconsistent pairs dropped, threshold=%s)",
        spec.name, len(records), len(out), len(inconsistent), threshold,
    )
    return out


def write_interactions(m: InteractionMatrix, path) -> None:
    """Canonical interactions file: ``user_id<TAB>item_id`` per line, matrix order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user_id, item_id in m.pairs():
            fh.write(f"{user_id}\t{item_id}\n")


def read_interactions(path) -> InteractionMatrix:
    if not Path(path).is_file():
        raise DataError(f"interactions file not found: {path}")
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DataError(f"{path}:{line_no}: expected 'user_id<TAB>item_id'")
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise DataError(f"{path}: no interactions")
    return build_interaction_matrix(pairs)


def load_dataset(spec: DatasetSpec, path=None) -> tuple[InteractionMatrix, ParseResult]:
    """Parse, preprocess and index a dataset in one go."""
    parsed = parse_dataset(spec, path)
    pairs = preprocess(parsed.records, spec)
    return build_interaction_matrix(pairs), parsed
