"""Item/user catalogs: loading, validation, profile and pair texts.

Items carry title, optional year, genres, frequency-counted tags and a
global popularity count. Profile texts concatenate title, genres and the
most frequent tags; pair texts wrap a user profile and an item profile in
a [CLS]/[SEP] template that downstream scorers consume byte-for-byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class CatalogError(ValueError):
    """Invalid catalog or user data."""


class DuplicateIdError(CatalogError):
    def __init__(self, item_id: str):
        super().__init__(f"duplicate item id: {item_id!r}")
        self.item_id = item_id


class ParseError(CatalogError):
    def __init__(self, path: str | Path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no


def _norm_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return " ".join(text.split())


def _sorted_tags(tags: Iterable[tuple[str, int]]) -> tuple[tuple[str, int], ...]:
    # descending frequency, ties broken lexicographically by tag text
    return tuple(sorted(((str(t), int(c)) for t, c in tags), key=lambda tc: (-tc[1], tc[0])))


@dataclass(frozen=True)
class Item:
    """One catalog entry. Tags are normalized to the canonical order on
    construction, so profile texts are unique per item."""

    id: str
    title: str = ""
    year: int | None = None
    genres: tuple[str, ...] = ()
    tags: tuple[tuple[str, int], ...] = ()
    popularity: int = 0

    def __post_init__(self):
        if not self.id:
            raise CatalogError("item id must be non-empty")
        if self.popularity < 0:
            raise CatalogError(f"item {self.id!r}: popularity must be >= 0")
        object.__setattr__(self, "genres", tuple(str(g) for g in self.genres))
        for _, count in self.tags:
            if int(count) < 0:
                raise CatalogError(f"item {self.id!r}: tag count must be >= 0")
        object.__setattr__(self, "tags", _sorted_tags(self.tags))


@dataclass
class UserRecord:
    """Cold-start user: opaque profile text plus ground-truth item ids."""

    id: str
    profile_text: str = ""
    gt_items: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.id:
            raise CatalogError("user id must be non-empty")
        self.gt_items = frozenset(str(i) for i in self.gt_items)


class Catalog:
    """Id-indexed, insertion-ordered collection of items. Immutable after
    construction; safe for concurrent reads."""

    def __init__(self, items: Iterable[Item]):
        self._items: dict[str, Item] = {}
        for item in items:
            if item.id in self._items:
                raise DuplicateIdError(item.id)
            self._items[item.id] = item

    @property
    def size(self) -> int:
        return len(self._items)

    @property
    def item_ids(self) -> list[str]:
        return list(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._items

    def __getitem__(self, item_id: str) -> Item:
        return self._items[item_id]

    def __iter__(self) -> Iterator[Item]:
        return iter(self._items.values())

    def get(self, item_id: str) -> Item | None:
        return self._items.get(item_id)


# ---------------------------------------------------------------------------
# profile / pair texts

def build_item_profile(item: Item, max_tags: int = 10) -> str:
    """Concatenate title, genres and the ``max_tags`` most frequent tags.

    Missing fields contribute nothing; the result has single spaces only.
    No stemming, lemmatization or casefolding is applied.
    """
    if max_tags < 0:
        raise ValueError("max_tags must be >= 0")
    parts = [item.title]
    parts.extend(item.genres)
    parts.extend(tag for tag, _ in item.tags[:max_tags])
    return _norm_ws(" ".join(parts))


def build_pair_text(user_profile: str, item: Item, max_tags: int = 10) -> str:
    """Render the scorer input ``[CLS] {profile} [SEP] {item profile} [SEP]``.

    Both slots are whitespace-normalized before templating, so equivalent
    inputs produce byte-identical strings across components. An empty slot
    stays empty (leaving two spaces between the markers).
    """
    return f"[CLS] {_norm_ws(user_profile)} [SEP] {build_item_profile(item, max_tags)} [SEP]"


# ---------------------------------------------------------------------------
# catalog files

_CSV_HEADER = ["id", "title", "year", "genres", "tags", "popularity"]


def _item_from_fields(path, line_no, fields: dict) -> Item:
    try:
        raw_year = fields.get("year")
        year = None if raw_year in (None, "") else int(raw_year)
        raw_genres = fields.get("genres") or ""
        if isinstance(raw_genres, str):
            genres = tuple(g for g in raw_genres.split("|") if g)
        else:
            genres = tuple(str(g) for g in raw_genres)
        raw_tags = fields.get("tags") or ""
        if isinstance(raw_tags, str):
            tags = []
            for chunk in raw_tags.split("|"):
                if not chunk:
                    continue
                text, sep, count = chunk.rpartition(":")
                if not sep:
                    raise ValueError(f"malformed tag {chunk!r} (expected tag:count)")
                tags.append((text, int(count)))
        else:
            tags = [(str(t), int(c)) for t, c in raw_tags]
        return Item(
            id=str(fields["id"]),
            title=str(fields.get("title") or ""),
            year=year,
            genres=genres,
            tags=tuple(tags),
            popularity=int(fields.get("popularity") or 0),
        )
    except ParseError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(path, line_no, str(exc)) from exc


def load_catalog(path: str | Path, format: str | None = None) -> Catalog:
    """Load a catalog from CSV or JSONL (see the file schemas in README).

    Raises ParseError with a line number on malformed rows and
    DuplicateIdError when an id repeats.
    """
    path = Path(path)
    fmt = format or ("jsonl" if path.suffix == ".jsonl" else "csv")
    items: list[Item] = []
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ParseError(path, 1, "missing header row")
            missing = set(_CSV_HEADER) - set(reader.fieldnames)
            if missing:
                raise ParseError(path, 1, f"missing columns: {sorted(missing)}")
            for row in reader:
                items.append(_item_from_fields(path, reader.line_num, row))
    elif fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    fields = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(path, line_no, f"invalid JSON: {exc}") from exc
                items.append(_item_from_fields(path, line_no, fields))
    else:
        raise ValueError(f"unknown catalog format: {fmt!r}")
    return Catalog(items)


def _tags_to_csv(tags: tuple[tuple[str, int], ...]) -> str:
    return "|".join(f"{t}:{c}" for t, c in tags)


def save_catalog(catalog: Catalog, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or ("jsonl" if path.suffix == ".jsonl" else "csv")
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_HEADER)
            for item in catalog:
                writer.writerow([
                    item.id,
                    item.title,
                    "" if item.year is None else item.year,
                    "|".join(item.genres),
                    _tags_to_csv(item.tags),
                    item.popularity,
                ])
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for item in catalog:
                record = {
                    "id": item.id,
                    "title": item.title,
                    "year": item.year,
                    "genres": list(item.genres),
                    "tags": [[t, c] for t, c in item.tags],
                    "popularity": item.popularity,
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    else:
        raise ValueError(f"unknown catalog format: {fmt!r}")


# ---------------------------------------------------------------------------
# user files

def load_users(path: str | Path) -> list[UserRecord]:
    """Load users from JSONL: {"id", "profile_text", "gt_items"} per line."""
    path = Path(path)
    users: list[UserRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                user = UserRecord(
                    id=str(record["id"]),
                    profile_text=str(record.get("profile_text") or ""),
                    gt_items=frozenset(record.get("gt_items") or ()),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, line_no, str(exc)) from exc
            if user.id in seen:
                raise ParseError(path, line_no, f"duplicate user id: {user.id!r}")
            seen.add(user.id)
            users.append(user)
    return users


def save_users(users: Iterable[UserRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for user in users:
            record = {
                "id": user.id,
                "profile_text": user.profile_text,
                "gt_items": sorted(user.gt_items),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


@dataclass
class MissingGtReport:
    """Ground-truth references that point outside the catalog.

    Affected users are retained (with the dangling ids dropped) rather
    than filtered out, so downstream metrics see the full test set.
    """

    missing_by_user: dict[str, list[str]]

    @property
    def affected_users(self) -> int:
        return len(self.missing_by_user)

    @property
    def total_missing(self) -> int:
        return sum(len(v) for v in self.missing_by_user.values())

    def to_json_dict(self) -> dict:
        return {
            "affected_users": self.affected_users,
            "total_missing": self.total_missing,
            "missing_by_user": {u: sorted(v) for u, v in sorted(self.missing_by_user.items())},
        }


def validate_users(users: Iterable[UserRecord], catalog: Catalog) -> tuple[list[UserRecord], MissingGtReport]:
    """Drop gt references to unknown items, recording them per user."""
    validated: list[UserRecord] = []
    missing_by_user: dict[str, list[str]] = {}
    for user in users:
        missing = sorted(i for i in user.gt_items if i not in catalog)
        if missing:
            missing_by_user[user.id] = missing
            user = UserRecord(
                id=user.id,
                profile_text=user.profile_text,
                gt_items=frozenset(i for i in user.gt_items if i in catalog),
            )
        validated.append(user)
    return validated, MissingGtReport(missing_by_user)
