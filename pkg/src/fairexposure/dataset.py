"""Rating data: loading, indexing, per-user holdout splits and popularity profiles.

Ratings live in headerless TSV files (``user<TAB>item<TAB>rating[<TAB>timestamp]``).
Supplier files map ``item<TAB>supplier`` and genre files map
``item<TAB>genre1|genre2|...``.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Base class for problems with input data."""


class ParseError(DatasetError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


class RatingRangeError(DatasetError):
    pass


class DuplicateInteractionError(DatasetError):
    pass


class SupplierCoverageError(DatasetError):
    def __init__(self, missing: list[str]):
        super().__init__(f"items without a supplier: {', '.join(missing)}")
        self.missing = missing


class SupplierConflictError(DatasetError):
    pass


@dataclass(frozen=True)
class Interaction:
    user: str
    item: str
    rating: float
    timestamp: int | None = None


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of explicit ratings with dense user/item ordinals.

    The indices may list users or items that have no interactions (a train split
    keeps the catalog of its source), but every interaction refers to an indexed
    user and item.
    """

    interactions: tuple[Interaction, ...]
    user_index: Mapping[str, int]
    item_index: Mapping[str, int]
    rating_scale: tuple[float, float]
    _by_user: dict = field(default=None, init=False, repr=False, compare=False)
    _by_item: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = self.rating_scale
        by_user: dict[str, dict[str, float]] = {}
        by_item: dict[str, dict[str, float]] = {}
        for x in self.interactions:
            if not x.user or not x.item:
                raise DatasetError("empty user or item identifier")
            if x.user not in self.user_index or x.item not in self.item_index:
                raise DatasetError(f"({x.user}, {x.item}) is not indexed")
            if not lo <= x.rating <= hi:
                raise RatingRangeError(
                    f"rating {x.rating} for ({x.user}, {x.item}) outside [{lo}, {hi}]"
                )
            profile = by_user.setdefault(x.user, {})
            if x.item in profile:
                raise DuplicateInteractionError(f"duplicate pair ({x.user}, {x.item})")
            profile[x.item] = x.rating
            by_item.setdefault(x.item, {})[x.user] = x.rating
        _check_dense(self.user_index, "user")
        _check_dense(self.item_index, "item")
        object.__setattr__(self, "_by_user", by_user)
        object.__setattr__(self, "_by_item", by_item)

    @classmethod
    def from_interactions(
        cls,
        interactions: Iterable[Interaction],
        rating_scale: tuple[float, float],
        users: Iterable[str] | None = None,
        items: Iterable[str] | None = None,
    ) -> Dataset:
        """Build a dataset, assigning ordinals by first appearance unless
        explicit user/item orders are given."""
        interactions = tuple(interactions)
        if users is None:
            users = dict.fromkeys(x.user for x in interactions)
        if items is None:
            items = dict.fromkeys(x.item for x in interactions)
        user_index = {u: k for k, u in enumerate(users)}
        item_index = {i: k for k, i in enumerate(items)}
        return cls(interactions, user_index, item_index, tuple(rating_scale))

    @property
    def users(self) -> list[str]:
        return list(self.user_index)

    @property
    def items(self) -> list[str]:
        return list(self.item_index)

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    @property
    def n_items(self) -> int:
        return len(self.item_index)

    def __len__(self) -> int:
        return len(self.interactions)

    def profile(self, user: str) -> dict[str, float]:
        """Item -> rating for one user (empty when the user has no ratings)."""
        return self._by_user.get(user, {})

    def item_profile(self, item: str) -> dict[str, float]:
        """User -> rating for one item."""
        return self._by_item.get(item, {})

    def item_counts(self) -> dict[str, int]:
        """Interaction count per catalog item, zeros included."""
        return {i: len(self._by_item.get(i, ())) for i in self.item_index}

    def with_ratings(
        self, ratings: Iterable[float], rating_scale: tuple[float, float]
    ) -> Dataset:
        """Same (user, item) structure and indices, new rating values."""
        new = tuple(
            Interaction(x.user, x.item, float(r), x.timestamp)
            for x, r in zip(self.interactions, ratings, strict=True)
        )
        return Dataset(new, self.user_index, self.item_index, tuple(rating_scale))

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(ratings, mask)`` arrays of shape (n_users, n_items).

        Missing entries are 0 in ``ratings``.
        """
        R = np.zeros((self.n_users, self.n_items))
        M = np.zeros((self.n_users, self.n_items), dtype=bool)
        for x in self.interactions:
            u, i = self.user_index[x.user], self.item_index[x.item]
            R[u, i] = x.rating
            M[u, i] = True
        return R, M


def _check_dense(index: Mapping[str, int], what: str):
    if sorted(index.values()) != list(range(len(index))):
        raise DatasetError(f"{what} index is not dense 0..{len(index) - 1}")


@dataclass(frozen=True)
class SupplierMap:
    item_to_supplier: Mapping[str, str]
    supplier_to_items: Mapping[str, frozenset[str]]

    @classmethod
    def from_pairs(cls, pairs: Mapping[str, str]) -> SupplierMap:
        inverse: dict[str, set[str]] = {}
        for item, sup in pairs.items():
            inverse.setdefault(sup, set()).add(item)
        return cls(dict(pairs), {s: frozenset(v) for s, v in inverse.items()})

    @property
    def suppliers(self) -> list[str]:
        return list(self.supplier_to_items)

    def supplier_of(self, item: str) -> str:
        return self.item_to_supplier[item]


@dataclass(frozen=True)
class GenreMap:
    item_to_genres: Mapping[str, tuple[str, ...]]

    def weights(self, item: str) -> dict[str, float]:
        """Equal share of one unit across the item's genres."""
        genres = self.item_to_genres[item]
        return {g: 1.0 / len(genres) for g in genres}

    def distribution(self, items: Iterable[str]) -> dict[str, float]:
        """Normalized genre distribution of a bag of items."""
        acc: dict[str, float] = {}
        total = 0
        for item in items:
            for g, w in self.weights(item).items():
                acc[g] = acc.get(g, 0.0) + w
            total += 1
        if total == 0:
            return {}
        return {g: w / total for g, w in sorted(acc.items())}


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    seed: int


@dataclass(frozen=True)
class PopularityProfile:
    item_counts: Mapping[str, int]
    head: frozenset[str]
    mid: frozenset[str]
    tail: frozenset[str]

    @property
    def longtail(self) -> frozenset[str]:
        return self.mid | self.tail

    def group_of(self, item: str) -> str:
        if item in self.head:
            return "head"
        if item in self.mid:
            return "mid"
        return "tail"


# -- I/O ---------------------------------------------------------------------


def load_ratings(path, scale: tuple[float, float]) -> Dataset:
    path = Path(path)
    interactions = []
    seen: set[tuple[str, str]] = set()
    lo, hi = scale
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise ParseError(path, lineno, f"expected 3 or 4 fields, got {len(parts)}")
            user, item = parts[0], parts[1]
            if not user or not item:
                raise ParseError(path, lineno, "empty user or item")
            try:
                rating = float(parts[2])
                ts = int(parts[3]) if len(parts) == 4 else None
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if not math.isfinite(rating) or not lo <= rating <= hi:
                raise RatingRangeError(f"{path}:{lineno}: rating {parts[2]} outside [{lo}, {hi}]")
            if (user, item) in seen:
                raise DuplicateInteractionError(f"{path}:{lineno}: duplicate pair ({user}, {item})")
            seen.add((user, item))
            interactions.append(Interaction(user, item, rating, ts))
    return Dataset.from_interactions(interactions, scale)


def format_rating(r: float) -> str:
    """Shortest text that round-trips the float; integral values print bare."""
    if float(r).is_integer():
        return str(int(r))
    return repr(float(r))


def write_ratings(dataset: Dataset, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for x in dataset.interactions:
            fields = [x.user, x.item, format_rating(x.rating)]
            if x.timestamp is not None:
                fields.append(str(x.timestamp))
            fh.write("\t".join(fields) + "\n")


def _read_pairs(path) -> list[tuple[int, str, str]]:
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(path, lineno, "expected 2 non-empty fields")
            rows.append((lineno, parts[0], parts[1]))
    return rows


def load_supplier_map(path, dataset: Dataset) -> SupplierMap:
    pairs: dict[str, str] = {}
    for lineno, item, sup in _read_pairs(path):
        if item in pairs and pairs[item] != sup:
            raise SupplierConflictError(
                f"{path}:{lineno}: item {item} listed with suppliers {pairs[item]} and {sup}"
            )
        pairs[item] = sup
    missing = [i for i in dataset.item_index if i not in pairs]
    if missing:
        raise SupplierCoverageError(missing)
    return SupplierMap.from_pairs(pairs)


def write_supplier_map(suppliers: SupplierMap, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for item, sup in suppliers.item_to_supplier.items():
            fh.write(f"{item}\t{sup}\n")


def load_genre_map(path) -> GenreMap:
    genres = {}
    for lineno, item, field_ in _read_pairs(path):
        labels = tuple(g for g in field_.split("|") if g)
        if not labels:
            raise ParseError(path, lineno, "item without genres")
        genres[item] = labels
    return GenreMap(genres)


def write_genre_map(genres: GenreMap, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for item, labels in genres.item_to_genres.items():
            fh.write(f"{item}\t{'|'.join(labels)}\n")


# -- splitting and profiling ---------------------------------------------------


def user_rng(seed: int, ordinal: int) -> np.random.Generator:
    """Independent generator for one user, stable across runs and thread counts."""
    return np.random.default_rng([seed, ordinal])


def holdout_size(profile_size: int, test_fraction: float) -> int:
    k = math.floor(test_fraction * profile_size + 1e-9)
    if profile_size >= 5:
        k = max(k, 1)
    # every test user must keep at least one train interaction
    return max(0, min(k, profile_size - 1))


def split_holdout(dataset: Dataset, test_fraction: float, seed: int) -> SplitPair:
    """Per-user random holdout of ``floor(test_fraction * |profile|)`` interactions."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    rows_by_user: dict[str, list[int]] = {}
    for k, x in enumerate(dataset.interactions):
        rows_by_user.setdefault(x.user, []).append(k)

    test_rows: set[int] = set()
    for user, rows in rows_by_user.items():
        if len(rows) < 2:
            log.warning("user %s has %d interaction(s); kept entirely in train", user, len(rows))
            continue
        n_test = holdout_size(len(rows), test_fraction)
        if n_test == 0:
            continue
        rng = user_rng(seed, dataset.user_index[user])
        picked = rng.choice(len(rows), size=n_test, replace=False)
        test_rows.update(rows[p] for p in picked)

    train = [x for k, x in enumerate(dataset.interactions) if k not in test_rows]
    test = [x for k, x in enumerate(dataset.interactions) if k in test_rows]
    make = lambda xs: Dataset(tuple(xs), dataset.user_index, dataset.item_index, dataset.rating_scale)
    return SplitPair(make(train), make(test), seed)


def popularity_profile(train: Dataset) -> PopularityProfile:
    """Head covers the first 20% of interactions, mid extends coverage to 80%."""
    counts = train.item_counts()
    total = sum(counts.values())
    if total == 0:
        raise DatasetError("cannot profile an empty dataset")
    order = sorted(counts, key=lambda i: (-counts[i], train.item_index[i]))
    head, mid, tail = [], [], []
    cum = 0
    for item in order:
        # integer arithmetic keeps the 20%/80% cut points exact
        if 5 * cum < total:
            head.append(item)
        elif 5 * cum < 4 * total:
            mid.append(item)
        else:
            tail.append(item)
        cum += counts[item]
    return PopularityProfile(Counter(counts), frozenset(head), frozenset(mid), frozenset(tail))
