"""Synthetic rating data with Zipf-skewed item popularity, plus the small fixtures
used by the re-ranking and feedback-loop experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, GenreMap, Interaction, SupplierMap, popularity_profile, split_holdout
from .recommend import RecBatch, RecList


def zipf_weights(n_items: int, exponent: float) -> np.ndarray:
    w = np.arange(1, n_items + 1, dtype=float) ** -exponent
    return w / w.sum()


def user_name(k: int) -> str:
    return f"u{k:03d}"


def item_name(k: int) -> str:
    return f"i{k:03d}"


def zipf_dataset(
    n_users: int = 200,
    n_items: int = 100,
    exponent: float = 1.2,
    seed: int = 42,
    profile_size: tuple[int, int] = (10, 30),
    scale: tuple[int, int] = (1, 5),
    popularity_lift: float = 1.0,
) -> Dataset:
    """Users sample items without replacement with Zipf-distributed probability.

    Item ``i000`` is the most popular. Integer ratings centre on the scale
    midpoint, shifted up for popular items by ``popularity_lift`` points (at
    the top item) plus per-user bias and Gaussian noise.
    """
    rng = np.random.default_rng(seed)
    weights = zipf_weights(n_items, exponent)
    lo, hi = scale
    mid = (lo + hi) / 2
    # lift decays with log-rank so the top items are rated highest
    lift = popularity_lift * (1 - np.log1p(np.arange(n_items)) / np.log(n_items))
    interactions = []
    for u in range(n_users):
        size = int(rng.integers(profile_size[0], profile_size[1] + 1))
        items = rng.choice(n_items, size=min(size, n_items), replace=False, p=weights)
        bias = rng.normal(0, 0.5)
        for i in sorted(items):
            r = int(np.clip(np.rint(mid + lift[i] + bias + rng.normal(0, 0.8)), lo, hi))
            interactions.append(Interaction(user_name(u), item_name(i), float(r)))
    return Dataset.from_interactions(
        interactions,
        scale,
        users=[user_name(u) for u in range(n_users)],
        items=[item_name(i) for i in range(n_items)],
    )


def random_genres(items, n_genres: int = 6, seed: int = 0, max_per_item: int = 3) -> GenreMap:
    rng = np.random.default_rng(seed)
    labels = [f"g{k}" for k in range(n_genres)]
    out = {}
    for item in items:
        k = int(rng.integers(1, max_per_item + 1))
        picked = sorted(rng.choice(n_genres, size=k, replace=False))
        out[item] = tuple(labels[j] for j in picked)
    return GenreMap(out)


def random_groups(users, protected_fraction: float = 0.3, seed: int = 0) -> dict[str, str]:
    rng = np.random.default_rng(seed)
    return {u: "protected" if rng.random() < protected_fraction else "unprotected" for u in users}


def head_owner_suppliers(train: Dataset, items_per_supplier: int = 2) -> SupplierMap:
    """One supplier owns every head item; the remaining items are grouped into
    small suppliers in catalog order."""
    head = popularity_profile(train).head
    pairs = {}
    rest = [i for i in train.items if i not in head]
    for item in train.items:
        if item in head:
            pairs[item] = "s_head"
    for k, item in enumerate(rest):
        pairs[item] = f"s{k // items_per_supplier:03d}"
    return SupplierMap.from_pairs(pairs)


@dataclass(frozen=True)
class RerankFixture:
    train: Dataset
    test: Dataset
    batch: RecBatch
    suppliers: SupplierMap


def zipf_rerank_fixture(
    n_users: int = 10,
    n_items: int = 100,
    t: int = 30,
    profile_size: int = 12,
    exponent: float = 1.0,
    seed: int = 0,
) -> RerankFixture:
    """Small re-ranking testbed with Zipf-ranked long lists.

    Each user's utility for an item is its log Zipf weight plus Gumbel noise,
    so ranking by utility is a Plackett-Luce draw from the popularity
    distribution. The profile is the top ``profile_size`` items by utility,
    split 80/20; the long list ranks the remaining items by a noisy estimate
    of the same utility.
    """
    rng = np.random.default_rng(seed)
    logw = np.log(zipf_weights(n_items, exponent))
    interactions = []
    estimates = {}
    for u in range(n_users):
        utility = logw + rng.gumbel(size=n_items)
        top = np.argsort(-utility, kind="stable")[:profile_size]
        for rank, i in enumerate(sorted(top)):
            interactions.append(Interaction(user_name(u), item_name(i), 5.0))
        estimates[user_name(u)] = utility + rng.normal(0, 0.5, n_items)
    dataset = Dataset.from_interactions(
        interactions,
        (1, 5),
        users=[user_name(u) for u in range(n_users)],
        items=[item_name(i) for i in range(n_items)],
    )
    split = split_holdout(dataset, 0.2, seed)
    lists = {}
    for user in dataset.users:
        seen = split.train.profile(user)
        scores = estimates[user]
        ranked = [i for i in np.lexsort((np.arange(n_items), -scores)) if item_name(i) not in seen][:t]
        lists[user] = RecList(user, tuple((item_name(i), float(scores[i])) for i in ranked))
    batch = RecBatch(lists, t)
    return RerankFixture(split.train, split.test, batch, head_owner_suppliers(split.train))
