"""Rating pre-processing: percentile and z-score transforms over item or user profiles."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Literal, Sequence

from .dataset import Dataset

Axis = Literal["item", "user"]
TieRule = Literal["first", "last"]


@dataclass(frozen=True)
class TransformConfig:
    kind: Literal["percentile", "zscore", "identity"] = "percentile"
    axis: Axis = "item"
    tie_rule: TieRule = "last"

    def __post_init__(self):
        if self.kind not in ("percentile", "zscore", "identity"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.axis not in ("item", "user"):
            raise ValueError(f"unknown axis {self.axis!r}")
        if self.tie_rule not in ("first", "last"):
            raise ValueError(f"unknown tie rule {self.tie_rule!r}")


def percentile_of(value: float, profile: Sequence[float], tie_rule: TieRule = "last") -> float:
    """Percentile of ``value`` by its 1-based position in the sorted profile.

    Repeated values take the position of their first or last occurrence. A value
    absent from the profile takes the position it would be inserted at.
    """
    if len(profile) == 0:
        raise ValueError("percentile of an empty profile")
    ordered = sorted(profile)
    lo = bisect.bisect_left(ordered, value)
    hi = bisect.bisect_right(ordered, value)
    if lo == hi:
        position = lo + 1
    elif tie_rule == "first":
        position = lo + 1
    elif tie_rule == "last":
        position = hi
    else:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    return 100.0 * position / (len(ordered) + 1)


def _profiles(dataset: Dataset, axis: Axis) -> dict[str, list[float]]:
    key = (lambda x: x.item) if axis == "item" else (lambda x: x.user)
    out: dict[str, list[float]] = {}
    for x in dataset.interactions:
        out.setdefault(key(x), []).append(x.rating)
    return out


def percentile_transform(dataset: Dataset, config: TransformConfig = TransformConfig()) -> Dataset:
    if config.kind != "percentile":
        raise ValueError("percentile_transform needs kind='percentile'")
    profiles = _profiles(dataset, config.axis)
    # one pass per profile: sort once, look positions up by bisection
    tables: dict[str, tuple[list[float], int]] = {
        k: (sorted(v), len(v)) for k, v in profiles.items()
    }
    out = []
    for x in dataset.interactions:
        ordered, size = tables[x.item if config.axis == "item" else x.user]
        if config.tie_rule == "first":
            position = bisect.bisect_left(ordered, x.rating) + 1
        else:
            position = bisect.bisect_right(ordered, x.rating)
        out.append(100.0 * position / (size + 1))
    return dataset.with_ratings(out, (0.0, 100.0))


def zscore_transform(dataset: Dataset, axis: Axis = "item") -> Dataset:
    """Standardize within each profile using the population standard deviation.

    Constant profiles map to 0.
    """
    stats = {}
    for key, values in _profiles(dataset, axis).items():
        mean = math.fsum(values) / len(values)
        sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))
        stats[key] = (mean, sd)
    out = []
    for x in dataset.interactions:
        mean, sd = stats[x.item if axis == "item" else x.user]
        # float noise in the mean of a constant profile must not count as spread
        out.append(0.0 if sd <= 1e-12 * max(1.0, abs(mean)) else (x.rating - mean) / sd)
    scale = (min(out), max(out)) if out else (0.0, 0.0)
    return dataset.with_ratings(out, scale)


def apply_transform(dataset: Dataset, config: TransformConfig) -> Dataset:
    if config.kind == "identity":
        return dataset
    if config.kind == "zscore":
        return zscore_transform(dataset, config.axis)
    return percentile_transform(dataset, config)
