"""Evaluation metrics: accuracy, rating error, exposure, distributional fairness,
visibility shift, calibration, disparity and user-profile diagnostics.

Distributions are plain ``dict`` objects mapping a key to a non-negative weight.
Undefined values come back as ``None`` and are left out of reports.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import Dataset, GenreMap, PopularityProfile, SupplierMap, popularity_profile
from .recommend import RecBatch

PROTECTED = "protected"
UNPROTECTED = "unprotected"


class MetricDomainError(ValueError):
    pass


# -- accuracy --------------------------------------------------------------------


def _test_profiles(test: Dataset) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for x in test.interactions:
        out.setdefault(x.user, set()).add(x.item)
    return out


def user_hits(batch: RecBatch, test: Dataset) -> dict[str, int]:
    relevant = _test_profiles(test)
    return {u: sum(i in relevant.get(u, ()) for i in rl.items) for u, rl in batch.lists.items()}


def precision_recall(batch: RecBatch, test: Dataset) -> tuple[float, float]:
    """Mean per-user precision over all listed users; recall skips users with
    no test items."""
    if len(test) == 0:
        raise MetricDomainError("empty test set")
    relevant = _test_profiles(test)
    precisions, recalls = [], []
    for user, rl in batch.lists.items():
        rel = relevant.get(user, set())
        hits = sum(i in rel for i in rl.items)
        precisions.append(hits / len(rl) if len(rl) else 0.0)
        if rel:
            recalls.append(hits / len(rel))
    if not precisions:
        raise MetricDomainError("empty batch")
    return float(np.mean(precisions)), float(np.mean(recalls)) if recalls else 0.0


def ndcg(batch: RecBatch, test: Dataset) -> float:
    """Binary-gain nDCG with natural-log discount, averaged over users that
    have test items."""
    relevant = _test_profiles(test)
    values = []
    for user, rl in batch.lists.items():
        rel = relevant.get(user)
        if not rel:
            continue
        dcg = sum(1.0 / math.log(k + 1) for k, i in enumerate(rl.items, start=1) if i in rel)
        ideal = sum(1.0 / math.log(j + 1) for j in range(1, min(len(rl), len(rel)) + 1))
        values.append(dcg / ideal if ideal > 0 else 0.0)
    return float(np.mean(values)) if values else 0.0


def error_metrics(predictions: Mapping[tuple[str, str], float], test: Dataset) -> tuple[float, float, float]:
    """(MAE, RMSE, UMAE). Predictions are clamped to the test rating scale."""
    if len(test) == 0:
        raise MetricDomainError("empty test set")
    lo, hi = test.rating_scale
    errors = []
    per_user: dict[str, list[float]] = {}
    missing = []
    for x in test.interactions:
        key = (x.user, x.item)
        if key not in predictions:
            missing.append(key)
            continue
        e = abs(x.rating - min(max(predictions[key], lo), hi))
        errors.append(e)
        per_user.setdefault(x.user, []).append(e)
    if missing:
        raise MetricDomainError(f"{len(missing)} test pairs lack predictions, e.g. {missing[0]}")
    errors = np.asarray(errors)
    umae = np.mean([np.mean(v) for v in per_user.values()])
    return float(errors.mean()), float(np.sqrt((errors**2).mean())), float(umae)


# -- exposure --------------------------------------------------------------------


def item_counts(batch: RecBatch) -> Counter:
    return Counter(i for rl in batch.lists.values() for i in rl.items)


def normalize(dist: Mapping[str, float]) -> dict[str, float]:
    total = math.fsum(dist.values())
    if total <= 0:
        return {k: 0.0 for k in dist}
    return {k: v / total for k, v in dist.items()}


def item_visibility(batch: RecBatch, catalog: Iterable[str] | None = None) -> dict[str, float]:
    """Fraction of users whose list contains each item (catalog zeros included)."""
    counts = item_counts(batch)
    keys = list(catalog) if catalog is not None else list(counts)
    n_users = max(len(batch), 1)
    return {i: counts.get(i, 0) / n_users for i in keys}


def supplier_visibility(batch: RecBatch, suppliers: SupplierMap) -> dict[str, float]:
    iv = item_visibility(batch)
    out = {s: 0.0 for s in suppliers.suppliers}
    for item, v in iv.items():
        out[suppliers.supplier_of(item)] += v
    return out


def visibility(
    batch: RecBatch,
    scope: str = "item",
    suppliers: SupplierMap | None = None,
    catalog: Iterable[str] | None = None,
    normalized: bool = False,
) -> dict[str, float]:
    if scope == "item":
        dist = item_visibility(batch, catalog)
    elif scope == "supplier":
        if suppliers is None:
            raise MetricDomainError("supplier scope needs a supplier map")
        dist = supplier_visibility(batch, suppliers)
    else:
        raise ValueError(f"unknown scope {scope!r}")
    return normalize(dist) if normalized else dist


def aggregate_diversity(
    batch: RecBatch,
    catalog: Iterable[str],
    alpha: int = 1,
    scope: str = "item",
    suppliers: SupplierMap | None = None,
) -> float:
    """Fraction of catalog items (or of all suppliers) recommended at least alpha times."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    counts = item_counts(batch)
    if scope == "item":
        keys = list(catalog)
        totals = {i: counts.get(i, 0) for i in keys}
    else:
        if suppliers is None:
            raise MetricDomainError("supplier scope needs a supplier map")
        totals = {s: sum(counts.get(i, 0) for i in items) for s, items in suppliers.supplier_to_items.items()}
    if not totals:
        return 0.0
    return sum(c >= alpha for c in totals.values()) / len(totals)


def longtail_coverage(batch: RecBatch, profile: PopularityProfile) -> float | None:
    longtail = profile.longtail
    if not longtail:
        return None
    shown = set(item_counts(batch))
    return len(longtail & shown) / len(longtail)


def gini(dist: Mapping[str, float] | Sequence[float]) -> float | None:
    """Gini index of a distribution, zero-weight members included.

    Weights are normalized and sorted ascending before evaluating
    ``sum_k (2k - N - 1) w_k / (N - 1)``.
    """
    w = np.asarray(list(dist.values()) if isinstance(dist, Mapping) else list(dist), dtype=float)
    if len(w) < 2 or w.sum() <= 0:
        return None
    w = np.sort(w / w.sum())
    N = len(w)
    k = np.arange(1, N + 1)
    return float(((2 * k - N - 1) * w).sum() / (N - 1))


def entropy(dist: Mapping[str, float] | Sequence[float]) -> float:
    """Shannon entropy (natural log) of the normalized weights; 0 ln 0 = 0."""
    w = np.asarray(list(dist.values()) if isinstance(dist, Mapping) else list(dist), dtype=float)
    if w.sum() <= 0:
        return 0.0
    w = w / w.sum()
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


def visibility_groups(keys_by_visibility: Sequence[str], bins: int = 10) -> list[list[str]]:
    """Equal-size consecutive bins; leftovers go to the earliest bins."""
    return [list(chunk) for chunk in np.array_split(np.asarray(keys_by_visibility, dtype=object), bins)]


def visibility_shift(
    base: RecBatch,
    reranked: RecBatch,
    scope: str = "item",
    suppliers: SupplierMap | None = None,
    bins: int = 10,
) -> list[float | None]:
    """Relative change in mean group visibility after re-ranking.

    Groups are visibility deciles of the base (long) lists. The base side of
    the comparison uses the base lists cut to the re-ranked list size.
    """
    n = reranked.list_size
    order = base.item_order()
    long_iv = item_visibility(base)
    base_iv = item_visibility(base.truncate(n))
    new_iv = item_visibility(reranked)
    if scope == "item":
        keys = sorted(order, key=lambda i: (-long_iv[i], order[i]))
        long_v, base_v, new_v = long_iv, base_iv, new_iv
    elif scope == "supplier":
        if suppliers is None:
            raise MetricDomainError("supplier scope needs a supplier map")
        sup_order: dict[str, int] = {}
        for item in order:
            sup_order.setdefault(suppliers.supplier_of(item), len(sup_order))

        def roll(iv):
            out = dict.fromkeys(sup_order, 0.0)
            for item, v in iv.items():
                s = suppliers.supplier_of(item)
                if s in out:
                    out[s] += v
            return out

        long_v, base_v, new_v = roll(long_iv), roll(base_iv), roll(new_iv)
        keys = sorted(sup_order, key=lambda s: (-long_v[s], sup_order[s]))
    else:
        raise ValueError(f"unknown scope {scope!r}")

    shifts: list[float | None] = []
    for group in visibility_groups(keys, bins):
        if not group:
            shifts.append(None)
            continue
        gv_base = math.fsum(base_v.get(k, 0.0) for k in group) / len(group)
        gv_new = math.fsum(new_v.get(k, 0.0) for k in group) / len(group)
        shifts.append(None if gv_base == 0 else (gv_new - gv_base) / gv_base)
    return shifts


# -- calibration ------------------------------------------------------------------


def kld(p: Mapping[str, float], q: Mapping[str, float], smooth_alpha: float = 0.01) -> float:
    """KL divergence of p from q smoothed towards p: q~ = (1 - a) q + a p."""
    if smooth_alpha < 0:
        raise ValueError("smoothing must be >= 0")
    total = 0.0
    for key in set(p) | set(q):
        pk = p.get(key, 0.0)
        if pk <= 0:
            continue
        qk = q.get(key, 0.0)
        # p == q must give exactly q; the blend form avoids cancellation near a = 1
        q_s = qk if qk == pk else (1 - smooth_alpha) * qk + smooth_alpha * pk
        if q_s <= 0:
            raise MetricDomainError(f"q~ is zero where p > 0 (key {key!r})")
        total += pk * math.log(pk / q_s)
    return max(total, 0.0)


def miscalibration(
    train: Dataset, batch: RecBatch, genres: GenreMap, smooth_alpha: float = 0.01
) -> tuple[dict[str, float], float]:
    """Per-user KLD between profile and recommendation genre mixes, and their mean."""
    per_user = {}
    for user, rl in batch.lists.items():
        profile = list(train.profile(user))
        if not profile or not len(rl):
            continue
        per_user[user] = kld(genres.distribution(profile), genres.distribution(rl.items), smooth_alpha)
    mean = float(np.mean(list(per_user.values()))) if per_user else 0.0
    return per_user, mean


def popularity_shares(items: Iterable[str], profile: PopularityProfile) -> dict[str, float]:
    counts = Counter(profile.group_of(i) for i in items)
    total = sum(counts.values())
    return {g: counts.get(g, 0) / total if total else 0.0 for g in ("head", "mid", "tail")}


def upd(
    train: Dataset, batch: RecBatch, profile: PopularityProfile, smooth_alpha: float = 0.01
) -> dict[str, float]:
    """Per-user KLD between head/mid/tail shares of profile and of recommendations."""
    out = {}
    for user, rl in batch.lists.items():
        items = list(train.profile(user))
        if not items or not len(rl):
            continue
        out[user] = kld(popularity_shares(items, profile), popularity_shares(rl.items, profile), smooth_alpha)
    return out


# -- group fairness -------------------------------------------------------------------


def spd(batch: RecBatch, test: Dataset, groups: Mapping[str, str]) -> float:
    """Mean precision of the unprotected group minus that of the protected group."""
    relevant = _test_profiles(test)
    by_group: dict[str, list[float]] = {PROTECTED: [], UNPROTECTED: []}
    for user, rl in batch.lists.items():
        label = groups.get(user)
        if label not in by_group:
            continue
        rel = relevant.get(user, set())
        by_group[label].append(sum(i in rel for i in rl.items) / len(rl) if len(rl) else 0.0)
    for label, values in by_group.items():
        if not values:
            raise MetricDomainError(f"group {label!r} is empty")
    return float(np.mean(by_group[UNPROTECTED]) - np.mean(by_group[PROTECTED]))


def _preference_ratio(pairs: Iterable[tuple[str, str]], group: set[str], category: set[str]) -> float | None:
    hits = total = 0
    for user, item in pairs:
        if user in group:
            total += 1
            hits += item in category
    return hits / total if total else None


def bias_disparity(
    train: Dataset,
    batch: RecBatch,
    group: Iterable[str],
    category: Iterable[str],
    catalog: Iterable[str],
) -> float | None:
    """Relative change of a group's bias towards a category from training data
    to recommendations."""
    group, category = set(group), set(category)
    if not category:
        raise MetricDomainError("empty category")
    p_c = len(category) / len(set(catalog))
    train_pairs = ((x.user, x.item) for x in train.interactions)
    rec_pairs = ((u, i) for u, rl in batch.lists.items() for i in rl.items)
    pr_t = _preference_ratio(train_pairs, group, category)
    pr_r = _preference_ratio(rec_pairs, group, category)
    if pr_t is None or pr_r is None or pr_t == 0:
        return None
    b_t, b_r = pr_t / p_c, pr_r / p_c
    return (b_r - b_t) / b_t


def average_disparity(
    train: Dataset,
    batch: RecBatch,
    groups: Mapping[str, str],
    categories: Mapping[str, Iterable[str]],
) -> float:
    """Mean over categories of |change in unprotected counts - change in protected counts|."""
    cats = {c: set(items) for c, items in categories.items()}
    if not cats:
        raise MetricDomainError("no categories")

    def counts(pairs):
        acc = {(g, c): 0 for g in (PROTECTED, UNPROTECTED) for c in cats}
        for user, item in pairs:
            g = groups.get(user)
            if g not in (PROTECTED, UNPROTECTED):
                continue
            for c, members in cats.items():
                if item in members:
                    acc[g, c] += 1
        return acc

    n_t = counts((x.user, x.item) for x in train.interactions)
    n_r = counts((u, i) for u, rl in batch.lists.items() for i in rl.items)
    total = 0.0
    for c in cats:
        d_u = n_r[UNPROTECTED, c] - n_t[UNPROTECTED, c]
        d_p = n_r[PROTECTED, c] - n_t[PROTECTED, c]
        total += abs(d_u - d_p)
    return total / len(cats)


# -- profile diagnostics ------------------------------------------------------------------


def profile_anomaly(train: Dataset, user: str) -> float:
    """Mean absolute gap between the user's ratings and the items' mean ratings."""
    profile = train.profile(user)
    if not profile:
        raise MetricDomainError(f"user {user} has no ratings")
    gaps = []
    for item, r in profile.items():
        ratings = list(train.item_profile(item).values())
        gaps.append(abs(r - math.fsum(ratings) / len(ratings)))
    return float(np.mean(gaps))


def profile_entropy(train: Dataset, user: str) -> float:
    profile = train.profile(user)
    if not profile:
        raise MetricDomainError(f"user {user} has no ratings")
    return entropy(list(Counter(profile.values()).values()))


# -- reports ------------------------------------------------------------------------------


@dataclass
class MetricsReport:
    records: list[tuple[str, str, float]] = field(default_factory=list)

    def add(self, scope: str, metric: str, value: float | None) -> None:
        if value is None or (isinstance(value, float) and not math.isfinite(value)):
            return
        if any(s == scope and m == metric for s, m, _ in self.records):
            raise ValueError(f"duplicate metric {metric!r} in scope {scope!r}")
        self.records.append((scope, metric, float(value)))

    def get(self, scope: str, metric: str) -> float | None:
        for s, m, v in self.records:
            if s == scope and m == metric:
                return v
        return None

    def to_tsv(self) -> str:
        return "".join(f"{s}\t{m}\t{v:.6f}\n" for s, m, v in self.records)

    def to_json(self) -> str:
        nested: dict[str, dict[str, float]] = {}
        for s, m, v in self.records:
            nested.setdefault(s, {})[m] = round(v, 6)
        return json.dumps(nested, indent=2) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> MetricsReport:
        report = cls()
        for line in text.splitlines():
            if line.strip():
                s, m, v = line.split("\t")
                report.add(s, m, float(v))
        return report


def evaluate(
    batch: RecBatch,
    train: Dataset,
    test: Dataset,
    *,
    scope: str = "final",
    suppliers: SupplierMap | None = None,
    base: RecBatch | None = None,
    alphas: Sequence[int] = (1, 2),
    report: MetricsReport | None = None,
) -> MetricsReport:
    """Standard multi-sided evaluation of one batch of final lists."""
    report = report if report is not None else MetricsReport()
    catalog = train.items
    p, r = precision_recall(batch, test)
    report.add(scope, "precision", p)
    report.add(scope, "recall", r)
    report.add(scope, "ndcg", ndcg(batch, test))
    for a in alphas:
        report.add(scope, f"{a}-IA", aggregate_diversity(batch, catalog, a))
    report.add(scope, "LT", longtail_coverage(batch, popularity_profile(train)))
    iv = item_visibility(batch, catalog)
    report.add(scope, "IG", gini(iv))
    report.add(scope, "IE", entropy(iv))
    if suppliers is not None:
        for a in alphas:
            report.add(scope, f"{a}-SA", aggregate_diversity(batch, catalog, a, "supplier", suppliers))
        sv = supplier_visibility(batch, suppliers)
        report.add(scope, "SG", gini(sv))
        report.add(scope, "SE", entropy(sv))
    if base is not None:
        for g, v in enumerate(visibility_shift(base, batch, "item"), start=1):
            report.add(scope, f"IVS_g{g}", v)
        if suppliers is not None:
            for g, v in enumerate(visibility_shift(base, batch, "supplier", suppliers), start=1):
                report.add(scope, f"SVS_g{g}", v)
    return report
