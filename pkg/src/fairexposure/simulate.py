"""Offline feedback-loop simulation.

Each round splits the current data, trains a recommender, lets every user
accept one recommended item with rank-discounted probability, synthesizes a
rating for it and appends the result to the data for the next round.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .dataset import Dataset, GenreMap, Interaction, split_holdout
from .metrics import PROTECTED, UNPROTECTED, aggregate_diversity, kld
from .recommend import RecList, RecommendConfig, recommend_batch, train_model


class SimulationError(RuntimeError):
    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


@dataclass(frozen=True)
class SimConfig:
    iterations: int = 20
    list_size: int = 10
    acceptance_alpha: float = -0.1
    recommender: RecommendConfig = field(default_factory=lambda: RecommendConfig(algorithm="mostpopular"))
    seed: int = 0
    rating_scale: tuple[int, int] = (1, 5)
    test_fraction: float = 0.2
    smooth_alpha: float = 0.01

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.acceptance_alpha < 0:
            raise ValueError("acceptance_alpha must be negative")
        if self.list_size < 1:
            raise ValueError("list_size must be >= 1")
        a, b = self.rating_scale
        if a != int(a) or b != int(b) or a >= b:
            raise ValueError("rating_scale must be increasing integers")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    dataset_size: int
    accepted: int
    mean_data_popularity: float
    mean_rec_popularity: float
    mean_accepted_popularity: float
    next_data_popularity: float
    item_coverage: float
    taste_shift: Mapping[str, float]
    inter_group_kld: float | None
    group_population_kld: Mapping[str, float]

    @property
    def theta(self) -> float:
        return self.mean_rec_popularity - self.mean_data_popularity

    @property
    def predicted_increment(self) -> float:
        return self.accepted * self.theta / (self.dataset_size + self.accepted)

    @property
    def realized_increment(self) -> float:
        return self.next_data_popularity - self.mean_data_popularity

    @property
    def mean_taste_shift(self) -> float:
        return float(np.mean(list(self.taste_shift.values()))) if self.taste_shift else 0.0


@dataclass(frozen=True)
class IterationLog:
    config: SimConfig
    records: tuple[IterationRecord, ...]
    final: Dataset

    def __len__(self) -> int:
        return len(self.records)

    def series(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]


TSV_COLUMNS = (
    "iteration",
    "dataset_size",
    "accepted",
    "mean_data_popularity",
    "mean_rec_popularity",
    "theta",
    "predicted_increment",
    "realized_increment",
    "item_coverage",
    "mean_taste_shift",
    "inter_group_kld",
    "protected_population_kld",
    "unprotected_population_kld",
)


def log_to_tsv(log: IterationLog) -> str:
    lines = ["\t".join(TSV_COLUMNS)]
    for r in log.records:
        row = []
        for col in TSV_COLUMNS:
            if col == "protected_population_kld":
                v = r.group_population_kld.get(PROTECTED)
            elif col == "unprotected_population_kld":
                v = r.group_population_kld.get(UNPROTECTED)
            else:
                v = getattr(r, col)
            if v is None:
                row.append("NA")
            elif isinstance(v, int):
                row.append(str(v))
            else:
                row.append(f"{v:.6f}")
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


# -- user behaviour ---------------------------------------------------------------


def acceptance_probabilities(n: int, alpha: float) -> np.ndarray:
    """Normalized e^(alpha * rank) over ranks 1..n."""
    if n < 1:
        raise ValueError("empty list")
    ranks = np.arange(1, n + 1, dtype=float)
    # shift by the first rank before exponentiating; normalization cancels it
    w = np.exp(alpha * (ranks - 1))
    return w / w.sum()


def acceptance_select(rl: RecList, alpha: float, rng: np.random.Generator) -> str:
    if not len(rl):
        raise ValueError("cannot select from an empty list")
    p = acceptance_probabilities(len(rl), alpha)
    return rl.items[int(rng.choice(len(rl), p=p))]


class RatingEstimate(NamedTuple):
    value: int
    fallback: bool


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def estimate_rating(
    user: str,
    item: str,
    dataset: Dataset,
    rng: np.random.Generator,
    scale: tuple[int, int],
    noise: float | None = None,
) -> RatingEstimate:
    """user mean + sd(user) * item mean + N(0,1), rounded and clamped to scale.

    Unseen users or items fall back to the rounded global mean. ``noise``
    replaces the Gaussian draw when given.
    """
    a, b = scale
    u_ratings = list(dataset.profile(user).values()) if user in dataset.user_index else []
    i_ratings = list(dataset.item_profile(item).values()) if item in dataset.item_index else []
    if not u_ratings or not i_ratings:
        mean = float(np.mean([x.rating for x in dataset.interactions])) if len(dataset) else (a + b) / 2
        return RatingEstimate(int(min(max(round_half_up(mean), a), b)), True)
    eta = float(rng.standard_normal()) if noise is None else noise
    omega = float(np.mean(u_ratings)) + float(np.std(u_ratings)) * float(np.mean(i_ratings)) + eta
    return RatingEstimate(int(min(max(round_half_up(omega), a), b)), False)


# -- loop -----------------------------------------------------------------------


def iteration_seed(master: int, iteration: int) -> int:
    return int(np.random.SeedSequence([master, iteration]).generate_state(1)[0])


def mean_popularity(items, popularity: Mapping[str, float]) -> float:
    vals = [popularity[i] for i in items]
    return math.fsum(vals) / len(vals) if vals else 0.0


def _group_distributions(dataset: Dataset, genres: GenreMap, groups: Mapping[str, str]) -> dict[str, dict]:
    bags: dict[str, list[str]] = {}
    for x in dataset.interactions:
        g = groups.get(x.user)
        if g is not None:
            bags.setdefault(g, []).append(x.item)
    return {g: genres.distribution(items) for g, items in bags.items()}


def run_feedback_loop(
    source: Dataset,
    genres: GenreMap,
    user_groups: Mapping[str, str],
    config: SimConfig,
) -> IterationLog:
    a = config.smooth_alpha
    initial_taste = {u: genres.distribution(source.profile(u)) for u in source.users if source.profile(u)}
    population = genres.distribution(x.item for x in source.interactions)
    data = source
    records = []
    for t in range(1, config.iterations + 1):
        seed = iteration_seed(config.seed, t)
        try:
            split = split_holdout(data, config.test_fraction, seed)
            model = train_model(split.train, config.recommender, seed)
            batch = recommend_batch(model, split.train, config.list_size)
        except Exception as exc:  # noqa: BLE001
            raise SimulationError(t, exc) from exc

        n_users = data.n_users
        popularity = {i: c / n_users for i, c in data.item_counts().items()}
        for i in data.items:
            popularity.setdefault(i, 0.0)
        data_pop = mean_popularity((x.item for x in data.interactions), popularity)
        rec_items = [i for rl in batch.lists.values() for i in rl.items]

        taste = {
            u: kld(p0, genres.distribution(data.profile(u)), a) for u, p0 in initial_taste.items()
        }
        group_dists = _group_distributions(data, genres, user_groups)
        inter = None
        if PROTECTED in group_dists and UNPROTECTED in group_dists:
            inter = kld(group_dists[UNPROTECTED], group_dists[PROTECTED], a)
        pop_kld = {g: kld(population, d, a) for g, d in sorted(group_dists.items())}

        added = []
        for user in batch.users:
            rl = batch.lists[user]
            if not len(rl):
                continue
            rng = np.random.default_rng([config.seed, t, data.user_index[user]])
            item = acceptance_select(rl, config.acceptance_alpha, rng)
            if item in data.profile(user):
                continue
            est = estimate_rating(user, item, data, rng, config.rating_scale)
            added.append(Interaction(user, item, float(est.value)))

        nxt = Dataset(data.interactions + tuple(added), data.user_index, data.item_index, data.rating_scale)
        # popularity stays frozen at iteration t so the increment isolates the added rows
        next_pop = mean_popularity((x.item for x in nxt.interactions), popularity)
        records.append(
            IterationRecord(
                iteration=t,
                dataset_size=len(data),
                accepted=len(added),
                mean_data_popularity=data_pop,
                mean_rec_popularity=mean_popularity(rec_items, popularity),
                mean_accepted_popularity=mean_popularity((x.item for x in added), popularity),
                next_data_popularity=next_pop,
                item_coverage=aggregate_diversity(batch, data.items, 1),
                taste_shift=taste,
                inter_group_kld=inter,
                group_population_kld=pop_kld,
            )
        )
        data = nxt
    return IterationLog(config, tuple(records), data)


class AmplificationPoint(NamedTuple):
    iteration: int
    mean_data_popularity: float
    mean_rec_popularity: float
    theta: float
    predicted_increment: float
    realized_increment: float


def amplification_curve(log: IterationLog) -> list[AmplificationPoint]:
    return [
        AmplificationPoint(
            r.iteration,
            r.mean_data_popularity,
            r.mean_rec_popularity,
            r.theta,
            r.predicted_increment,
            r.realized_increment,
        )
        for r in log.records
    ]


def config_dict(config: SimConfig) -> dict:
    return asdict(config)
