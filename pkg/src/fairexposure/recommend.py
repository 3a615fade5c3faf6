"""Baseline recommenders producing scored top-t lists: MostPopular, UserKNN, ItemKNN, BiasedMF."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Literal, Mapping, Union

import numpy as np

from .dataset import Dataset, ParseError

log = logging.getLogger(__name__)

Similarity = Literal["cosine", "pearson"]

#: pairs with fewer co-rated entries than this get similarity 0
MIN_CORATED = 2


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"BiasedMF training diverged at epoch {epoch}")
        self.epoch = epoch


# -- recommendation lists ------------------------------------------------------


@dataclass(frozen=True)
class RecList:
    user: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        items = [i for i, _ in self.entries]
        if len(set(items)) != len(items):
            raise ValueError(f"duplicate item in list for {self.user}")

    @property
    def items(self) -> list[str]:
        return [i for i, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def head(self, n: int) -> RecList:
        return RecList(self.user, self.entries[:n])


@dataclass(frozen=True)
class RecBatch:
    lists: Mapping[str, RecList]
    list_size: int

    @property
    def users(self) -> list[str]:
        return list(self.lists)

    def user_ordinal(self, user: str) -> int:
        return self._user_ordinals[user]

    @cached_property
    def _user_ordinals(self) -> dict[str, int]:
        return {u: k for k, u in enumerate(self.lists)}

    def item_order(self) -> dict[str, int]:
        """Item ordinals by first appearance (users in order, then rank)."""
        order: dict[str, int] = {}
        for rl in self.lists.values():
            for item, _ in rl.entries:
                order.setdefault(item, len(order))
        return order

    def truncate(self, n: int) -> RecBatch:
        return RecBatch({u: rl.head(n) for u, rl in self.lists.items()}, min(n, self.list_size))

    def __len__(self) -> int:
        return len(self.lists)


def write_recbatch(batch: RecBatch, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for user, rl in batch.lists.items():
            for rank, (item, score) in enumerate(rl.entries, start=1):
                fh.write(f"{user}\t{item}\t{rank}\t{score:.6f}\n")


def read_recbatch(path, list_size: int | None = None) -> RecBatch:
    path = Path(path)
    rows: dict[str, list[tuple[int, str, float]]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(parts)}")
            try:
                rank, score = int(parts[2]), float(parts[3])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            rows.setdefault(parts[0], []).append((rank, parts[1], score))
    lists = {}
    for user, entries in rows.items():
        entries.sort()
        if [r for r, _, _ in entries] != list(range(1, len(entries) + 1)):
            raise ParseError(path, 0, f"ranks for user {user} are not 1..{len(entries)}")
        lists[user] = RecList(user, tuple((i, s) for _, i, s in entries))
    if list_size is None:
        list_size = max((len(rl) for rl in lists.values()), default=0)
    return RecBatch(lists, list_size)


# -- models --------------------------------------------------------------------


@dataclass(frozen=True)
class MostPopularModel:
    counts: np.ndarray

    def scores(self, user: int) -> np.ndarray:
        return self.counts.astype(float)


@dataclass(frozen=True)
class KNNModel:
    """Neighborhood model with predictions precomputed for every (user, item) cell.

    ``neighbors[u, i]`` is the number of neighbors that contributed to the
    prediction; 0 marks the no-neighbor fallback to the baseline mean.
    """

    kind: Literal["user", "item"]
    k: int
    similarity: Similarity
    sim: np.ndarray
    predictions: np.ndarray
    neighbors: np.ndarray

    def scores(self, user: int) -> np.ndarray:
        return self.predictions[user]

    def predict(self, user: int, item: int) -> tuple[float, bool]:
        """Prediction and whether any neighbor backed it."""
        return float(self.predictions[user, item]), bool(self.neighbors[user, item] > 0)


@dataclass(frozen=True)
class BiasedMFModel:
    mu: float
    user_bias: np.ndarray
    item_bias: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    loss_history: tuple[float, ...] = field(default=(), compare=False)

    def scores(self, user: int) -> np.ndarray:
        return self.mu + self.user_bias[user] + self.item_bias + self.Q @ self.P[user]

    def predict(self, user: int, item: int) -> float:
        return float(self.mu + self.user_bias[user] + self.item_bias[item] + self.P[user] @ self.Q[item])


ModelParams = Union[MostPopularModel, KNNModel, BiasedMFModel]


def train_mostpopular(train: Dataset) -> MostPopularModel:
    if len(train) == 0:
        raise ValueError("empty training data")
    counts = np.zeros(train.n_items, dtype=np.int64)
    for x in train.interactions:
        counts[train.item_index[x.item]] += 1
    return MostPopularModel(counts)


def similarity_matrix(R: np.ndarray, M: np.ndarray, similarity: Similarity = "cosine") -> np.ndarray:
    """Row-row similarity over co-rated columns only.

    ``R`` holds ratings (0 where missing) and ``M`` the observed mask. Pairs
    sharing fewer than ``MIN_CORATED`` columns, or with zero spread on the
    co-rated columns, get 0.
    """
    Mf = M.astype(float)
    R = R * Mf
    R2 = R * R
    n = Mf @ Mf.T
    dot = R @ R.T
    # sums over the co-rated columns of each pair, from each side's perspective
    sq_row = R2 @ Mf.T
    sq_col = Mf @ R2.T
    with np.errstate(invalid="ignore", divide="ignore"):
        if similarity == "cosine":
            num = dot
            den = np.sqrt(sq_row * sq_col)
        elif similarity == "pearson":
            s_row = R @ Mf.T
            s_col = Mf @ R.T
            safe_n = np.where(n > 0, n, 1)
            num = dot - s_row * s_col / safe_n
            var_row = sq_row - s_row**2 / safe_n
            var_col = sq_col - s_col**2 / safe_n
            # cancellation leaves tiny positive variances on constant vectors
            var_row = np.where(var_row > 1e-9 * np.maximum(sq_row, 1.0), var_row, 0.0)
            var_col = np.where(var_col > 1e-9 * np.maximum(sq_col, 1.0), var_col, 0.0)
            den = np.sqrt(var_row * var_col)
        else:
            raise ValueError(f"unknown similarity {similarity!r}")
        sim = np.where((n >= MIN_CORATED) & (den > 0), num / den, 0.0)
    sim = np.clip(sim, -1.0, 1.0)
    np.fill_diagonal(sim, 0.0)
    return sim


def _neighborhood_predictions(R, M, sim, k):
    """Mean-centered weighted average over the k most similar positive neighbors
    of each row that observed the target column."""
    n_rows, n_cols = R.shape
    counts = M.sum(axis=1)
    overall = R[M].mean() if M.any() else 0.0
    means = np.where(counts > 0, (R * M).sum(axis=1) / np.maximum(counts, 1), overall)
    dev = (R - means[:, None]) * M
    pred = np.empty((n_rows, n_cols))
    used = np.zeros((n_rows, n_cols), dtype=np.int64)
    for r in range(n_rows):
        s = sim[r]
        pos = np.flatnonzero(s > 0)
        # strongest first, ties by ordinal
        order = pos[np.lexsort((pos, -s[pos]))]
        Mo = M[order]
        sel = Mo & (np.cumsum(Mo, axis=0) <= k)
        w = s[order][:, None] * sel
        num = (w * dev[order]).sum(axis=0)
        den = w.sum(axis=0)
        pred[r] = means[r] + np.divide(num, den, out=np.zeros(n_cols), where=den > 0)
        used[r] = sel.sum(axis=0)
    return pred, used


def train_userknn(train: Dataset, k: int = 50, similarity: Similarity = "cosine") -> KNNModel:
    if k < 1:
        raise ValueError("k must be >= 1")
    R, M = train.matrix()
    sim = similarity_matrix(R, M, similarity)
    pred, used = _neighborhood_predictions(R, M, sim, k)
    return KNNModel("user", k, similarity, sim, pred, used)


def train_itemknn(train: Dataset, k: int = 50, similarity: Similarity = "cosine") -> KNNModel:
    if k < 1:
        raise ValueError("k must be >= 1")
    R, M = train.matrix()
    sim = similarity_matrix(R.T, M.T, similarity)
    pred, used = _neighborhood_predictions(R.T, M.T, sim, k)
    return KNNModel("item", k, similarity, sim, pred.T.copy(), used.T.copy())


# -- biased matrix factorization ---------------------------------------------------


def _triples(train: Dataset):
    u = np.array([train.user_index[x.user] for x in train.interactions], dtype=np.int64)
    i = np.array([train.item_index[x.item] for x in train.interactions], dtype=np.int64)
    r = np.array([x.rating for x in train.interactions], dtype=float)
    return u, i, r


def mf_loss(params: tuple, triples, reg: float) -> float:
    """Squared error with per-observation L2 penalty, halved:
    sum over ratings of 0.5*e^2 + 0.5*reg*(b_u^2 + b_i^2 + |p_u|^2 + |q_i|^2)."""
    mu, bu, bi, P, Q = params
    u, i, r = triples
    err = r - (mu + bu[u] + bi[i] + np.einsum("nf,nf->n", P[u], Q[i]))
    penalty = bu[u] ** 2 + bi[i] ** 2 + (P[u] ** 2).sum(1) + (Q[i] ** 2).sum(1)
    return float(0.5 * (err**2).sum() + 0.5 * reg * penalty.sum())


def mf_gradient(params: tuple, triples, reg: float):
    """Analytic gradient of :func:`mf_loss` w.r.t. (bu, bi, P, Q); mu is fixed."""
    mu, bu, bi, P, Q = params
    u, i, r = triples
    err = r - (mu + bu[u] + bi[i] + np.einsum("nf,nf->n", P[u], Q[i]))
    g_bu = np.zeros_like(bu)
    g_bi = np.zeros_like(bi)
    g_P = np.zeros_like(P)
    g_Q = np.zeros_like(Q)
    np.add.at(g_bu, u, -err + reg * bu[u])
    np.add.at(g_bi, i, -err + reg * bi[i])
    np.add.at(g_P, u, -err[:, None] * Q[i] + reg * P[u])
    np.add.at(g_Q, i, -err[:, None] * P[u] + reg * Q[i])
    return g_bu, g_bi, g_P, g_Q


def train_biasedmf(
    train: Dataset,
    factors: int = 50,
    epochs: int = 20,
    learn_rate: float = 0.01,
    reg: float = 0.05,
    seed: int = 0,
) -> BiasedMFModel:
    """SGD over observed ratings; each step follows the per-rating gradient of
    :func:`mf_loss`. Visit order per epoch comes from a generator keyed on
    ``(seed, epoch)``."""
    if factors < 1:
        raise ValueError("factors must be >= 1")
    if epochs < 0 or learn_rate <= 0 or reg < 0:
        raise ValueError("invalid hyperparameters")
    triples = _triples(train)
    r_arr = triples[2]
    mu = float(r_arr.mean())
    rng = np.random.default_rng(seed)
    bu = rng.uniform(-0.01, 0.01, train.n_users)
    bi = rng.uniform(-0.01, 0.01, train.n_items)
    P = rng.uniform(-0.01, 0.01, (train.n_users, factors))
    Q = rng.uniform(-0.01, 0.01, (train.n_items, factors))

    history = [mf_loss((mu, bu, bi, P, Q), triples, reg)]
    for epoch in range(epochs):
        _sgd_epoch(
            np.random.default_rng([seed, epoch]).permutation(len(r_arr)),
            triples, mu, bu, bi, P, Q, learn_rate, reg,
        )
        loss = mf_loss((mu, bu, bi, P, Q), triples, reg)
        if not math.isfinite(loss):
            raise DivergenceError(epoch + 1)
        history.append(loss)
    return BiasedMFModel(mu, bu, bi, P, Q, tuple(history))


def _sgd_epoch(order, triples, mu, bu, bi, P, Q, learn_rate, reg):
    u_arr, i_arr, r_arr = triples
    # overflow is detected through the epoch loss instead
    with np.errstate(over="ignore", invalid="ignore"):
        for idx in order:
            u, i = u_arr[idx], i_arr[idx]
            pu, qi = P[u], Q[i]
            e = r_arr[idx] - (mu + bu[u] + bi[i] + pu @ qi)
            bu[u] += learn_rate * (e - reg * bu[u])
            bi[i] += learn_rate * (e - reg * bi[i])
            P[u], Q[i] = (
                pu + learn_rate * (e * qi - reg * pu),
                qi + learn_rate * (e * pu - reg * qi),
            )


# -- ranking ------------------------------------------------------------------------


def recommend_topk(model: ModelParams, train: Dataset, user: str, t: int) -> RecList:
    """Top-t unseen items by descending score, ties by ascending item ordinal."""
    if user not in train.user_index:
        raise KeyError(f"unknown user {user}")
    scores = np.asarray(model.scores(train.user_index[user]), dtype=float)
    seen = np.zeros(train.n_items, dtype=bool)
    for item in train.profile(user):
        seen[train.item_index[item]] = True
    cand = np.flatnonzero(~seen)
    order = cand[np.lexsort((cand, -scores[cand]))][:t]
    items = train.items
    return RecList(user, tuple((items[j], float(scores[j])) for j in order))


def recommend_batch(model: ModelParams, train: Dataset, t: int, workers: int = 1) -> RecBatch:
    """Lists for every user with a non-empty train profile, in user-ordinal order."""
    users = [u for u in train.user_index if train.profile(u)]
    if workers <= 1:
        lists = [recommend_topk(model, train, u, t) for u in users]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lists = list(pool.map(lambda u: recommend_topk(model, train, u, t), users))
    return RecBatch({rl.user: rl for rl in lists}, t)


@dataclass(frozen=True)
class RecommendConfig:
    algorithm: Literal["mostpopular", "userknn", "itemknn", "biasedmf"] = "userknn"
    t: int = 50
    k: int = 50
    similarity: Similarity = "cosine"
    factors: int = 50
    epochs: int = 20
    learn_rate: float = 0.01
    reg: float = 0.05


def train_model(train: Dataset, config: RecommendConfig, seed: int = 0) -> ModelParams:
    algo = config.algorithm
    if algo == "mostpopular":
        return train_mostpopular(train)
    if algo == "userknn":
        return train_userknn(train, config.k, config.similarity)
    if algo == "itemknn":
        return train_itemknn(train, config.k, config.similarity)
    if algo == "biasedmf":
        return train_biasedmf(train, config.factors, config.epochs, config.learn_rate, config.reg, seed)
    raise ValueError(f"unknown algorithm {algo!r}")
