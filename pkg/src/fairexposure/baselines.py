"""Trivial re-rankers used as reference points: plain top-n, Reverse and Random."""

from __future__ import annotations

from .dataset import user_rng
from .recommend import RecBatch, RecList


def rerank_topn(batch: RecBatch, n: int) -> RecBatch:
    return batch.truncate(n)


def rerank_reverse(batch: RecBatch, n: int) -> RecBatch:
    """Take the n least relevant items, least relevant first."""
    out = {}
    for user, rl in batch.lists.items():
        tail = rl.entries[max(len(rl) - n, 0) :]
        out[user] = RecList(user, tuple(reversed(tail)))
    return RecBatch(out, n)


def rerank_random(batch: RecBatch, n: int, seed: int) -> RecBatch:
    """Uniform sample of n items per list, without replacement."""
    out = {}
    for k, (user, rl) in enumerate(batch.lists.items()):
        rng = user_rng(seed, k)
        picked = rng.choice(len(rl), size=min(n, len(rl)), replace=False)
        out[user] = RecList(user, tuple(rl.entries[j] for j in picked))
    return RecBatch(out, n)
