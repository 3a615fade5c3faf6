"""FairMatch re-ranking: iterative max-flow over the bipartite recommendation graph.

Long lists of size t become a flow network ``source -> items -> users -> sink``.
Middle edges are weighted by a blend of the item's rank in the user's list and
the visibility of the item (or of its supplier). Items that cannot route the
flow they receive from the source get relabelled above the source and are
harvested as candidates; harvested subgraphs are removed and the process
repeats until nothing more is found. Candidates then replace the most visible
items of each user's top-n list.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Literal, NamedTuple, Sequence

from .dataset import SupplierMap
from .recommend import RecBatch, RecList

Variant = Literal["item", "supplier"]


@dataclass(frozen=True)
class FairMatchConfig:
    variant: Variant = "item"
    lam: float = 0.5
    beta: float = 1.0
    long_list_size: int = 50
    final_size: int = 10

    def __post_init__(self):
        if self.variant not in ("item", "supplier"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if not 0 < self.final_size < self.long_list_size:
            raise ValueError("need 0 < n < t")


@dataclass
class FlowNetwork:
    """Bipartite item/user network with terminal nodes.

    Node numbering: 0 is the source, items follow, then users, and the sink is
    last. ``edges`` holds ``(item_idx, user_idx, rank)`` for every recommendation.
    Capacities are ``None`` until weights are computed; ``labels``/``excess``
    are filled in by :func:`push_relabel_max_flow`.
    """

    items: list[str]
    users: list[str]
    edges: list[tuple[int, int, int]]
    middle_capacity: list[int] | None = None
    source_capacity: list[int] | None = None
    sink_capacity: list[int] | None = None
    labels: list[int] | None = field(default=None, repr=False)
    excess: list[int] | None = field(default=None, repr=False)

    SOURCE = 0

    @property
    def n_nodes(self) -> int:
        return len(self.items) + len(self.users) + 2

    @property
    def sink(self) -> int:
        return self.n_nodes - 1

    def item_node(self, k: int) -> int:
        return 1 + k

    def user_node(self, k: int) -> int:
        return 1 + len(self.items) + k

    def degrees(self) -> list[int]:
        deg = [0] * len(self.items)
        for i, _, _ in self.edges:
            deg[i] += 1
        return deg

    def arcs(self) -> list[tuple[int, int, int]]:
        if self.middle_capacity is None or self.source_capacity is None or self.sink_capacity is None:
            raise ValueError("capacities are not set")
        arcs = [(self.SOURCE, self.item_node(k), c) for k, c in enumerate(self.source_capacity)]
        arcs += [
            (self.item_node(i), self.user_node(u), c)
            for (i, u, _), c in zip(self.edges, self.middle_capacity)
        ]
        arcs += [(self.user_node(k), self.sink, c) for k, c in enumerate(self.sink_capacity)]
        return arcs

    def initial_labels(self) -> list[int]:
        """Preflow labels: source |I|+|U|+2, items 2, users 1, sink 0."""
        return [self.n_nodes] + [2] * len(self.items) + [1] * len(self.users) + [0]


@dataclass(frozen=True)
class CandidateSet:
    pairs: frozenset[tuple[str, str]]
    visibility: dict[str, int]
    iterations: int
    rounds: tuple[frozenset[str], ...] = ()

    def for_user(self, user: str) -> list[str]:
        return [i for i, u in self.pairs if u == user]


class MaxFlowResult(NamedTuple):
    value: int
    labels: list[int]
    excess: list[int]
    flows: list[int]


# -- graph preparation and weights --------------------------------------------------


def build_graph(batch: RecBatch) -> FlowNetwork:
    if len(batch) == 0 or all(len(rl) == 0 for rl in batch.lists.values()):
        raise ValueError("cannot build a graph from an empty batch")
    item_pos = batch.item_order()
    users = [u for u, rl in batch.lists.items() if len(rl)]
    edges = []
    for uk, user in enumerate(users):
        for rank, item in enumerate(batch.lists[user].items, start=1):
            edges.append((item_pos[item], uk, rank))
    return FlowNetwork(list(item_pos), users, edges)


def _ceil(x: float) -> int:
    # guard against float noise such as 4.000000000000001
    return math.ceil(x - 1e-9)


def capacity_split(total: int, n_items: int, n_users: int) -> tuple[int, int, int, int]:
    """Equal shares of the total middle capacity and the derived terminal capacities.

    Returns ``(per_item, per_user, source_arc, sink_arc)``.
    """
    per_item = -(-total // n_items)
    per_user = -(-total // n_users)
    g = math.gcd(per_item, per_user)
    source_arc = -(-min(per_item, per_user) // g)
    sink_arc = -(-per_item // g)
    return per_item, per_user, source_arc, sink_arc


def visibility_weights(graph: FlowNetwork, variant: Variant, suppliers: SupplierMap | None) -> list[float]:
    """Raw visibility of each middle edge's item: its degree, or the summed
    degree of every item its supplier owns."""
    deg = graph.degrees()
    if variant == "item":
        return [float(deg[i]) for i, _, _ in graph.edges]
    if suppliers is None:
        raise ValueError("the supplier variant needs a supplier map")
    per_supplier: dict[str, int] = {}
    for k, item in enumerate(graph.items):
        sup = suppliers.supplier_of(item)
        per_supplier[sup] = per_supplier.get(sup, 0) + deg[k]
    return [float(per_supplier[suppliers.supplier_of(graph.items[i])]) for i, _, _ in graph.edges]


def compute_weights(
    graph: FlowNetwork, config: FairMatchConfig, suppliers: SupplierMap | None = None
) -> FlowNetwork:
    t = config.long_list_size
    vis = visibility_weights(graph, config.variant, suppliers)
    lo, hi = min(vis), max(vis)
    if hi > lo:
        norm = [1 + (t - 1) * (v - lo) / (hi - lo) for v in vis]
    else:
        norm = [1.0] * len(vis)
    lam = config.lam
    middle = [_ceil(lam * rank + (1 - lam) * v) for (_, _, rank), v in zip(graph.edges, norm)]
    _, _, s_cap, t_cap = capacity_split(sum(middle), len(graph.items), len(graph.users))
    return replace(
        graph,
        middle_capacity=middle,
        source_capacity=[s_cap] * len(graph.items),
        sink_capacity=[t_cap] * len(graph.users),
        labels=None,
        excess=None,
    )


# -- push-relabel ---------------------------------------------------------------------


def push_relabel(
    n: int,
    arcs: Sequence[tuple[int, int, int]],
    source: int,
    sink: int,
    labels: Sequence[int] | None = None,
) -> MaxFlowResult:
    """FIFO push-relabel maximum flow on integer capacities.

    ``labels`` sets the initial node labels (they must form a valid labelling
    for the initial residual graph); by default the source gets ``n`` and all
    other nodes 0. ``flows`` lists the final flow on each input arc.
    """
    head: list[int] = []
    res: list[int] = []
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v, c in arcs:
        if c < 0:
            raise ValueError("negative capacity")
        adj[u].append(len(head))
        head.append(v)
        res.append(int(c))
        adj[v].append(len(head))
        head.append(u)
        res.append(0)

    h = list(labels) if labels is not None else [0] * n
    if labels is None:
        h[source] = n
    excess = [0] * n
    queued = [False] * n
    active: deque[int] = deque()

    def push(e: int, u: int, amount: int):
        v = head[e]
        res[e] -= amount
        res[e ^ 1] += amount
        excess[u] -= amount
        excess[v] += amount
        if v != source and v != sink and not queued[v]:
            queued[v] = True
            active.append(v)

    # preflow: saturate every arc leaving the source
    for e in adj[source]:
        if e % 2 == 0 and res[e] > 0:
            push(e, source, res[e])

    current = [0] * n
    while active:
        u = active.popleft()
        queued[u] = False
        edges_u = adj[u]
        while excess[u] > 0:
            if current[u] == len(edges_u):
                h[u] = 1 + min(h[head[e]] for e in edges_u if res[e] > 0)
                current[u] = 0
                continue
            e = edges_u[current[u]]
            if res[e] > 0 and h[u] == h[head[e]] + 1:
                push(e, u, min(excess[u], res[e]))
            else:
                current[u] += 1

    flows = [arcs[k][2] - res[2 * k] for k in range(len(arcs))]
    return MaxFlowResult(excess[sink], h, excess, flows)


def push_relabel_max_flow(graph: FlowNetwork) -> MaxFlowResult:
    """Solve the network in place, recording final labels and excess on it."""
    result = push_relabel(graph.n_nodes, graph.arcs(), graph.SOURCE, graph.sink, graph.initial_labels())
    graph.labels = result.labels
    graph.excess = result.excess
    return result


def select_candidates(graph: FlowNetwork) -> list[int]:
    """Indices of items whose final label reached |I|+|U|+2, i.e. items that had
    to send flow back to the source."""
    if graph.labels is None:
        raise ValueError("network has not been solved")
    threshold = len(graph.items) + len(graph.users) + 2
    return [k for k in range(len(graph.items)) if graph.labels[graph.item_node(k)] >= threshold]


def _remove_items(graph: FlowNetwork, selected: set[int]) -> FlowNetwork:
    kept_items = [k for k in range(len(graph.items)) if k not in selected]
    kept_edges = [e for e in graph.edges if e[0] not in selected]
    live_users = sorted({u for _, u, _ in kept_edges})
    item_map = {old: new for new, old in enumerate(kept_items)}
    user_map = {old: new for new, old in enumerate(live_users)}
    return FlowNetwork(
        [graph.items[k] for k in kept_items],
        [graph.users[k] for k in live_users],
        [(item_map[i], user_map[u], r) for i, u, r in kept_edges],
    )


def fairmatch_iterate(
    batch: RecBatch, config: FairMatchConfig, suppliers: SupplierMap | None = None
) -> CandidateSet:
    graph = build_graph(batch)
    visibility = dict(zip(graph.items, graph.degrees()))
    pairs: set[tuple[str, str]] = set()
    rounds = []
    iterations = 0
    while graph.edges:
        iterations += 1
        weighted = compute_weights(graph, config, suppliers)
        push_relabel_max_flow(weighted)
        selected = set(select_candidates(weighted))
        if not selected:
            break
        rounds.append(frozenset(graph.items[k] for k in selected))
        for i, u, _ in graph.edges:
            if i in selected:
                pairs.add((graph.items[i], graph.users[u]))
        graph = _remove_items(graph, selected)
    return CandidateSet(frozenset(pairs), visibility, iterations, tuple(rounds))


# -- list construction ------------------------------------------------------------------


def replacement_count(beta: float, n: int, n_candidates: int) -> int:
    return min(math.floor(beta * n + 1e-9), n_candidates, n)


def reconstruct_lists(batch: RecBatch, candidates: CandidateSet, config: FairMatchConfig) -> RecBatch:
    """Swap the most visible items of each top-n prefix for the least visible
    harvested candidates of that user.

    Surviving prefix items keep their relevance order; appended candidates
    follow in ascending visibility. Candidates already inside the prefix are
    not counted as replacements.
    """
    n = config.final_size
    order = batch.item_order()
    vis = candidates.visibility
    by_vis = lambda item: (vis.get(item, 0), order[item])
    per_user: dict[str, list[str]] = {}
    for item, user in candidates.pairs:
        per_user.setdefault(user, []).append(item)

    out = {}
    for user, rl in batch.lists.items():
        prefix = list(rl.entries[:n])
        in_prefix = {i for i, _ in prefix}
        pool = sorted((i for i in per_user.get(user, ()) if i not in in_prefix), key=by_vis)
        m = replacement_count(config.beta, n, len(pool))
        if m == 0:
            out[user] = RecList(user, tuple(prefix))
            continue
        # a non-empty pool means the long list extends past n, so the prefix is full
        dropped = set(sorted(in_prefix, key=by_vis)[len(prefix) - m :])
        scores = dict(rl.entries)
        kept = [(i, s) for i, s in prefix if i not in dropped]
        added = [(i, scores[i]) for i in pool[:m]]
        out[user] = RecList(user, tuple(kept + added))
    return RecBatch(out, n)


def fairmatch(batch: RecBatch, config: FairMatchConfig, suppliers: SupplierMap | None = None) -> RecBatch:
    candidates = fairmatch_iterate(batch, config, suppliers)
    return reconstruct_lists(batch, candidates, config)
