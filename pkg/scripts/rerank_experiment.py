"""Compare FairMatch with the plain top-n, Reverse and Random re-rankers on
Zipf re-ranking fixtures, across seeds and catalog sizes.

Prints one TSV row per (catalog size, users, method) averaged over seeds.
"""

import argparse

import numpy as np

from fairexposure.baselines import rerank_random, rerank_reverse, rerank_topn
from fairexposure.fairmatch import FairMatchConfig, fairmatch
from fairexposure.metrics import aggregate_diversity, gini, item_visibility, precision_recall, supplier_visibility
from fairexposure.synthetic import zipf_rerank_fixture

COLUMNS = ("precision", "1-IA", "item_gini", "supplier_gini")


def measure(batch, fx):
    catalog = fx.train.items
    return (
        precision_recall(batch, fx.test)[0],
        aggregate_diversity(batch, catalog, 1),
        gini(item_visibility(batch, catalog)),
        gini(supplier_visibility(batch, fx.suppliers)),
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--catalogs", type=int, nargs="+", default=[60, 100, 200])
    ap.add_argument("--users", type=int, nargs="+", default=[10, 100])
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("-t", type=int, default=30)
    ap.add_argument("-n", type=int, default=10)
    args = ap.parse_args()

    item_cfg = FairMatchConfig("item", args.lam, args.beta, args.t, args.n)
    sup_cfg = FairMatchConfig("supplier", args.lam, args.beta, args.t, args.n)
    print("\t".join(("items", "users", "method", *COLUMNS)))
    for n_items in args.catalogs:
        for n_users in args.users:
            rows: dict[str, list] = {}
            for seed in range(args.seeds):
                fx = zipf_rerank_fixture(n_users=n_users, n_items=n_items, t=args.t, seed=seed)
                methods = {
                    "topn": rerank_topn(fx.batch, args.n),
                    "reverse": rerank_reverse(fx.batch, args.n),
                    "random": rerank_random(fx.batch, args.n, seed),
                    "fairmatch-item": fairmatch(fx.batch, item_cfg),
                    "fairmatch-sup": fairmatch(fx.batch, sup_cfg, fx.suppliers),
                }
                for name, batch in methods.items():
                    rows.setdefault(name, []).append(measure(batch, fx))
            for name, values in rows.items():
                mean = np.mean(values, axis=0)
                print("\t".join([str(n_items), str(n_users), name, *(f"{v:.4f}" for v in mean)]))


if __name__ == "__main__":
    main()
