"""Write a synthetic Zipf workspace (ratings, suppliers, genres, groups) and a
starter config that the CLI can run end to end."""

import argparse
import json
from pathlib import Path

from fairexposure.dataset import write_genre_map, write_ratings
from fairexposure.synthetic import head_owner_suppliers, random_genres, random_groups, zipf_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir", type=Path)
    ap.add_argument("--users", type=int, default=200)
    ap.add_argument("--items", type=int, default=100)
    ap.add_argument("--exponent", type=float, default=1.2)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    root = args.outdir.resolve()
    root.mkdir(parents=True, exist_ok=True)
    data = zipf_dataset(args.users, args.items, args.exponent, seed=args.seed)
    write_ratings(data, root / "ratings.tsv")
    suppliers = head_owner_suppliers(data)
    with (root / "suppliers.tsv").open("w") as fh:
        for item, sup in suppliers.item_to_supplier.items():
            fh.write(f"{item}\t{sup}\n")
    write_genre_map(random_genres(data.items, seed=args.seed), root / "genres.tsv")
    with (root / "groups.tsv").open("w") as fh:
        for user, group in random_groups(data.users, seed=args.seed).items():
            fh.write(f"{user}\t{group}\n")

    config = {
        "seed": args.seed,
        "paths": {
            "ratings": str(root / "ratings.tsv"),
            "suppliers": str(root / "suppliers.tsv"),
            "genres": str(root / "genres.tsv"),
            "groups": str(root / "groups.tsv"),
            "out": str(root / "out"),
        },
        "split": {"test_fraction": 0.2},
        "transform": {"kind": "percentile", "axis": "item", "tie_rule": "last"},
        "recommend": {"algorithm": "userknn", "t": 50, "k": 50, "similarity": "cosine"},
        "rerank": {"method": "fairmatch-item", "lam": 0.5, "beta": 1.0, "n": 10},
        "eval": {"alphas": [1, 2]},
        "simulate": {"iterations": 20, "list_size": 10, "acceptance_alpha": -0.1},
        "grid": {"rerank.lam": [0.2, 0.5, 0.8], "rerank.beta": [0.3, 1.0]},
    }
    (root / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"{len(data)} ratings, {data.n_users} users, {data.n_items} items -> {root}")


if __name__ == "__main__":
    main()
