import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fairexposure.dataset import Dataset, Interaction  # noqa: E402
from fairexposure.recommend import RecBatch, RecList  # noqa: E402


def make_dataset(rows, scale=(1, 5), users=None, items=None):
    return Dataset.from_interactions(
        [Interaction(u, i, float(r)) for u, i, r in rows], scale, users=users, items=items
    )


def make_batch(lists, size=None):
    out = {}
    for user, items in lists.items():
        out[user] = RecList(user, tuple((i, float(len(items) - k)) for k, i in enumerate(items)))
    if size is None:
        size = max(len(v) for v in lists.values())
    return RecBatch(out, size)


@pytest.fixture
def tiny():
    return make_dataset(
        [
            ("u1", "i1", 5),
            ("u1", "i2", 3),
            ("u1", "i3", 4),
            ("u2", "i1", 4),
            ("u2", "i3", 2),
            ("u3", "i2", 1),
            ("u3", "i3", 5),
            ("u3", "i4", 2),
        ]
    )


def write_workspace(root: Path, n_users=60, n_items=40, seed=7, **sections):
    """Synthetic ratings, suppliers, genres and groups plus a JSON config; returns the config path."""
    import json

    from fairexposure.dataset import write_genre_map, write_ratings
    from fairexposure.synthetic import head_owner_suppliers, random_genres, random_groups, zipf_dataset

    d = zipf_dataset(n_users, n_items, 1.2, seed=seed, profile_size=(8, 20))
    write_ratings(d, root / "ratings.tsv")
    sup = head_owner_suppliers(d)
    (root / "suppliers.tsv").write_text("".join(f"{i}\t{s}\n" for i, s in sup.item_to_supplier.items()))
    write_genre_map(random_genres(d.items, seed=seed), root / "genres.tsv")
    groups = random_groups(d.users, seed=seed)
    (root / "groups.tsv").write_text("".join(f"{u}\t{g}\n" for u, g in groups.items()))
    config = {
        "seed": seed,
        "paths": {
            "ratings": str(root / "ratings.tsv"),
            "suppliers": str(root / "suppliers.tsv"),
            "genres": str(root / "genres.tsv"),
            "groups": str(root / "groups.tsv"),
            "out": str(root / "out"),
        },
        "transform": {"kind": "percentile", "axis": "item"},
        "recommend": {"algorithm": "userknn", "t": 20, "k": 20},
        "rerank": {"method": "fairmatch-item", "n": 5},
        "simulate": {"iterations": 2},
    }
    config.update(sections)
    path = root / "config.json"
    path.write_text(json.dumps(config))
    return path


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, elapsed: float, limit: float, detail: str) -> str:
    """Store (and echo) the one-line verdict for an acceptance criterion."""
    within = elapsed < limit
    verdict = "PASS" if passed and within else "FAIL"
    line = f"criterion {number:>2}: {verdict}  ({elapsed:.2f}s, limit {limit:g}s)  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return verdict


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
