import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from fairexposure.dataset import (
    Dataset,
    DatasetError,
    DuplicateInteractionError,
    GenreMap,
    Interaction,
    ParseError,
    RatingRangeError,
    SupplierConflictError,
    SupplierCoverageError,
    holdout_size,
    load_genre_map,
    load_ratings,
    load_supplier_map,
    popularity_profile,
    split_holdout,
    write_genre_map,
    write_ratings,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# -- loading -----------------------------------------------------------------------


def test_load_three_lines(tmp_path):
    p = write(tmp_path, "r.tsv", "u1\ti1\t5\nu1\ti2\t3\nu2\ti1\t4\n")
    d = load_ratings(p, (1, 5))
    assert (d.n_users, d.n_items, len(d)) == (2, 2, 3)
    assert d.user_index == {"u1": 0, "u2": 1}
    assert d.profile("u1") == {"i1": 5.0, "i2": 3.0}


def test_load_duplicate_pair(tmp_path):
    p = write(tmp_path, "r.tsv", "u1\ti1\t5\nu1\ti1\t5\n")
    with pytest.raises(DuplicateInteractionError):
        load_ratings(p, (1, 5))


def test_load_out_of_range(tmp_path):
    p = write(tmp_path, "r.tsv", "u1\ti1\t6\n")
    with pytest.raises(RatingRangeError):
        load_ratings(p, (1, 5))


@pytest.mark.parametrize("line", ["u1\ti1\n", "u1\ti1\tx\n", "u1\t\t3\n", "u1\ti1\t3\tnot-a-ts\n"])
def test_load_malformed_reports_line(tmp_path, line):
    p = write(tmp_path, "r.tsv", "u0\ti0\t1\n" + line)
    with pytest.raises(ParseError) as err:
        load_ratings(p, (1, 5))
    assert err.value.lineno == 2


def test_timestamp_is_kept(tmp_path):
    p = write(tmp_path, "r.tsv", "u1\ti1\t5\t100\n")
    assert load_ratings(p, (1, 5)).interactions[0].timestamp == 100


def test_dataset_invariants():
    with pytest.raises(DatasetError):
        Dataset((Interaction("u", "i", 3.0),), {"u": 0}, {}, (1, 5))
    with pytest.raises(DatasetError):
        Dataset((), {"u": 1}, {}, (1, 5))
    with pytest.raises(DatasetError):
        make_dataset([("", "i", 3)])


ratings_rows = st.lists(
    st.tuples(
        st.sampled_from([f"u{k}" for k in range(6)]),
        st.sampled_from([f"i{k}" for k in range(8)]),
        st.sampled_from([1.0, 2.0, 2.5, 3.0, 4.0, 4.75, 5.0]),
    ),
    min_size=1,
    max_size=40,
    unique_by=lambda r: (r[0], r[1]),
)


@settings(max_examples=50, deadline=None)
@given(ratings_rows)
def test_write_load_round_trip(tmp_path_factory, rows):
    d = make_dataset(rows)
    p = tmp_path_factory.mktemp("rt") / "r.tsv"
    write_ratings(d, p)
    assert load_ratings(p, (1, 5)) == d


# -- suppliers and genres -------------------------------------------------------------


def test_supplier_map(tmp_path):
    d = make_dataset([("u", "i1", 3), ("u", "i2", 4)])
    sm = load_supplier_map(write(tmp_path, "s.tsv", "i1\ts1\ni2\ts1\n"), d)
    assert sm.supplier_to_items == {"s1": frozenset({"i1", "i2"})}
    assert sm.supplier_of("i2") == "s1"


def test_supplier_coverage_error(tmp_path):
    d = make_dataset([("u", "i1", 3), ("u", "i2", 4)])
    with pytest.raises(SupplierCoverageError) as err:
        load_supplier_map(write(tmp_path, "s.tsv", "i1\ts1\n"), d)
    assert err.value.missing == ["i2"]
    assert "i2" in str(err.value)


def test_supplier_conflict_error(tmp_path):
    d = make_dataset([("u", "i1", 3)])
    with pytest.raises(SupplierConflictError):
        load_supplier_map(write(tmp_path, "s.tsv", "i1\ts1\ni1\ts2\n"), d)


def test_genre_round_trip_and_weights(tmp_path):
    gm = GenreMap({"a": ("x", "y"), "b": ("y",)})
    p = tmp_path / "g.tsv"
    write_genre_map(gm, p)
    back = load_genre_map(p)
    assert back.item_to_genres == gm.item_to_genres
    assert back.weights("a") == {"x": 0.5, "y": 0.5}
    assert back.distribution(["a", "b"]) == {"x": 0.25, "y": 0.75}


# -- splitting -------------------------------------------------------------------------


def test_holdout_size_rule():
    assert holdout_size(10, 0.2) == 2
    assert holdout_size(5, 0.1) == 1  # floor gives 0, raised to 1 for size >= 5
    assert holdout_size(4, 0.2) == 0
    assert holdout_size(2, 0.9) == 1  # at least one train rating stays
    assert holdout_size(1, 0.5) == 0


def _user_rows(n_ratings, user="u"):
    return [(user, f"i{k}", 1 + k % 5) for k in range(n_ratings)]


def test_split_ten_ratings():
    d = make_dataset(_user_rows(10))
    pair = split_holdout(d, 0.2, seed=3)
    assert len(pair.test) == 2 and len(pair.train) == 8


def test_split_deterministic():
    d = make_dataset(_user_rows(12, "a") + _user_rows(9, "b"))
    assert split_holdout(d, 0.2, 7) == split_holdout(d, 0.2, 7)


def test_split_single_rating_user_stays_in_train(caplog):
    d = make_dataset(_user_rows(1, "solo") + _user_rows(10, "b"))
    with caplog.at_level(logging.WARNING):
        pair = split_holdout(d, 0.2, 1)
    assert pair.train.profile("solo")
    assert not pair.test.profile("solo")
    assert "solo" in caplog.text


@settings(max_examples=60, deadline=None)
@given(ratings_rows, st.floats(0.05, 0.95), st.integers(0, 2**31))
def test_split_is_a_partition(rows, frac, seed):
    d = make_dataset(rows)
    pair = split_holdout(d, frac, seed)
    train = {(x.user, x.item) for x in pair.train.interactions}
    test = {(x.user, x.item) for x in pair.test.interactions}
    assert not train & test
    assert train | test == {(x.user, x.item) for x in d.interactions}
    assert len(pair.train) + len(pair.test) == len(d)
    for user in {u for u, _ in test}:
        assert pair.train.profile(user)
    for user in d.users:
        assert len(pair.test.profile(user)) == holdout_size(len(d.profile(user)), frac) or len(d.profile(user)) < 2


# -- popularity profile --------------------------------------------------------------


def _counts_dataset(counts):
    rows = []
    for item, c in counts.items():
        rows += [(f"u{k}", item, 3) for k in range(c)]
    return make_dataset(rows, items=list(counts))


def test_profile_head_only_covers_most():
    prof = popularity_profile(_counts_dataset({"a": 8, "b": 1, "c": 1}))
    assert prof.head == {"a"} and prof.mid == set() and prof.tail == {"b", "c"}
    assert prof.longtail == {"b", "c"}


def test_profile_uniform_counts():
    prof = popularity_profile(_counts_dataset({k: 2 for k in "vwxyz"}))
    assert prof.head == {"v"}
    assert prof.mid == {"w", "x", "y"}
    assert prof.tail == {"z"}


def test_profile_single_item():
    prof = popularity_profile(_counts_dataset({"only": 3}))
    assert prof.head == {"only"} and not prof.mid and not prof.tail


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=15))
def test_profile_head_is_minimal_prefix(counts):
    names = [f"i{k:02d}" for k in range(len(counts))]
    d = _counts_dataset(dict(zip(names, counts)))
    prof = popularity_profile(d)
    total = sum(counts)
    head_count = sum(prof.item_counts[i] for i in prof.head)
    assert head_count / total >= 0.2
    order = sorted(names, key=lambda i: (-prof.item_counts[i], d.item_index[i]))
    last = order[len(prof.head) - 1]
    assert (head_count - prof.item_counts[last]) / total < 0.2
    assert prof.head | prof.mid | prof.tail == set(names)
    assert not (prof.head & prof.mid) and not (prof.mid & prof.tail) and not (prof.head & prof.tail)
