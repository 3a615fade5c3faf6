import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from fairexposure.synthetic import zipf_dataset
from fairexposure.transform import (
    TransformConfig,
    apply_transform,
    percentile_of,
    percentile_transform,
    zscore_transform,
)
from oracles import percentile_by_counting


def test_percentile_of_item_a_rules():
    assert percentile_of(3, [1, 3, 3, 4], "first") == pytest.approx(40)
    assert percentile_of(3, [1, 3, 3, 4], "last") == pytest.approx(60)
    assert percentile_of(4, [4]) == pytest.approx(50)


def test_percentile_of_absent_value_uses_insertion_position():
    assert percentile_of(2, [1, 3, 3, 4]) == pytest.approx(100 * 2 / 5)
    assert percentile_of(9, [1, 3]) == pytest.approx(100 * 3 / 3)


def test_percentile_of_empty_profile():
    with pytest.raises(ValueError):
        percentile_of(1, [])


def _single_profile(values, axis):
    if axis == "user":
        rows = [("alice", f"i{k}", v) for k, v in enumerate(values)]
    else:
        rows = [(f"u{k}", "X", v) for k, v in enumerate(values)]
    return make_dataset(rows)


def test_user_axis_alice_and_bob():
    alice = [1, 1, 2, 2, 3, 3, 3, 4, 5]
    bob = [3, 3, 4, 4, 4, 5, 5, 5, 5]
    rows = [("alice", f"i{k}", v) for k, v in enumerate(alice)]
    rows += [("bob", f"i{k}", v) for k, v in enumerate(bob)]
    out = percentile_transform(make_dataset(rows), TransformConfig("percentile", "user", "last"))
    got_a = [out.profile("alice")[f"i{k}"] for k in range(9)]
    got_b = [out.profile("bob")[f"i{k}"] for k in range(9)]
    assert got_a == [20, 20, 40, 40, 70, 70, 70, 80, 90]
    assert got_b == [20, 20, 50, 50, 50, 90, 90, 90, 90]
    assert out.rating_scale == (0.0, 100.0)


def test_item_axis_tables():
    a = [1, 3, 3, 4]
    b = [3, 3, 4, 4, 4, 4, 4, 5, 5]
    rows = [(f"u{k}", "A", v) for k, v in enumerate(a)] + [(f"u{k}", "B", v) for k, v in enumerate(b)]
    out = percentile_transform(make_dataset(rows), TransformConfig("percentile", "item", "last"))
    assert [out.item_profile("A")[f"u{k}"] for k in range(4)] == [20, 60, 60, 80]
    assert [out.item_profile("B")[f"u{k}"] for k in range(9)] == [20, 20, 70, 70, 70, 70, 70, 90, 90]
    assert np.mean(list(out.item_profile("B").values())) == pytest.approx(63.333, abs=1e-3)
    assert np.mean(list(out.item_profile("A").values())) == pytest.approx(55)


def test_single_rating_item_maps_to_50():
    out = percentile_transform(make_dataset([("u", "solo", 5)]))
    assert out.interactions[0].rating == 50


def test_transform_keeps_structure():
    d = zipf_dataset(30, 20, seed=1)
    out = apply_transform(d, TransformConfig())
    assert [(x.user, x.item) for x in out.interactions] == [(x.user, x.item) for x in d.interactions]
    assert out.user_index == d.user_index and out.item_index == d.item_index
    assert apply_transform(d, TransformConfig(kind="identity")) is d


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.integers(1, 5), min_size=1, max_size=25),
    st.sampled_from(["first", "last"]),
)
def test_percentile_matches_counting_oracle(values, rule):
    d = _single_profile(values, "item")
    out = percentile_transform(d, TransformConfig("percentile", "item", rule))
    for x, y in zip(d.interactions, out.interactions):
        assert y.rating == pytest.approx(float(percentile_by_counting(x.rating, values, rule)), abs=1e-12)
        assert 0 < y.rating < 100


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=2, max_size=25), st.sampled_from(["first", "last"]))
def test_percentile_monotone_and_tie_consistent(values, rule):
    pct = {v: percentile_of(v, values, rule) for v in set(values)}
    ordered = sorted(pct)
    for lo, hi in zip(ordered, ordered[1:]):
        assert pct[lo] < pct[hi]


def test_zscore_examples():
    out = zscore_transform(_single_profile([2, 4], "item"))
    assert [x.rating for x in out.interactions] == [-1.0, 1.0]
    out = zscore_transform(_single_profile([4, 4, 4], "item"))
    assert [x.rating for x in out.interactions] == [0.0, 0.0, 0.0]
    out = zscore_transform(_single_profile([1, 2, 3], "item"))
    assert [x.rating for x in out.interactions] == pytest.approx([-1.2247449, 0, 1.2247449], abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1, 5, allow_nan=False), min_size=2, max_size=30), st.sampled_from(["item", "user"]))
def test_zscore_standardizes(values, axis):
    d = _single_profile(values, axis)
    z = np.array([x.rating for x in zscore_transform(d, axis).interactions])
    if np.std(values) < 1e-6:
        return
    assert abs(z.mean()) < 1e-9
    assert abs(z.std() - 1) < 1e-9


def _pearson(a, b):
    return float(np.corrcoef(a, b)[0, 1])


def test_item_percentile_flattens_popularity_correlation():
    d = zipf_dataset(300, 80, 1.0, seed=5, popularity_lift=1.5)
    out = percentile_transform(d, TransformConfig("percentile", "item", "last"))
    items = [i for i in d.items if len(d.item_profile(i)) >= 2]
    pop = [len(d.item_profile(i)) for i in items]
    raw_means = [np.mean(list(d.item_profile(i).values())) for i in items]
    pct_means = [np.mean(list(out.item_profile(i).values())) for i in items]
    r_raw = _pearson(pop, raw_means)
    r_pct = _pearson(pop, pct_means)
    assert r_raw > 0
    assert r_pct < r_raw


def test_config_validation():
    with pytest.raises(ValueError):
        TransformConfig(kind="rank")
    with pytest.raises(ValueError):
        TransformConfig(axis="row")
    with pytest.raises(ValueError):
        TransformConfig(tie_rule="middle")
    assert math.isclose(percentile_of(5, [5, 5, 5], "first"), 25)
