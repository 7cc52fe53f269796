from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiaas_monitor.sketches import DistinctSketch, HeavyHitterSketch


def test_repeated_token_is_exact():
    s = DistinctSketch()
    for _ in range(1000):
        s.add("same-face")
    assert s.estimate() == 1.0
    assert s.relative_error_bound() == 0.0


@given(st.sets(st.text(min_size=1, max_size=8), max_size=256))
def test_small_sets_exact(tokens):
    s = DistinctSketch()
    s.update(tokens)
    assert s.is_exact
    assert s.estimate() == len(tokens)


def test_exact_mode_ends_past_limit():
    s = DistinctSketch()
    s.update(f"f{i}" for i in range(257))
    assert s.mode == "probabilistic"
    assert abs(s.estimate() - 257) / 257 < 0.05


def test_ten_thousand_within_five_percent():
    s = DistinctSketch(p=12)
    s.update(f"id-{i}" for i in range(10_000))
    assert abs(s.estimate() - 10_000) / 10_000 <= 0.05
    assert s.relative_error_bound() == pytest.approx(1.04 / 64)


def test_merge_of_disjoint_small_sets():
    a, b = DistinctSketch(), DistinctSketch()
    a.update(f"a{i}" for i in range(100))
    b.update(f"b{i}" for i in range(100))
    m = a.merge(b)
    assert abs(m.estimate() - 200) / 200 <= 0.05
    assert m.estimate() == 200.0  # still below the exact limit


def test_merge_matches_union_sketch():
    a, b, u = DistinctSketch(), DistinctSketch(), DistinctSketch()
    for i in range(3000):
        (a if i % 2 else b).add(f"x{i}")
        u.add(f"x{i}")
    for i in range(500):
        a.add(f"x{i}")
    assert a.merge(b).registers == u.registers
    assert a.merge(b).estimate() == u.estimate()


def test_merge_requires_same_precision():
    with pytest.raises(ValueError):
        DistinctSketch(10).merge(DistinctSketch(12))


@settings(max_examples=50)
@given(st.lists(st.integers(0, 5000), max_size=2000))
def test_distinct_serialization_round_trip(items):
    s = DistinctSketch()
    s.update(str(i) for i in items)
    assert DistinctSketch.from_dict(s.to_dict()) == s


def test_heavy_hitter_single_target():
    hh = HeavyHitterSketch(k=64)
    rng = np.random.default_rng(3)
    stream = ["victim"] * 500 + [f"other{i}" for i in rng.integers(0, 10_000, size=500)]
    rng.shuffle(stream)
    for item in stream:
        hh.add(item)
    top = hh.frequent(0.1)
    assert top[0][0] == "victim"
    assert 500 <= top[0][1] <= 500 + 1000 / 64


def test_empty_heavy_hitter():
    hh = HeavyHitterSketch()
    assert hh.frequent(0.1) == []
    assert hh.estimate("x") == (0, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=1, max_size=3000), st.integers(1, 40))
def test_space_saving_guarantees(items, k):
    hh = HeavyHitterSketch(k)
    for i in items:
        hh.add(i)
    truth = Counter(items)
    n = len(items)
    assert hh.total == n
    for item, count, err in hh.items():
        assert truth[item] <= count <= truth[item] + n / k
        assert count - err <= truth[item]
    for phi in (0.5, 0.1, 0.05):
        reported = {i for i, _, _ in hh.frequent(phi)}
        # recall is guaranteed for anything heavier than n / k
        assert {i for i, c in truth.items() if c >= phi * n and c > n / k} <= reported


def test_heavy_hitter_round_trip_continues_identically():
    a = HeavyHitterSketch(8)
    for i in range(200):
        a.add(f"t{i % 13}")
    b = HeavyHitterSketch.from_dict(a.to_dict())
    assert a == b
    for i in range(100):
        a.add(f"t{i % 7}")
        b.add(f"t{i % 7}")
    assert a == b and a.items() == b.items()
