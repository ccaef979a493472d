import math
import random
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collabatlas.corpus import DataIntegrityError, PartySpec, WorkCounts, counts_from_works
from collabatlas.distance import (
    UndefinedDistanceError,
    build_matrix,
    jaccard_distance,
    rescale,
    rescaled_matrix,
    triangle_violations,
)

from oracles import FIVE, brute_force_jaccard, random_corpus


def wc(x, y, both, **extra):
    return WorkCounts("all", (2015, 2015), {"X": x, "Y": y, **extra}, {("X", "Y"): both})


def test_identical_sets_distance_zero():
    assert jaccard_distance(wc(40, 40, 40), "X", "Y") == 0.0


def test_disjoint_sets_distance_one():
    assert jaccard_distance(wc(40, 7, 0), "X", "Y") == 1.0


def test_hand_evaluated_example():
    # 1 - 10/140 = 13/14
    d = jaccard_distance(wc(100, 50, 10), "X", "Y")
    assert d == 13 / 14
    works = [{"X"}] * 90 + [{"X", "Y"}] * 10 + [{"Y"}] * 40
    x_ids = {i for i, w in enumerate(works) if "X" in w}
    y_ids = {i for i, w in enumerate(works) if "Y" in w}
    assert d == float(1 - Fraction(len(x_ids & y_ids), len(x_ids | y_ids)))


def test_empty_union_is_undefined():
    with pytest.raises(UndefinedDistanceError):
        jaccard_distance(wc(0, 0, 0), "X", "Y")


def test_two_party_matrix():
    m = build_matrix(wc(100, 50, 10), ["X", "Y"])
    d = 13 / 14
    np.testing.assert_array_equal(m.values, [[0, d], [d, 0]])
    assert m["Y", "X"] == d


def test_undefined_pair_fails_whole_matrix():
    c = WorkCounts("all", (2015, 2015), {"X": 3, "Y": 4, "Z": 0, "W": 0},
                   {("X", "Y"): 1, ("X", "Z"): 0, ("Y", "Z"): 0, ("X", "W"): 0,
                    ("Y", "W"): 0, ("Z", "W"): 0})
    with pytest.raises(UndefinedDistanceError):
        build_matrix(c, ["X", "Y", "Z", "W"])


def test_inconsistent_counts_raise_integrity_error():
    # Counts that pass the pairwise bound but cannot come from real sets.
    c = WorkCounts("all", (2015, 2015), {"A": 10, "B": 10, "C": 10},
                   {("A", "B"): 10, ("B", "C"): 10, ("A", "C"): 0})
    with pytest.raises(DataIntegrityError):
        build_matrix(c, ["A", "B", "C"])


def test_synthetic_five_party_matrix_equals_brute_force():
    rng = random.Random(11)
    works = random_corpus(rng, 3000)
    parties = [PartySpec(n, frozenset(m)) for n, m in FIVE.items()]
    m = build_matrix(counts_from_works(works, parties), list(FIVE))
    oracle = brute_force_jaccard(works, FIVE)
    for (a, b), d in oracle.items():
        i, j = m.parties.index(a), m.parties.index(b)
        assert m.exact[i][j] == d
        assert m.values[i, j] == float(d)
    assert not triangle_violations(m.values.tolist())


@pytest.mark.parametrize("d,expected", [(1.0, 0.0), (math.exp(-1), 1.0)])
def test_rescale_trivial(d, expected):
    assert rescale(d) == pytest.approx(expected, abs=1e-15)


def test_rescale_against_independent_library():
    d = 13 / 14
    assert rescale(d) == pytest.approx(float(mpmath.log(mpmath.mpf(14) / 13)), rel=1e-14)
    assert rescale(d) == pytest.approx(0.0741079721537, abs=1e-12)


def test_rescale_rejects_zero():
    with pytest.raises(ValueError):
        rescale(0.0)


def test_csv_and_json_export():
    import json
    m = build_matrix(wc(100, 50, 10), ["X", "Y"], {"data_as_of": "2023-05-19T00:00:00Z"})
    lines = m.to_csv().splitlines()
    assert lines[0] == ",X,Y"
    assert lines[1].startswith("X,0.0,")
    doc = json.loads(m.to_json())
    assert doc["parties"] == ["X", "Y"]
    assert doc["values"][1] == 13 / 14
    assert doc["metadata"]["data_as_of"] == "2023-05-19T00:00:00Z"


counts_strategy = st.tuples(
    st.integers(0, 10**7), st.integers(0, 10**7), st.integers(0, 10**7)
).filter(lambda t: t[0] + t[1] > 0).map(
    lambda t: (t[0], t[1], min(t[2], t[0], t[1]))
)


@settings(max_examples=200, deadline=None)
@given(counts_strategy)
def test_bounds_and_symmetry(t):
    x, y, both = t
    c = wc(x, y, both)
    d = jaccard_distance(c, "X", "Y")
    assert 0.0 <= d <= 1.0
    assert d == jaccard_distance(c, "Y", "X")


@settings(max_examples=200, deadline=None)
@given(counts_strategy)
def test_more_overlap_means_closer(t):
    x, y, both = t
    if both < min(x, y):
        assert jaccard_distance(wc(x, y, both + 1), "X", "Y") < jaccard_distance(
            wc(x, y, both), "X", "Y")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rescale_reverses_pair_order(seed):
    rng = random.Random(seed)
    works = random_corpus(rng, 400)
    parties = [PartySpec(n, frozenset(m)) for n, m in FIVE.items()]
    m = build_matrix(counts_from_works(works, parties), list(FIVE))
    if (m.values[~np.eye(5, dtype=bool)] == 0).any():
        return
    r = rescaled_matrix(m)
    iu = np.triu_indices(5, 1)
    by_d = np.argsort(m.values[iu], kind="stable")
    by_r = np.argsort(-r[iu], kind="stable")
    assert list(m.values[iu][by_d]) == list(m.values[iu][by_r])
    assert np.argmin(m.values[iu]) == np.argmax(r[iu]) or m.values[iu].min() == m.values[iu][
        np.argmax(r[iu])]
