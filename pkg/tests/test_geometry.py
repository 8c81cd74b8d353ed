import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cantorbush import DigitSet, build_self_similar
from cantorbush.geometry import (
    NadicCover,
    ScaledCopyFamily,
    build_union_cover,
    calibrated_ratios,
    cantor_cover,
    cover_points,
    grid_family,
    midpoint_cover,
    minkowski_estimate,
    neighborhood_ratio,
)


@pytest.fixture(scope="module")
def tree():
    return build_self_similar(DigitSet(7, (1, 2, 4)), J=5)


def test_cantor_cover_counts(tree):
    for j in range(6):
        cov = cantor_cover(tree, j)
        assert cov.count == 3 ** j
        # the single copy 0 + 1 * E_j gives the same cover through the generic path
        assert build_union_cover(ScaledCopyFamily([0], [1], tree, j)) == cov


def test_separated_copies_double(tree):
    for j in (1, 3):
        fam = ScaledCopyFamily([0, 10], [1, 1], tree, j)
        assert build_union_cover(fam).count == 2 * 3 ** j


def test_point_cover():
    cov = cover_points([0, Fraction(1, 7), 0.5, 0.51], 7, 1)
    assert cov.indices == (0, 1, 3)
    assert cov.shifted(2).indices == (2, 3, 5)
    with pytest.raises(ValueError):
        NadicCover(7, 1, (1, 1))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.fractions(0, 3, max_denominator=50), st.fractions("1/2", 2, max_denominator=50)),
                min_size=1, max_size=5),
       st.integers(0, 3))
def test_union_cover_matches_midpoint_oracle(pairs, j):
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=3)
    fam = ScaledCopyFamily([p for p, _ in pairs], [t for _, t in pairs], tree, j)
    assert build_union_cover(fam) == midpoint_cover(fam)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.fractions(0, 3, max_denominator=40), min_size=1, max_size=4), st.integers(-20, 20),
       st.integers(1, 3))
def test_cover_translation_invariance(points, m, j):
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=3)
    fam = ScaledCopyFamily(points, [1] * len(points), tree, j)
    moved = ScaledCopyFamily([p + Fraction(m, 7 ** j) for p in points], [1] * len(points), tree, j)
    assert build_union_cover(moved) == build_union_cover(fam).shifted(m)


def test_family_validation(tree):
    with pytest.raises(ValueError):
        ScaledCopyFamily([0, 1], [1], tree, 1)
    with pytest.raises(ValueError):
        ScaledCopyFamily([0], [0], tree, 1)
    with pytest.raises(ValueError):
        ScaledCopyFamily([0], [1], tree, 9)


def test_grid_family_is_reproducible(tree):
    a = grid_family(tree, 2, n_points=8, random_state=4)
    b = grid_family(tree, 2, n_points=8, random_state=4)
    assert a.scales == b.scales
    assert all(1 <= t <= 2 for t in a.scales)
    assert a.points[-1] == 1


def test_slopes(tree):
    point = minkowski_estimate([cover_points([Fraction(1, 3)], 7, j) for j in range(1, 5)])
    assert point.degenerate and point.slope == pytest.approx(0.0, abs=1e-12)
    dense = minkowski_estimate([NadicCover(7, j, tuple(range(7 ** j))) for j in range(1, 5)])
    assert dense.slope == pytest.approx(1.0, abs=1e-12)
    cantor = minkowski_estimate([cantor_cover(tree, j) for j in range(1, 6)])
    assert cantor.slope == pytest.approx(math.log(3) / math.log(7), abs=1e-12)
    assert cantor.at_least(point, 0.0) and not point.at_least(cantor, 0.1)
    with pytest.raises(ValueError):
        minkowski_estimate([cantor_cover(tree, 1), cantor_cover(tree, 2)])


def test_neighborhood_ratios(tree):
    X = [build_union_cover(grid_family(tree, j, n_points=16, random_state=0)) for j in (1, 2, 3)]
    Y = [cover_points([Fraction(i, 15) for i in range(16)], 7, j) for j in (1, 2, 3)]
    rows = calibrated_ratios(X, Y, 0.1, 4)
    assert rows[0]["passed"] and rows[0]["threshold"] == rows[0]["ratio"]
    assert all(r["threshold"] == rows[0]["ratio"] for r in rows)
    ratio, ok = neighborhood_ratio(X[0], Y[0], 0.0, 4, calibration=0.0)
    assert ok and ratio == X[0].measure / Y[0].measure
    with pytest.raises(ValueError):
        neighborhood_ratio(X[0], Y[1], 0.1, 4)
    with pytest.raises(ValueError):
        neighborhood_ratio(X[0], NadicCover(7, 1, ()), 0.1, 4)
