from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from cantorbush import CantorParams, DigitSet, build_self_similar
from cantorbush.cantor import (
    ancestor_ratios,
    build_with_selector,
    frostman_scan,
    measure_of_interval,
    tree_from_json,
    tree_to_json,
)
from cantorbush.lambdap import singer_difference_set


def test_level_two_unrolling():
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=2)
    assert len(tree.nodes(2)) == 9
    assert [n.position(7) for n in tree.nodes(1)] == [Fraction(8, 7), Fraction(9, 7), Fraction(11, 7)]
    # M = 7 s1 + s2 over all digit pairs, enumerated independently
    assert set(tree.numerators(2)) == {7 * a + b for a, b in product((1, 2, 4), repeat=2)}
    assert tree.numerators(2) == [8, 9, 11, 15, 16, 18, 29, 30, 32]


def test_single_digit_tree_collapses_to_one_point():
    tree = build_self_similar(DigitSet(7, (0,)), J=3)
    for j in range(4):
        assert [n.position(7) for n in tree.nodes(j)] == [1]


@pytest.mark.parametrize("digits", [(1, 2, 6), (1, 2, 9), (1, 2)])
def test_invalid_digit_sets_rejected(digits):
    with pytest.raises(ValueError):
        build_self_similar(digits, CantorParams(7, 3), J=1)


def test_params_invariants():
    p = CantorParams(13, 4)
    assert p.alpha == pytest.approx(0.5404763088546)
    with pytest.raises(ValueError):
        CantorParams(7, 7)


def test_alternating_selector():
    params = CantorParams(7, 3)
    tree = build_with_selector(lambda node: (1, 2, 4) if node.level % 2 == 0 else (0, 3, 5), params, 2)
    assert len(tree.nodes(2)) == 9
    assert {n.digits[1] for n in tree.nodes(2)} == {0, 3, 5}


def test_constant_selector_matches_self_similar():
    params = CantorParams(7, 3)
    a = build_with_selector(lambda node: (1, 2, 4), params, 3)
    b = build_self_similar(DigitSet(7, (1, 2, 4)), J=3)
    assert all(a.numerators(j) == b.numerators(j) for j in range(4))


def test_address_dependent_selector():
    params = CantorParams(7, 2)
    tree = build_with_selector(lambda node: (0, 3) if node.numerator % 2 == 0 else (1, 5), params, 3)
    for j in range(4):
        assert len(tree.nodes(j)) == 2 ** j
    subtrees = [sorted(c.digits[-1] for c in tree.children(n)) for n in tree.nodes(1)]
    assert subtrees[0] != subtrees[1]


def test_selector_with_wrong_cardinality():
    with pytest.raises(ValueError):
        build_with_selector(lambda node: (1, 2), CantorParams(7, 3), 1)


def test_interval_measures():
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=2)
    assert measure_of_interval(tree, 2, (1, 2)) == 1
    for node in tree.nodes(2):
        assert measure_of_interval(tree, 2, node.interval(7)) == Fraction(1, 9)
    assert measure_of_interval(tree, 1, (1, Fraction(10, 7))) == Fraction(2, 3)
    # half of the cell [8/7, 9/7] gets half its mass
    assert measure_of_interval(tree, 1, (Fraction(8, 7), Fraction(17, 14))) == Fraction(1, 6)
    with pytest.raises(ValueError):
        measure_of_interval(tree, 1, (Fraction(3, 2), 1))


def test_frostman_ancestor_balls_exact():
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=3)
    assert all(r == 1 for r in ancestor_ratios(tree, 3))
    rep = frostman_scan(tree, 3, radius_grid=[1])
    assert rep.ratio_max <= 1
    assert rep.implied_constant >= 1 and rep.ratio_min <= rep.ratio_max


def test_frostman_stability_singer_13():
    tree = build_self_similar(singer_difference_set(3), J=6)
    c3 = frostman_scan(tree, 3).implied_constant
    c6 = frostman_scan(tree, 6, max_centers=200).implied_constant
    assert max(c3 / c6, c6 / c3) <= 2


def test_frostman_rejects_bad_radii():
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=2)
    with pytest.raises(ValueError):
        frostman_scan(tree, 2, radius_grid=[])
    with pytest.raises(ValueError):
        frostman_scan(tree, 2, radius_grid=[Fraction(1, 1000)])


def test_json_round_trip():
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=3)
    back = tree_from_json(tree_to_json(tree))
    assert back.N == 7 and back.N0 == 3
    assert all(back.numerators(j) == tree.numerators(j) for j in range(4))


@st.composite
def digit_trees(draw):
    N = draw(st.integers(7, 12))
    digits = draw(st.lists(st.integers(0, N - 2), min_size=1, max_size=4, unique=True))
    J = draw(st.integers(1, 3))
    return build_self_similar(DigitSet(N, digits), J=J)


@settings(max_examples=40, deadline=None)
@given(digit_trees())
def test_tree_invariants(tree):
    N, N0, J = tree.N, tree.N0, tree.depth
    for j in range(J + 1):
        assert len(tree.nodes(j)) == N0 ** j
        for node in tree.nodes(j):
            assert node.numerator == sum(d * N ** (j - i - 1) for i, d in enumerate(node.digits))
            assert 1 <= node.position(N) <= 2
    # nesting
    for node in tree.nodes(J):
        if J:
            parent = tree.node_at(J - 1, node.numerator // N)
            lo, hi = parent.interval(N)
            a, b = node.interval(N)
            assert lo <= a and b <= hi
    # additivity over the level-J N-adic partition of [1, 2]
    total = sum(measure_of_interval(tree, J, (1 + Fraction(k, N ** J), 1 + Fraction(k + 1, N ** J)))
                for k in range(N ** J))
    assert total == 1


@settings(max_examples=20, deadline=None)
@given(digit_trees())
def test_self_similarity(tree):
    N, J = tree.N, tree.depth
    if J < 2:
        return
    shorter = tree.truncate(J - 1)
    for top in tree.nodes(1):
        sub = sorted(M - top.numerator * N ** (J - 1) for M in tree.numerators(J) if M // N ** (J - 1) == top.numerator)
        assert sub == shorter.numerators(J - 1)
