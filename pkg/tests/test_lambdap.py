import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cantorbush.lambdap import (
    DigitSet,
    LambdaPConstantEstimator,
    additive_energy,
    additive_energy_bruteforce,
    exponential_sum_moment,
    is_sidon,
    lambda_p_ratio_exact_even,
    lambda_p_ratio_search,
    mian_chowla_greedy,
    singer_difference_set,
    size_bounds_check,
)


def _difference_counts(elems, n):
    counts = [0] * n
    for a, b in product(elems, repeat=2):
        if a != b:
            counts[(a - b) % n] += 1
    return counts


@pytest.mark.parametrize("q", [2, 3, 4, 5, 7, 8, 9, 11, 13, 16])
def test_singer_is_perfect_difference_set(q):
    S = singer_difference_set(q)
    n = q * q + q + 1
    assert S.N == n and len(S) == q + 1
    assert n - 1 not in S.elements
    assert _difference_counts(S.elements, n)[1:] == [1] * (n - 1)
    assert is_sidon(S).is_sidon


def test_singer_rejects_unsupported_q():
    with pytest.raises(ValueError):
        singer_difference_set(6)


@pytest.mark.parametrize("N,expected", [(14, (0, 1, 3, 7, 12)), (2, (0, 1)), (8, (0, 1, 3, 7))])
def test_mian_chowla(N, expected):
    assert mian_chowla_greedy(N).elements == expected


def test_is_sidon_examples():
    assert is_sidon([1, 2, 4]).is_sidon
    cert = is_sidon([0, 1, 2])
    assert not cert.is_sidon
    a, b, c, d = cert.witness
    assert a + b == c + d and sorted((a, b)) != sorted((c, d))
    assert is_sidon([0]).is_sidon


def test_energy_examples():
    assert additive_energy([1, 2, 4], 2).value == 15
    assert additive_energy(range(8), 2).value == 344 == (2 * 8 ** 3 + 8) // 3
    for k in (1, 2, 3, 5):
        assert additive_energy([6], k).value == 1


def test_exact_ratios():
    assert lambda_p_ratio_exact_even([1, 2, 4]) == pytest.approx((5 / 3) ** 0.25, abs=1e-12)
    assert lambda_p_ratio_exact_even(range(8)) == pytest.approx(344 ** 0.25 / math.sqrt(8), abs=1e-12)
    assert lambda_p_ratio_exact_even([3]) == 1.0


sets = st.lists(st.integers(0, 40), min_size=1, max_size=10, unique=True)


@settings(max_examples=60, deadline=None)
@given(sets, st.integers(1, 3))
def test_energy_matches_bruteforce(S, k):
    assert additive_energy(S, k).value == additive_energy_bruteforce(S, k)


@settings(max_examples=60, deadline=None)
@given(sets, st.integers(0, 30), st.integers(1, 5), st.integers(1, 3))
def test_energy_translation_dilation_invariant(S, c, m, k):
    E = additive_energy(S, k).value
    assert additive_energy([s + c for s in S], k).value == E
    assert additive_energy([m * s for s in S], k).value == E


@settings(max_examples=80, deadline=None)
@given(sets)
def test_sidon_iff_energy_law(S):
    n = len(S)
    assert is_sidon(S).is_sidon == (additive_energy(S, 2).value == 2 * n * n - n)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 200), min_size=1, max_size=40, unique=True))
def test_fourth_moment_identity(S):
    E = additive_energy(S, 2).value
    assert exponential_sum_moment(S, 4) == pytest.approx(E, rel=1e-9)


def test_search_bounds():
    S = DigitSet(7, (1, 2, 4))
    est = lambda_p_ratio_search(S, 4, trials=5, steps=100, random_state=0)
    n = len(S)
    assert est.ratio_sup >= est.ratio_unit == pytest.approx((5 / 3) ** 0.25)
    # ||P||_4 <= ||P||_inf^(1/2) ||P||_2^(1/2) <= n^(1/4) ||c||_2
    assert est.ratio_sup <= n ** 0.25 + 1e-12
    flat = lambda_p_ratio_search(S, 2, trials=3, steps=20, random_state=0)
    assert flat.ratio_sup == pytest.approx(1.0, abs=1e-12)


def test_search_on_full_interval():
    est = lambda_p_ratio_search(range(16), 4, trials=2, steps=50, random_state=1)
    assert est.ratio_sup >= ((2 * 16 ** 3 + 16) / 3) ** 0.25 / 4 - 1e-12
    assert est.ratio_sup >= 1.81


def test_search_monotone_in_trials():
    S = singer_difference_set(3)
    few = lambda_p_ratio_search(S, 4, trials=3, steps=40, random_state=5).ratio_sup
    many = lambda_p_ratio_search(S, 4, trials=8, steps=40, random_state=5).ratio_sup
    assert many >= few


def test_search_non_even_p_is_lower_bounded_by_unit():
    S = singer_difference_set(2)
    est = lambda_p_ratio_search(S, 3, trials=3, steps=50, random_state=0)
    assert est.ratio_sup >= est.ratio_unit >= 1 - 1e-9


def test_size_bounds():
    assert size_bounds_check(singer_difference_set(3), 13, 4, 1.0, 1.2)
    assert not size_bounds_check(DigitSet(100, (5,)), 100, 4, 1.0, 2.0)
    N = 50
    assert size_bounds_check(math.ceil(N ** 0.5), N, 4, 0.9, 1.1 * 8 / math.sqrt(50))


def test_estimator_api():
    S = singer_difference_set(2)
    est = LambdaPConstantEstimator(p=4, trials=3, steps=30, random_state=0).fit(S)
    assert est.ratio_sup_ >= est.ratio_unit_
    assert est.score(S) == pytest.approx(est.ratio_sup_, rel=1e-9)
    assert est.get_params()["p"] == 4
