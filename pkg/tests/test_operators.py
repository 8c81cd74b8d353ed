import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cantorbush import DigitSet, build_self_similar
from cantorbush.lambdap import singer_difference_set
from cantorbush.operators import (
    AveragingOperator,
    MaximalOperator,
    TrigProbe,
    averaging_op,
    default_gamma,
    full_maximal,
    japanese,
    kernel_apply,
    localized_multiplier,
    mixed_norm_average,
    multiplier_apply,
    multiplier_mtilde,
    multiplier_mtilde_dual,
    operator_norm_probe,
    probe_family,
    single_scale_maximal,
    sobolev_average_norm,
    truncate_main,
    verify_kernel_decay,
)
from cantorbush.operators.averaging import lp_norm
from cantorbush.operators.multipliers import multiplier_support
from cantorbush.spectral import GridFunction1D, MeasureSpectrum, mu_hat_selfsimilar


@pytest.fixture(scope="module")
def tree13():
    return build_self_similar(singer_difference_set(3), J=4)


@pytest.fixture(scope="module")
def point_tree():
    return build_self_similar(DigitSet(7, (0,)), J=2)


# -- averages ---------------------------------------------------------------

def test_average_of_exponential(tree13):
    pr = TrigProbe([30.0], [2.0 - 1j])
    for t in (0.3, 1.0, 1.7):
        out = averaging_op(pr, t, tree13)
        assert out.coefficients[0] == pytest.approx((2 - 1j) * mu_hat_selfsimilar((0, 6, 8, 9), 13, 30 * t), abs=1e-14)


def test_average_over_point_mass_is_a_shift(point_tree):
    n = 256
    f = GridFunction1D(0.0, 1 / n, np.random.RandomState(1).normal(size=n))
    # the measure is the unit mass at 1; t = 5/n shifts by exactly 5 cells
    out = averaging_op(f, 5 / n, point_tree, J=0)
    np.testing.assert_allclose(out.samples, np.roll(f.samples, 5), atol=1e-13)
    spectral = averaging_op(f, 5 / n, point_tree, method="spectral")
    np.testing.assert_allclose(spectral.samples, np.roll(f.samples, 5), atol=1e-12)


def test_linear_and_spectral_agree_on_smooth_input(tree13):
    f = GridFunction1D.from_callable(lambda x: np.cos(2 * np.pi * 3 * x) + 0.5 * np.sin(2 * np.pi * 5 * x), 0.0,
                                     1 / 4096, 4096)
    a = averaging_op(f, 0.7, tree13, J=4)
    b = averaging_op(f, 0.7, tree13, J=4, method="spectral")
    assert np.max(np.abs(a.samples - b.samples)) < 1e-4


def test_average_rejects_bad_input(tree13):
    f = GridFunction1D(0.0, 0.1, np.ones(10))
    with pytest.raises(ValueError):
        averaging_op(f, 0.0, tree13)
    with pytest.raises(ValueError):
        averaging_op(f, 1.0, tree13, method="cubic")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-200, 200), min_size=1, max_size=8, unique=True),
       st.floats(0.1, 2.0), st.sampled_from([1.0, 2.0, 4.0, math.inf]), st.integers(0, 10 ** 6))
def test_average_is_contraction(freqs, t, p, seed):
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=2)
    rng = np.random.RandomState(seed)
    pr = TrigProbe(np.array(freqs, float), rng.normal(size=len(freqs)) + 1j * rng.normal(size=len(freqs)))
    x = pr.sample_points(4096)
    assert lp_norm(averaging_op(pr, t, tree), p, x) <= lp_norm(pr, p, x) * (1 + 1e-9) + 1e-12


# -- maximal ---------------------------------------------------------------

def test_maximal_dominates_each_average(tree13):
    pr = probe_family("sparse", 1, 13, count=1, random_state=0)[0]
    x = pr.sample_points(512)
    tg = np.linspace(1 / 13, 1, 400)
    M = single_scale_maximal(pr, tree13, tg, x=x)
    for t in tg[::37]:
        assert np.all(M >= np.abs(averaging_op(pr, t, tree13).evaluate(x)) - 1e-12)
    assert np.all(M <= np.sum(np.abs(pr.coefficients)) + 1e-12)
    finer = single_scale_maximal(pr, tree13, np.union1d(tg, np.linspace(1 / 13, 1, 1000)), x=x)
    assert np.all(finer >= M * (1 - 1e-12))


def test_maximal_checks(tree13):
    pr = TrigProbe([1000.0], [1.0])
    with pytest.raises(ValueError):
        single_scale_maximal(pr, tree13, np.linspace(0.01, 1, 10))
    with pytest.raises(ValueError):
        single_scale_maximal(pr, tree13, np.linspace(1 / 13, 1, 10))


def test_full_maximal_scale_dilation(tree13):
    pr = TrigProbe([200.0, 230.0, 310.0], [1.0, 0.5j, -0.7])
    x = np.linspace(0, 1, 64, endpoint=False)
    full = full_maximal(pr, tree13, (1, 1), n_t=300, x=x)
    base = single_scale_maximal(pr.scaled(1 / 13), tree13, np.linspace(1 / 13, 1, 300), x=x * 13,
                                check_resolution=False)
    np.testing.assert_allclose(full, base, atol=1e-12)
    two = full_maximal(pr, tree13, (1, 2), n_t=300, x=x)
    assert np.all(two >= full * (1 - 1e-12))
    with pytest.raises(ValueError):
        full_maximal(pr, tree13, (2, 1))


# -- mixed norms -------------------------------------------------------------

def test_mixed_norm_closed_form(tree13):
    xi, c = 40.0, 1.5
    pr = TrigProbe([xi], [c])
    tg = np.linspace(1, 2, 801)
    mu = np.abs(mu_hat_selfsimilar((0, 6, 8, 9), 13, tg * xi))
    for r in (1.0, 4.0, math.inf):
        want = c * (mu.max() if math.isinf(r) else np.mean(mu ** r) ** (1 / r))
        assert mixed_norm_average(pr, tree13, r, 4, tg) == pytest.approx(want, rel=1e-12)
    g = 0.3
    assert sobolev_average_norm(pr, tree13, g, 4, tg) == pytest.approx(
        c * (1 + xi ** 2) ** (g / 2) * np.mean(mu ** 4) ** 0.25, rel=1e-12)
    with pytest.raises(ValueError):
        mixed_norm_average(pr, tree13, 0.5, 4)


def test_probe_families(tree13):
    for name in ("single", "near", "sparse", "packet"):
        for pr in probe_family(name, 2, 13, count=3, random_state=0):
            assert 169 <= pr.frequencies.min() and pr.frequencies.max() <= 2 * 13 ** 3
    with pytest.raises(ValueError):
        probe_family("chirp", 1, 13)


def test_norm_probe_identity_and_average(tree13):
    ident = operator_norm_probe("identity", tree13, 4, [1, 2], count=2, n_x=512)
    assert ident.ratios == [1.0, 1.0] and ident.beta == pytest.approx(0.0, abs=1e-12)
    avg = operator_norm_probe("average", tree13, 4, [1, 2], count=2, n_x=512)
    assert max(avg.ratios) <= 1 + 1e-9
    assert {"operator", "j", "ratio", "beta", "residual"} <= set(avg.rows()[0])
    with pytest.raises(ValueError):
        operator_norm_probe("hilbert", tree13, 4, [1], count=1)


def test_sklearn_wrappers(tree13):
    n = 1024
    x = np.arange(n) / n
    X = np.vstack([np.cos(2 * np.pi * 4 * x), np.sin(2 * np.pi * 7 * x)])
    avg = AveragingOperator(tree=tree13, t=0.5, spacing=1 / n).fit(X)
    out = avg.transform(X)
    assert out.shape == X.shape
    assert np.all(np.abs(out).max(axis=1) <= 1 + 1e-12)
    mx = MaximalOperator(tree=tree13, spacing=1 / n, n_t=16).fit(X)
    M = mx.transform(X)
    assert M.shape == X.shape and np.all(M >= 0)
    assert mx.get_params()["n_t"] == 16
    with pytest.raises(ValueError):
        AveragingOperator().fit(X)
    with pytest.raises(ValueError):
        MaximalOperator().fit(X)


# -- multipliers -------------------------------------------------------------

def test_multiplier_support_is_exact(tree13):
    lo, hi = multiplier_support(1, 13)
    for xi in (0.0, 0.999 * lo, -0.999 * lo, 1.001 * hi, -5 * hi):
        assert multiplier_mtilde(1, 0.3, xi, 0.7, tree13) == 0
    assert abs(multiplier_mtilde(1, 0.3, 3 * 13.0, 0.7, tree13)) > 0


def test_multiplier_gamma_factor():
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=2)
    for s in (-3.0, 0.0, 11.0):
        base = multiplier_mtilde(1, 0.0, 30.0, s, tree)
        assert multiplier_mtilde(1, 0.45, 30.0, s, tree) == pytest.approx(base * japanese(s) ** 0.45, rel=1e-12)
    assert default_gamma(4) == pytest.approx(0.3)


def test_multiplier_two_forms_agree():
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=2)
    vals = [(xi, s) for xi in (5.0, 40.0, -120.0, 900.0) for s in (-6.0, 0.0, 2.5)]
    t_form = np.array([multiplier_mtilde(1, 0.3, xi, s, tree) for xi, s in vals])
    y_form = np.array([multiplier_mtilde_dual(1, 0.3, xi, s, tree) for xi, s in vals])
    assert np.max(np.abs(t_form - y_form)) <= 1e-6 * np.max(np.abs(t_form))


def test_localized_pieces_sum_to_multiplier():
    tree = build_self_similar(DigitSet(7, (1, 2, 4)), J=3)
    spec = MeasureSpectrum(tree)
    for xi, s in ((20.0, 0.0), (-75.0, 3.0)):
        total = sum(localized_multiplier(1, node, 0.3, xi, s, tree, normalized=False, spectrum=spec)
                    for node in tree.nodes(1))
        assert total == pytest.approx(multiplier_mtilde(1, 0.3, xi, s, tree, spec), abs=1e-12)
    node = tree.nodes(1)[1]
    xi, s = 33.0, 1.25
    plain = localized_multiplier(1, node, 0.3, xi, s, tree, normalized=False)
    tau = s + float(node.position(7)) * xi
    scaled = localized_multiplier(1, node.numerator, 0.3, xi, tau, tree)
    assert scaled == pytest.approx(7 ** (tree.alpha - 0.3) * plain, rel=1e-12)
    with pytest.raises(ValueError):
        localized_multiplier(1, 12345, 0.3, xi, s, tree)


# -- kernels (shared ~40 s fixture) -------------------------------------------

@pytest.mark.slow
def test_kernel_matches_multiplier_side(kernels7):
    K = kernels7[1][0]
    xi0, w = 20.0, 3.0

    def f(x):
        return w * np.exp(-np.pi * (w * x) ** 2) * np.exp(2j * np.pi * xi0 * x)

    def fhat(xi):
        return np.where(xi > 0, np.exp(-np.pi * (xi - xi0) ** 2 / w ** 2), 0.0)

    for ti in (K.t.size // 3, K.t.size // 2):
        x = K.t[ti] * K.a_pos + np.linspace(-1, 1, 5)
        a = kernel_apply(K, f, x, ti)
        b = multiplier_apply(K, fhat, x, ti)
        assert np.max(np.abs(a - b)) <= 1e-6 * max(1.0, np.max(np.abs(a)))
    with pytest.raises(ValueError):
        multiplier_apply(K, fhat, [K.a_pos * K.t[0] + 100.0], 0)


@pytest.mark.slow
def test_kernel_decay_report(kernels7):
    reports = [verify_kernel_decay(kernels7[j][0], 2) for j in (1, 2)]
    for rep in reports:
        assert rep["far_field_ratio"] < 1e-4
        assert rep["C_joint"] == max(rep["C_u"], rep["C_t"])
    joint = [r["C_joint"] for r in reports]
    assert max(joint) / min(joint) <= 4
    with pytest.raises(ValueError):
        verify_kernel_decay(kernels7[1][0], 4)


@pytest.mark.slow
def test_main_part_tail_falls(kernels7):
    (_, t1, p1), (_, t2, p2) = kernels7[1], kernels7[2]
    assert p1 == pytest.approx(7 ** -0.3) and p2 == pytest.approx(7 ** -0.6)
    assert t2 / t1 <= 2 * 7 ** -0.3


def test_truncate_main_validates(tree13):
    with pytest.raises(ValueError):
        truncate_main(1, tree13.numerators(1)[0], 0.7, 1, tree13)
    with pytest.raises(ValueError):
        truncate_main(1, tree13.numerators(1)[0], 0.3, 3, tree13)
