import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cantorbush import DigitSet, build_self_similar
from cantorbush.decoupling import (
    RotatedFrame,
    Tiling,
    WeightBox,
    bush_containment_check,
    bush_cover,
    bush_family,
    extremizer_ascent,
    global_ratio,
    multilevel_ratios,
    partition_check,
    random_trial,
    single_step_family,
    single_step_ratio,
    spectral_mask_check,
    strip_family,
    synthesize_branch_function,
    unit_trial,
    weight_compare_log10,
    weight_eval,
    weight_transform,
    weighted_norm,
)
from cantorbush.spectral import GridFunction1D, GridFunction2D


@pytest.fixture(scope="module")
def tree7():
    return build_self_similar(DigitSet(7, (1, 2, 4)), J=3)


# -- weights -------------------------------------------------------------------

def test_weight_values():
    box1 = WeightBox((3.0,), (0.5,))
    assert box1.exponent == 1000 and weight_eval(box1, 3.0) == 1.0
    assert weight_eval(box1, 3.5) == pytest.approx(2.0 ** -1000, rel=1e-12)
    box2 = WeightBox((0.0, 1.0), (2.0, 0.5))
    assert box2.exponent == 100 and weight_eval(box2, np.array([0.0, 1.0])) == 1.0
    assert weight_eval(box2, np.array([2.0, 1.5])) == pytest.approx((1 + math.sqrt(2)) ** -100, rel=1e-12)


def test_weight_validation():
    with pytest.raises(ValueError):
        WeightBox((0.0,), (0.0,))
    with pytest.raises(ValueError):
        WeightBox((0.0, 0.0), (1.0,))
    with pytest.raises(ValueError):
        WeightBox((0.0, 0.0), (1.0, 1.0), exponent=2.0)


def _exact_1d(E, r, z):
    # int (1+|u|)^-E e^{i k u} du over R = 2 Re[e^{-ik} E_E(-ik)]
    k = 2 * math.pi * z * r
    if k == 0:
        return 2 * r / (E - 1)
    return float(2 * r * mpmath.re(mpmath.exp(-1j * k) * mpmath.expint(E, -1j * k)))


@pytest.mark.parametrize("E,r,z", [(1000, 0.5, 0.0), (1000, 0.5, 100.0), (1000, 0.5, 3000.0),
                                   (1000, 0.5, 50000.0), (100, 1.0, 0.3), (100, 1.0, 700.0)])
def test_weight_transform_1d_closed_form(E, r, z):
    box = WeightBox((0.0,), (r,), E)
    assert weight_transform(box, np.array([z]))[0].real == pytest.approx(_exact_1d(E, r, z), rel=1e-9)


def test_weight_transform_shift_phase():
    box = WeightBox((0.0,), (0.5,))
    moved = WeightBox((2.25,), (0.5,))
    z = np.array([0.0, 13.0, 400.0])
    np.testing.assert_allclose(weight_transform(moved, z), weight_transform(box, z) * np.exp(-2j * np.pi * 2.25 * z),
                               rtol=1e-13)


def _polar_2d(E, rx, rt, zx, zt, n_theta=256, panels=400):
    # int w(z) e^{-2 pi i z.zeta} dz with z = R u, u in polar coordinates
    U = 10.0 ** (34.0 / E) - 1.0
    nodes, weights = np.polynomial.legendre.leggauss(24)
    edges = np.linspace(0.0, U, panels + 1)
    half = 0.5 * np.diff(edges)
    rho = ((edges[:-1] + edges[1:])[:, None] / 2 + half[:, None] * nodes).ravel()
    wr = (half[:, None] * weights).ravel()
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    kx, kt = 2 * np.pi * rx * zx, 2 * np.pi * rt * zt
    phase = np.cos(np.outer(rho, kx * np.cos(theta) + kt * np.sin(theta)))
    radial = wr * rho * (1 + rho) ** -E
    return rx * rt * float(radial @ phase.mean(axis=1)) * 2 * np.pi


@pytest.mark.parametrize("zx,zt", [(0.0, 0.0), (3.0, -1.0), (0.0, 25.0), (40.0, 10.0)])
def test_weight_transform_2d_polar(zx, zt):
    box = WeightBox((0.0, 0.0), (0.5, 1.5))
    got = complex(weight_transform(box, (np.array(zx), np.array(zt)))).real
    assert got == pytest.approx(_polar_2d(100.0, 0.5, 1.5, zx, zt), rel=1e-8)


def test_weight_transform_at_zero_closed_forms():
    assert weight_transform(WeightBox((0.0,), (0.7,)), np.array([0.0]))[0] == pytest.approx(1.4 / 999)
    box = WeightBox((0.0, 0.0), (0.5, 2.0))
    val = weight_transform(box, (np.array(0.0), np.array(0.0)))
    assert complex(val).real == pytest.approx(2 * math.pi * 1.0 / (99 * 98))


# -- frames and tilings ------------------------------------------------------------

@pytest.mark.parametrize("a", [1, Fraction(3, 7), "5/2", 0])
def test_frame_exact_identities(a):
    fr = RotatedFrame(a)
    assert fr.exact
    A = fr.forward_exact
    c = 1 / (1 + fr.a * fr.a)
    assert A[0][0] * A[0][0] + A[0][1] * A[0][1] == c
    assert A[0][0] * A[1][0] + A[0][1] * A[1][1] == 0


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
def test_frame_float_identities(a, v):
    fr = RotatedFrame(a)
    xt, xis = np.array([v[:2]]), np.array([v[2:]])
    scale = 1 + np.abs(xt).max() * np.abs(xis).max() * (1 + a * a)
    assert fr.pairing_defect(xt, xis)[0] <= 1e-12 * scale
    assert fr.gram_defect() <= 1e-15
    np.testing.assert_allclose(fr.from_frame(fr.to_frame(xt)), xt, atol=1e-9 * (1 + abs(a)) ** 2)


def test_frame_rejects_infinite_slope():
    with pytest.raises(ValueError):
        RotatedFrame(float("inf"))


def test_partition_of_unity_bounds():
    tiling = Tiling(1.0, (-10, 10), (-10, 10))
    lo, hi = partition_check(tiling, [[0.5, 0.5], [3.5, -2.5]])
    assert 1 <= lo <= hi <= 1.01
    lo, _ = partition_check(tiling, [[0.0, 0.0], [2.0, 5.0]])
    assert lo >= 4 * (1 + math.sqrt(2)) ** -100 * (1 - 1e-12)
    framed = Tiling(2.0, (-10, 10), (-10, 10), RotatedFrame(Fraction(1, 3)))
    lo, hi = partition_check(framed, framed.frame.from_frame(framed.centers()[:5]))
    assert 1 - 1e-9 <= lo <= hi <= 1.01
    with pytest.raises(ValueError):
        partition_check(Tiling(1.0, (0, 4), (0, 20)), [[0.0, 0.0]])


# -- Riemann-sum weighted norms ----------------------------------------------------

def test_weighted_norm_constant_function():
    box = WeightBox((0.0,), (1.0,), exponent=50.0)
    g = GridFunction1D(-10.0, 1e-4, np.ones(200001))
    assert weighted_norm(g, box, 2) ** 2 == pytest.approx(2 / 49, rel=1e-5)


def test_weighted_norm_below_plain_norm_for_huge_box():
    x0, h, n = -1e7, 100.0, 200001
    g = GridFunction1D(x0, h, np.exp(-((x0 + h * np.arange(n)) / 1e5) ** 2))
    box = WeightBox((0.0,), (1e6,))
    assert weighted_norm(g, box, 2) <= g.norm(2) * (1 + 1e-12)


def test_weighted_norm_errors():
    g1 = GridFunction1D(-1.0, 0.01, np.ones(201))
    with pytest.raises(ValueError):
        weighted_norm(g1, WeightBox((0.0,), (1.0,)), 2)
    with pytest.raises(ValueError):
        weighted_norm(g1, WeightBox((0.0, 0.0), (0.01, 0.01)), 2)
    g2 = GridFunction2D((-1.0, -1.0), (0.1, 0.1), np.ones((21, 21)))
    with pytest.raises(ValueError):
        weighted_norm(g2, WeightBox((0.0,), (0.01,)), 2)
    with pytest.raises(TypeError):
        weighted_norm(np.ones(5), WeightBox((0.0,), (1.0,)), 2)


def test_exact_moment_matches_riemann_sum():
    lat = single_step_family((1, 2, 4), n_sub=2)
    trial = random_trial(lat, 3)
    box = WeightBox((0.0,), (0.5,))
    x = np.arange(-5.0, 5.0, 2e-5)
    norm = lambda branches: weighted_norm(GridFunction1D(-5.0, 2e-5, trial.evaluate(x, branches)), box, 4)
    riemann = norm(None) / math.sqrt(sum(norm([b]) ** 2 for b in range(lat.n_branches)))
    assert single_step_ratio(trial, box, 4) == pytest.approx(riemann, rel=1e-4)


# -- containment ---------------------------------------------------------------

def test_containment_holds():
    rep = bush_containment_check(1, 1, 49, 56, DigitSet(7, (1, 2, 4)), samples_per_branch=9)
    assert rep.ok and rep.checked == 3 * 9 * 2
    rep = bush_containment_check("2/3", "1/5", 130, "2600/19", DigitSet(19, (0, 3, 7, 17)))
    assert rep.ok


def test_containment_edge_is_tight_for_top_digit():
    # digit N-1 with delta_b = 1 and xi2 = xi1 (1 + 1/N) lands on the tau edge exactly
    a, da, x1 = Fraction(1), Fraction(1), Fraction(49)
    x2 = x1 * Fraction(8, 7)
    rep = bush_containment_check(a, da, x1, x2, (7, (6,)), samples_per_branch=2)
    assert rep.ok
    tau = -x2 * da / 7 * (6 + 1)
    assert tau == -x1 * da / 7 * (6 + 2)


def test_containment_stress_finds_violations():
    with pytest.raises(ValueError):
        bush_containment_check(1, 1, 49, 98, DigitSet(7, (1, 2, 4)))
    rep = bush_containment_check(1, 1, 49, 98, DigitSet(7, (1, 2, 4)), stress=True)
    assert not rep.ok and rep.stress


def test_bush_cover(tree7):
    cover = bush_cover(1, 0.3, 7, tree7, samples=800, random_state=0)
    assert cover.uncovered == 0
    assert 1 <= cover.branch_multiplicity <= 16
    assert cover.union_multiplicity >= cover.branch_multiplicity
    assert cover.count == len(cover.pieces) > 0
    with pytest.raises(ValueError):
        bush_cover(0, 0.3, 7, tree7)


# -- trials ---------------------------------------------------------------

@pytest.mark.parametrize("family", ["single", "strip", "bush"])
def test_spectra_sit_in_declared_regions(tree7, family):
    if family == "single":
        lat = single_step_family((1, 2, 4))
    elif family == "strip":
        lat = strip_family(tree7, 1.0, 1.0, 49.0, 56.0)
    else:
        lat = bush_family(tree7, 2, xi_lines=1)
    trial = synthesize_branch_function(lat, random_state=0)
    check = spectral_mask_check(trial)
    assert check["ok"], check
    assert trial.info["sum_defect"] == 0.0


def test_synthesized_samples_match_direct_sum():
    lat = single_step_family((1, 2, 4))
    trial = synthesize_branch_function(lat, random_state=1)
    x = trial.g.points[::7]
    np.testing.assert_allclose(trial.g.samples[::7], trial.evaluate(x), atol=1e-10)
    np.testing.assert_allclose(trial.pieces[1].samples[::7], trial.evaluate(x, [1]), atol=1e-10)
    with pytest.raises(ValueError):
        synthesize_branch_function(lat, n=8)


def test_unit_global_ratio_on_sidon_set():
    lat = single_step_family((1, 2, 4), profile="delta")
    assert global_ratio(unit_trial(lat), 4) == pytest.approx((2 - 1 / 3) ** 0.25, rel=1e-12)
    assert global_ratio(unit_trial(lat), 2) == pytest.approx(1.0, rel=1e-12)


def test_single_branch_ratio_is_one():
    lat = single_step_family((1, 2, 4))
    t = unit_trial(lat, active=[1])
    assert single_step_ratio(t, p=4) == pytest.approx(1.0, rel=1e-12)
    assert global_ratio(t, 4) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        single_step_ratio(unit_trial(lat, active=[]), p=4)


def test_ascent_never_decreases():
    lat = single_step_family((1, 2, 4))
    t = random_trial(lat, 7)
    start = single_step_ratio(t, p=4)
    out = extremizer_ascent(t, steps=4, p=4)
    assert out.ratio >= start
    assert out.info["start"] == pytest.approx(start)
    assert out.info["history"] == sorted(out.info["history"])


def test_first_level_equals_strip_step(tree7):
    lat = bush_family(tree7, 1, xi_lines=3)
    t = random_trial(lat, 2)
    assert multilevel_ratios(t, 4)[1] == pytest.approx(single_step_ratio(t, p=4), rel=1e-8)


def test_line_mode_levels(tree7):
    lat = bush_family(tree7, 3, xi_lines=1)
    assert lat.line_xi is not None and lat.dim == 1
    ratios = multilevel_ratios(random_trial(lat, 0), 4)
    assert set(ratios) == {1, 2, 3}
    assert all(r > 0 and math.isfinite(r) for r in ratios.values())


def test_bush_family_validates(tree7):
    with pytest.raises(ValueError):
        bush_family(tree7, 1, xi1=1.0)
    with pytest.raises(ValueError):
        bush_family(tree7, 1, xi1=49.0, xi2=100.0)
    with pytest.raises(ValueError):
        strip_family(tree7, 1.0, 1.0, 49.0, 70.0)


def test_weight_compare():
    assert weight_compare_log10(7, 1) == 0.0
    assert weight_compare_log10(7, 2) >= 0.0


def test_zero_branch_changes_nothing():
    small = single_step_family((1, 2))
    big = single_step_family((1, 2, 4))
    amp = np.array([[1.0, 0.5j], [-0.3, 2.0]])
    t_small = unit_trial(small).with_amplitudes(amp)
    t_big = unit_trial(big).with_amplitudes(np.vstack([amp, np.zeros((1, 2))]))
    for p in (2, 4, 6):
        assert single_step_ratio(t_big, p=p) == pytest.approx(single_step_ratio(t_small, p=p), rel=1e-12)
        assert global_ratio(t_big, p) == pytest.approx(global_ratio(t_small, p), rel=1e-12)
