"""Averaging operators ``A_t``, single- and multi-scale maximal functions,
mixed-norm averages and operator-norm probing on band-limited probes.

Two input types are accepted.  A :class:`~cantorbush.spectral.GridFunction1D`
is a sampled periodic function; ``A_t`` is applied either by linear
interpolation over the atoms of ``mu_J`` (a convex combination, so it is an
exact ``L^p`` contraction on the grid) or spectrally.  A :class:`TrigProbe`
is a finite exponential sum ``sum c_k e(xi_k x)``; for it
``A_t f = sum c_k mu^(t xi_k) e(xi_k x)`` is evaluated exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .._validation import check_random_state
from ..spectral import GridFunction1D, MeasureSpectrum, mu_hat_atoms

__all__ = [
    "TrigProbe",
    "NormEstimate",
    "AveragingConfig",
    "averaging_op",
    "single_scale_maximal",
    "full_maximal",
    "mixed_norm_average",
    "sobolev_average_norm",
    "probe_family",
    "operator_norm_probe",
    "default_t_grid",
    "AveragingOperator",
    "MaximalOperator",
]


@dataclass
class TrigProbe:
    """``f(x) = sum_k c_k exp(2 pi i xi_k x)``, periodic with ``period``."""

    frequencies: np.ndarray
    coefficients: np.ndarray
    period: float = 1.0
    label: str = ""

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.frequencies.shape != self.coefficients.shape or self.frequencies.ndim != 1:
            raise ValueError("frequencies and coefficients must be matching 1-D arrays")

    @property
    def max_frequency(self):
        return float(np.max(np.abs(self.frequencies)))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(2j * np.pi * np.multiply.outer(x, self.frequencies)) @ self.coefficients

    def scaled(self, factor):
        """``x -> f(factor * x)``."""
        return TrigProbe(self.frequencies * factor, self.coefficients, self.period / factor, self.label)

    def sample_points(self, n, offset=0.0):
        return (offset + np.arange(n) / n) * self.period

    @classmethod
    def from_grid(cls, f, rel_threshold=0.0):
        """Exponential-sum form of a periodic grid function (exact on the grid)."""
        n = len(f)
        xi = f.frequencies()
        c = np.fft.fft(f.samples) / n * np.exp(-2j * np.pi * f.origin * xi)
        keep = np.abs(c) > rel_threshold * np.abs(c).max()
        return cls(xi[keep], c[keep], f.length)


@dataclass
class AveragingConfig:
    J: int
    t_grid: np.ndarray
    n_x: int = 2048
    interpolation: str = "linear"

    def __post_init__(self):
        self.t_grid = np.sort(np.asarray(self.t_grid, dtype=float))
        if self.t_grid.size == 0:
            raise ValueError("t-grid must be nonempty")


@dataclass
class NormEstimate:
    """Per-level operator-norm ratios and a fitted growth exponent.

    ``beta`` is the least-squares slope of ``log ratio`` against ``j log N``.
    """

    operator: str
    p: float
    js: list
    ratios: list
    beta: float
    intercept: float
    residual: float
    per_probe: dict = field(default_factory=dict)

    def rows(self):
        return [{"operator": self.operator, "j": j, "ratio": r, "beta": self.beta, "residual": self.residual}
                for j, r in zip(self.js, self.ratios)]


def _spectrum_of(tree, J):
    if J is None:
        return MeasureSpectrum(tree)
    return lambda xi: mu_hat_atoms(tree, J, xi)


def _as_probe(f):
    return f if isinstance(f, TrigProbe) else TrigProbe.from_grid(f)


def averaging_op(f, t, tree, J=None, method="linear"):
    """``A_t f(x) = int f(x - t y) dmu(y)``.

    Parameters
    ----------
    f : GridFunction1D or TrigProbe
    t : float
        Dilation, must be positive.
    tree : CantorTree
    J : int, optional
        Depth of the atomic measure; ``None`` uses the product formula for
        self-similar trees (linear mode then uses the full tree depth).
    method : {"linear", "spectral"}
        Only used for grid input.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if isinstance(f, TrigProbe):
        spec = _spectrum_of(tree, J)
        return TrigProbe(f.frequencies, f.coefficients * spec(t * f.frequencies), f.period, f.label)
    if method == "spectral":
        spec = _spectrum_of(tree, J)
        return f.with_multiplier(lambda xi: spec(t * xi))
    if method != "linear":
        raise ValueError(f"unknown method {method!r}")
    depth = tree.depth if J is None else J
    atoms = tree.positions(depth)
    x = f.points
    period = f.length
    xp = np.append(x, x[0] + period)
    re = np.append(f.samples.real, f.samples.real[0])
    im = np.append(f.samples.imag, f.samples.imag[0])
    out = np.zeros(len(x), dtype=complex)
    for a in atoms:
        q = (x - t * a - f.origin) % period + f.origin
        out += np.interp(q, xp, re) + 1j * np.interp(q, xp, im)
    return GridFunction1D(f.origin, f.spacing, out / len(atoms), f.variable)


def default_t_grid(N, max_frequency, lo=None, hi=1.0, resolution=0.1):
    """Uniform grid on ``[lo, hi]`` (default ``[1/N, 1]``) with ``dt * max_frequency <= resolution``."""
    lo = 1.0 / N if lo is None else lo
    n = max(2, int(math.ceil((hi - lo) * max(max_frequency, 1.0) / resolution)) + 1)
    return np.linspace(lo, hi, n)


def _check_t_resolution(t_grid, max_frequency, resolution=0.1):
    if t_grid.size > 1:
        dt = float(np.max(np.diff(t_grid)))
        if dt * max_frequency > resolution * (1 + 1e-9):
            raise ValueError(
                f"t-grid step {dt:.3g} too coarse for frequency {max_frequency:.3g} (need dt*freq <= {resolution})"
            )


def _averages_on_points(probe, t_grid, x, spec, chunk=2048):
    """Yield ``(t_block, |A_t f(x)|`` array of shape (len(t_block), len(x)))``."""
    E = np.exp(2j * np.pi * np.multiply.outer(probe.frequencies, x))
    for s in range(0, t_grid.size, chunk):
        tb = t_grid[s : s + chunk]
        mult = spec(np.multiply.outer(tb, probe.frequencies)) * probe.coefficients
        yield tb, (mult @ E)


def single_scale_maximal(f, tree, t_grid=None, J=None, x=None, check_resolution=True):
    """``sup_{t in t_grid} |A_t f(x)|`` with ``t_grid`` inside ``[1/N, 1]``.

    For grid input the result is a grid function on the same grid; for probe
    input it is evaluated at ``x`` (default 2048 equispaced points per period).
    """
    N = tree.N
    probe = _as_probe(f)
    if t_grid is None:
        t_grid = default_t_grid(N, probe.max_frequency)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.min() < 1.0 / N - 1e-12 or t_grid.max() > 1.0 + 1e-12:
        raise ValueError("t-grid must lie in [1/N, 1]")
    if check_resolution:
        _check_t_resolution(t_grid, probe.max_frequency)
    return _maximal_over(f, probe, tree, t_grid, J, x)


def _maximal_over(f, probe, tree, t_grid, J, x):
    spec = _spectrum_of(tree, J)
    pts = f.points if isinstance(f, GridFunction1D) else (probe.sample_points(2048) if x is None else np.asarray(x))
    best = np.zeros(len(pts))
    for _, vals in _averages_on_points(probe, t_grid, pts, spec):
        np.maximum(best, np.abs(vals).max(axis=0), out=best)
    if isinstance(f, GridFunction1D):
        return GridFunction1D(f.origin, f.spacing, best, f.variable)
    return best


def full_maximal(f, tree, scales, n_t=None, J=None, x=None, resolution=0.1):
    """Max over scales ``k`` of the sup over ``N^{-k-1} <= t <= N^{-k}``.

    Each scale uses the base ``[1/N, 1]`` grid multiplied by ``N^{-k}``, so a
    frequency dilation by ``N^k`` maps scale windows onto each other exactly.
    """
    k_lo, k_hi = scales
    if k_hi < k_lo:
        raise ValueError("empty scale range")
    N = tree.N
    probe = _as_probe(f)
    if n_t is None:
        top = probe.max_frequency * float(N) ** (-k_lo)
        base = default_t_grid(N, top, resolution=resolution)
    else:
        base = np.linspace(1.0 / N, 1.0, int(n_t))
    best = None
    for k in range(k_lo, k_hi + 1):
        vals = _maximal_over(f, probe, tree, base * float(N) ** (-k), J, x)
        arr = vals.samples.real if isinstance(vals, GridFunction1D) else vals
        best = arr if best is None else np.maximum(best, arr)
    if isinstance(f, GridFunction1D):
        return GridFunction1D(f.origin, f.spacing, best, f.variable)
    return best


def _lp_mean(values, p, axis=None):
    a = np.abs(values)
    if np.isinf(p):
        return a.max(axis=axis)
    return np.mean(a ** p, axis=axis) ** (1.0 / p)


def mixed_norm_average(f, tree, r, p, t_grid=None, J=None, x=None):
    """``|| ||A_t f(x)||_{L^r([1,2], dt)} ||_{L^p(dx)}`` by nested Riemann sums.

    The ``x`` norm is over one period (normalized to unit length windows by
    the mean), the ``t`` norm over ``[1, 2]`` (length one, so also a mean).
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    probe = _as_probe(f)
    if t_grid is None:
        t_grid = default_t_grid(tree.N, probe.max_frequency, lo=1.0, hi=2.0)
    t_grid = np.asarray(t_grid, dtype=float)
    spec = _spectrum_of(tree, J)
    pts = probe.sample_points(2048) if x is None else np.asarray(x)
    acc = np.zeros(len(pts))
    for _, vals in _averages_on_points(probe, t_grid, pts, spec):
        a = np.abs(vals)
        if np.isinf(r):
            np.maximum(acc, a.max(axis=0), out=acc)
        else:
            acc += np.sum(a ** r, axis=0)
    inner = acc if np.isinf(r) else (acc / t_grid.size) ** (1.0 / r)
    return float(_lp_mean(inner, p) * probe.period ** (1.0 / p))


def sobolev_average_norm(f, tree, gamma, p, t_grid=None, J=None, x=None):
    """``L^p(dx dt)`` norm over one period times ``[1, 2]`` of the
    x-only inverse transform of ``<xi>^gamma f^(xi) mu^(t xi)``."""
    probe = _as_probe(f)
    weighted = TrigProbe(
        probe.frequencies, probe.coefficients * (1 + probe.frequencies ** 2) ** (gamma / 2), probe.period
    )
    return mixed_norm_average(weighted, tree, p, p, t_grid, J, x)


def lp_norm(f, p, x=None):
    probe = _as_probe(f)
    pts = probe.sample_points(2048) if x is None else np.asarray(x)
    return float(_lp_mean(probe.evaluate(pts), p) * probe.period ** (1.0 / p))


def probe_family(name, j, N, count=4, random_state=None, n_terms=12):
    """Band-limited test functions with spectrum in ``[N^j, 2 N^{j+1}]``.

    ``single``      one integer frequency ``~ 1.5 N^j``
    ``near``        frequencies ``N^j + {0, 1, 2, 3}`` (no Fourier decay of
                    self-similar measures is felt there)
    ``sparse``      ``n_terms`` random frequencies in ``[N^j, 2 N^j]`` with
                    random complex coefficients
    ``packet``      contiguous block of ``n_terms`` frequencies at a random
                    start, unit coefficients (a wave packet)
    """
    rng = check_random_state(random_state)
    base = N ** j
    probes = []
    for i in range(count):
        if name == "single":
            xi = np.array([int(round(base * (1.25 + 0.5 * i / max(count, 1))))])
            c = np.ones(1)
        elif name == "near":
            xi = base + np.arange(4)
            c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        elif name == "sparse":
            xi = np.sort(rng.choice(np.arange(base, 2 * base + 1), size=min(n_terms, base + 1), replace=False))
            c = rng.standard_normal(xi.size) + 1j * rng.standard_normal(xi.size)
        elif name == "packet":
            start = int(rng.randint(base, 2 * base - n_terms + 2)) if base > n_terms else base
            xi = start + np.arange(n_terms)
            c = np.ones(n_terms)
        else:
            raise ValueError(f"unknown probe family {name!r}")
        probes.append(TrigProbe(xi.astype(float), c.astype(complex), 1.0, f"{name}-{j}-{i}"))
    return probes


def operator_norm_probe(operator, tree, p, j_range, families=("single", "near", "sparse", "packet"),
                        count=3, random_state=0, n_x=2048, J=None):
    """Measure ``max_probe ||Op f||_p / ||f||_p`` per level and fit ``N^{j beta}``.

    ``operator`` is ``"identity"``, ``"average"`` (``A_1``) or ``"maximal"``
    (the single-scale maximal operator).  Numerator and denominator use the
    same equispaced x-sample, so the identity has ratio exactly 1.
    """
    rng = check_random_state(random_state)
    N = tree.N
    js, ratios, per_probe = [], [], {}
    x = (np.arange(n_x) + 0.5) / n_x
    for j in j_range:
        probes = []
        for fam in families:
            probes += probe_family(fam, j, N, count, rng)
        best = 0.0
        for pr in probes:
            denom = _lp_mean(pr.evaluate(x), p)
            if operator == "identity":
                num = denom
            elif operator == "average":
                num = _lp_mean(averaging_op(pr, 1.0, tree, J).evaluate(x), p)
            elif operator == "maximal":
                num = _lp_mean(single_scale_maximal(pr, tree, J=J, x=x), p)
            else:
                raise ValueError(f"unknown operator {operator!r}")
            ratio = float(num / denom)
            per_probe[pr.label] = ratio
            best = max(best, ratio)
        js.append(j)
        ratios.append(best)
    X = np.asarray(js, dtype=float) * math.log(N)
    Y = np.log(ratios)
    if len(js) >= 2:
        beta, intercept = np.polyfit(X, Y, 1)
        residual = float(np.sqrt(np.mean((Y - (beta * X + intercept)) ** 2)))
    else:
        beta, intercept, residual = 0.0, float(Y[0]), 0.0
    return NormEstimate(operator, float(p), js, ratios, float(beta), float(intercept), residual, per_probe)


class AveragingOperator(BaseEstimator, TransformerMixin):
    """``A_t`` acting on rows of periodic samples.

    Parameters
    ----------
    tree : CantorTree
    t : float
    spacing : float
        Grid spacing of the rows.
    J : int, optional
    method : {"linear", "spectral"}
    """

    def __init__(self, tree=None, t=1.0, spacing=1e-3, J=None, method="linear"):
        self.tree = tree
        self.t = t
        self.spacing = spacing
        self.J = J
        self.method = method

    def fit(self, X, y=None):
        if self.tree is None:
            raise ValueError("AveragingOperator needs a tree")
        if not self.t > 0:
            raise ValueError("t must be positive")
        self.n_samples_ = np.atleast_2d(X).shape[1]
        return self

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        rows = [averaging_op(GridFunction1D(0.0, self.spacing, row), self.t, self.tree, self.J, self.method).samples
                for row in X]
        return np.vstack(rows)


class MaximalOperator(BaseEstimator, TransformerMixin):
    """Single-scale maximal function of rows of periodic samples."""

    def __init__(self, tree=None, spacing=1e-3, n_t=64, J=None):
        self.tree = tree
        self.spacing = spacing
        self.n_t = n_t
        self.J = J

    def fit(self, X, y=None):
        if self.tree is None:
            raise ValueError("MaximalOperator needs a tree")
        self.t_grid_ = np.linspace(1.0 / self.tree.N, 1.0, int(self.n_t))
        return self

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        rows = [single_scale_maximal(GridFunction1D(0.0, self.spacing, row), self.tree, self.t_grid_, self.J,
                                     check_resolution=False).samples.real for row in X]
        return np.vstack(rows)
