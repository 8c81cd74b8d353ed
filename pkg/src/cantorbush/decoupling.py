"""Weights, tilings, rotated frames and measured decoupling ratios.

Trial functions are trigonometric polynomials on a frequency lattice of
spacing ``1/P``.  They are locally integrable, their spectra are finite point
sets (so every branch condition can be checked point by point), and for even
``p`` the function ``|f|^p`` is again a trigonometric polynomial.  That makes

    int_R |f|^p w(z - z0) dz = sum_m F_m w^(m / P) e(m . z0 / P)

an identity rather than an approximation: ``F_m`` comes from one FFT of
``|f|^p`` sampled above its Nyquist rate and ``w^`` is the transform of the
weight, tabulated once per exponent.  Riemann sums would have to resolve the
weight's core, which is only ``r / exponent`` wide.  :func:`weighted_norm`
keeps the Riemann-sum route for sampled grid functions.

Large multilevel cases use a single ``xi``-line: then ``|g|`` depends on ``t``
only and every 2D weighted integral collapses to a 1D one against the
``x``-marginal of the weight, whose transform is ``w^(0, zeta_t)``.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.fft import fftn, ifftn, next_fast_len
from scipy.interpolate import CubicSpline
from scipy.special import binom, gamma, j0, logsumexp, poch, rgamma

from ._validation import as_fraction, check_random_state
from .lambdap import DigitSet
from .spectral import BumpSpec, GridFunction1D, GridFunction2D, smooth_cutoff

__all__ = [
    "WeightBox",
    "Tiling",
    "RotatedFrame",
    "BranchStrip",
    "BranchLattice",
    "DecouplingTrial",
    "DecouplingReport",
    "SingleStepReport",
    "ContainmentReport",
    "BushCover",
    "weight_eval",
    "weight_transform",
    "partition_check",
    "weighted_norm",
    "frame_from_slope",
    "bush_containment_check",
    "single_step_family",
    "bush_family",
    "strip_family",
    "random_trial",
    "unit_trial",
    "synthesize_branch_function",
    "spectral_mask_check",
    "single_step_ratio",
    "multilevel_ratios",
    "global_ratio",
    "extremizer_ascent",
    "single_step_experiment",
    "multilevel_experiment",
    "weight_compare_log10",
    "bush_cover",
]

TRUNCATION_WIDTHS = 12


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightBox:
    """Box ``|z - center| <= half_widths`` with weight ``(1 + |normalized z|)^-exponent``.

    One-dimensional boxes (intervals) default to exponent 1000, rectangles to 100.
    """

    center: tuple
    half_widths: tuple
    exponent: float = None

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        r = tuple(float(v) for v in np.atleast_1d(self.half_widths))
        if len(c) not in (1, 2) or len(c) != len(r):
            raise ValueError("center and half_widths must both have length 1 or 2")
        if min(r) <= 0:
            raise ValueError("half-widths must be positive")
        e = self.exponent
        if e is None:
            e = 1000.0 if len(c) == 1 else 100.0
        if not float(e) > len(c):
            raise ValueError("exponent must exceed the dimension for an integrable weight")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_widths", r)
        object.__setattr__(self, "exponent", float(e))

    @property
    def dim(self):
        return len(self.center)

    def normalized_distance(self, points):
        pts = np.asarray(points, dtype=float)
        if self.dim == 1:
            return np.abs(pts - self.center[0]) / self.half_widths[0]
        pts = pts.reshape(-1, 2) if pts.ndim == 1 else pts
        d = (pts - np.asarray(self.center)) / np.asarray(self.half_widths)
        return np.hypot(d[..., 0], d[..., 1])

    def log_weight(self, points):
        return -self.exponent * np.log1p(self.normalized_distance(points))

    def __call__(self, points):
        return weight_eval(self, points)


def weight_eval(box, point):
    """``(1 + normalized distance)^-exponent``; arrays of points are accepted."""
    out = np.exp(box.log_weight(point))
    if np.ndim(out) == 0:
        return float(out)
    if box.dim == 2 and np.ndim(point) == 1:
        return float(out[0])
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _profile_cutoff(E):
    # (1 + U)^-E = 1e-34
    return 10.0 ** (34.0 / E) - 1.0


def _quad_transform(dim, E, kappa):
    """``T(kappa)`` by composite 32-point Gauss-Legendre on ``[0, U]``."""
    U = _profile_cutoff(E)
    out = np.empty(len(kappa))
    for i, k in enumerate(kappa):
        panels = int(math.ceil(k * U / (2 * math.pi))) + 8
        edges = np.linspace(0.0, U, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        u = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
        w = (half[:, None] * _GL_WEIGHTS).ravel()
        f = np.exp(-E * np.log1p(u))
        if dim == 1:
            out[i] = 2.0 * np.sum(w * f * np.cos(k * u))
        else:
            out[i] = 2.0 * math.pi * np.sum(w * f * j0(k * u) * u)
    return out


def _asymptotic_transform(dim, E, kappa, terms=12):
    """Endpoint expansion of ``T`` for ``kappa >> E``."""
    inv = 1.0 / np.asarray(kappa, dtype=float)
    out = np.zeros_like(inv)
    if dim == 1:
        for m in range(terms):
            out += (-1) ** m * poch(E, 2 * m + 1) * inv ** (2 * m + 2)
        return 2.0 * out
    for n in range(1, 2 * terms, 2):
        c = -binom(E + n - 1, n) * 2.0 ** (n + 1) * gamma((n + 2) / 2.0) * rgamma(-n / 2.0)
        out += c * inv ** (n + 2)
    return 2.0 * math.pi * out


def _transform_at_zero(dim, E):
    return 2.0 / (E - 1) if dim == 1 else 2.0 * math.pi / ((E - 1) * (E - 2))


@lru_cache(maxsize=8)
def _transform_table(dim, E):
    # past 8E the endpoint series (terms shrink like (E/kappa)^2) matches quadrature to ~1e-15
    k0 = 8.0 * E
    h = E / 200.0
    grid = np.linspace(0.0, k0, int(round(k0 / h)) + 1)
    vals = _quad_transform(dim, E, grid)
    return k0, CubicSpline(grid, vals, bc_type=((1, 0.0), "not-a-knot"))


def _radial_transform(dim, E, kappa):
    """Transform of the unit profile ``(1 + |u|)^-E`` at radial frequency ``kappa``."""
    kappa = np.abs(np.asarray(kappa, dtype=float))
    k0, spline = _transform_table(dim, float(E))
    out = np.empty(kappa.shape)
    low = kappa <= k0
    out[low] = spline(kappa[low])
    if np.any(~low):
        out[~low] = _asymptotic_transform(dim, E, kappa[~low])
    out[kappa == 0] = _transform_at_zero(dim, E)
    return out


def _centered_hat(box, zeta, marginal=False):
    """``w^`` of the box moved to the origin; real and even.

    With ``marginal=True`` a 2D box is integrated over ``x`` first and
    ``zeta`` holds ``t``-frequencies only.
    """
    E = box.exponent
    if box.dim == 1:
        r = box.half_widths[0]
        return r * _radial_transform(1, E, 2 * math.pi * r * np.asarray(zeta, dtype=float))
    rx, rt = box.half_widths
    if marginal:
        return rx * rt * _radial_transform(2, E, 2 * math.pi * rt * np.asarray(zeta, dtype=float))
    zx, zt = zeta
    return rx * rt * _radial_transform(2, E, 2 * math.pi * np.hypot(rx * np.asarray(zx), rt * np.asarray(zt)))


def weight_transform(box, zeta):
    """Fourier transform ``int w(z) e^{-2 pi i z.zeta} dz`` of the box weight.

    ``zeta`` is an array of frequencies (1D box) or a pair ``(zeta_x, zeta_t)``
    of broadcastable arrays.  Below ``|kappa| = 8 * exponent`` the radial
    transform comes from a spline through Gauss-Legendre values; above it from
    the endpoint asymptotic series.
    """
    hat = _centered_hat(box, zeta)
    if box.dim == 1:
        phase = np.exp(-2j * math.pi * box.center[0] * np.asarray(zeta, dtype=float))
    else:
        phase = np.exp(-2j * math.pi * (box.center[0] * np.asarray(zeta[0]) + box.center[1] * np.asarray(zeta[1])))
    return hat * phase


# ---------------------------------------------------------------------------
# frames and tilings


class RotatedFrame:
    """The sheared-rotated coordinates attached to slope ``a``.

    ``forward`` maps ``(x, t)`` to ``(u, v)``; ``dual`` maps ``(xi, s)`` to
    ``(eta, tau)``.  ``forward @ forward.T`` is ``(1 + a^2)^-1`` times the
    identity, so ``forward`` is a scaled orthogonal matrix, and the pairing
    ``x xi + t s = u eta + v tau`` holds exactly.  Both facts are checked on
    construction; rational slopes are checked in exact arithmetic.
    """

    def __init__(self, a):
        self.exact = isinstance(a, (int, Fraction)) or (isinstance(a, str))
        if self.exact:
            a = as_fraction(a)
            one = Fraction(1)
            self.a = a
            scale = one / (1 + a * a)
            self.forward_exact = ((scale, -a * scale), (a * scale, scale))
            self.dual_exact = ((one, -a), (a, one))
            self._check_exact()
            af = float(a)
        else:
            af = float(a)
            if not math.isfinite(af):
                raise ValueError("slope must be finite")
            self.a = af
        self.forward = np.array([[1.0, -af], [af, 1.0]]) / (1.0 + af * af)
        self.dual = np.array([[1.0, -af], [af, 1.0]])
        gram = self.forward @ self.forward.T
        if not np.allclose(gram, np.eye(2) / (1.0 + af * af), rtol=1e-12, atol=1e-15):
            raise ArithmeticError("frame matrix is not a scaled rotation")

    def _check_exact(self):
        A, D = self.forward_exact, self.dual_exact
        c = 1 / (1 + self.a * self.a)
        for i in range(2):
            for k in range(2):
                g = A[i][0] * A[k][0] + A[i][1] * A[k][1]
                if g != (c if i == k else 0):
                    raise ArithmeticError("exact frame identity failed")
                # dual is the inverse transpose of forward
                d = A[0][i] * D[0][k] + A[1][i] * D[1][k]
                if d != (1 if i == k else 0):
                    raise ArithmeticError("exact duality failed")

    def to_frame(self, xt):
        return np.asarray(xt, dtype=float) @ self.forward.T

    def from_frame(self, uv):
        return np.asarray(uv, dtype=float) @ np.linalg.inv(self.forward).T

    def dual_to_frame(self, xis):
        return np.asarray(xis, dtype=float) @ self.dual.T

    def pairing_defect(self, xt, xis):
        """``|x.xi - u.eta|`` per row; zero up to rounding."""
        xt = np.atleast_2d(xt)
        xis = np.atleast_2d(xis)
        lhs = np.sum(xt * xis, axis=1)
        rhs = np.sum(self.to_frame(xt) * self.dual_to_frame(xis), axis=1)
        return np.abs(lhs - rhs)

    def gram_defect(self):
        return float(np.max(np.abs(self.forward @ self.forward.T - np.eye(2) / (1 + float(self.a) ** 2))))

    def __repr__(self):
        return f"RotatedFrame(a={self.a})"


def frame_from_slope(a):
    return RotatedFrame(a)


@dataclass(frozen=True)
class Tiling:
    """Axis-parallel ``side``-squares (in frame coordinates) indexed by integer pairs.

    Tile ``(i, k)`` is ``[i L, (i+1) L] x [k L, (k+1) L]`` in the coordinates of
    ``frame`` (the plain ``(x, t)`` plane when ``frame`` is None).
    """

    side: float
    x_range: tuple
    t_range: tuple
    frame: RotatedFrame = None

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("tile side must be positive")
        for lo, hi in (self.x_range, self.t_range):
            if hi <= lo:
                raise ValueError("index ranges must be nonempty")

    @property
    def shape(self):
        return self.x_range[1] - self.x_range[0], self.t_range[1] - self.t_range[0]

    def centers(self):
        i = np.arange(*self.x_range) + 0.5
        k = np.arange(*self.t_range) + 0.5
        I, K = np.meshgrid(i, k, indexing="ij")
        return np.column_stack([I.ravel(), K.ravel()]) * self.side

    def boxes(self, exponent=100.0):
        h = 0.5 * self.side
        return [WeightBox(tuple(c), (h, h), exponent) for c in self.centers()]


def partition_check(tiling, sample_points, exponent=100.0):
    """Extremes of ``sum_Q w_Q`` over the sample points.

    Tiles farther than 12 side lengths (in sup norm) from a point are dropped;
    their total contribution is below ``1e-30`` for exponent 100.

    Returns
    -------
    (float, float)
        Minimum and maximum of the truncated sum.
    """
    if min(tiling.shape) < 8:
        raise ValueError("partition check needs a tiling at least 8 tiles wide")
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if tiling.frame is not None:
        pts = tiling.frame.to_frame(pts)
    L = tiling.side
    vals = []
    offs = np.arange(-TRUNCATION_WIDTHS, TRUNCATION_WIDTHS + 1)
    for p in pts:
        i0, k0 = np.floor(p / L).astype(int)
        I = np.clip(i0 + offs, tiling.x_range[0], tiling.x_range[1] - 1)
        K = np.clip(k0 + offs, tiling.t_range[0], tiling.t_range[1] - 1)
        I, K = np.unique(I), np.unique(K)
        cx = (I + 0.5) * L
        ct = (K + 0.5) * L
        d = np.hypot((p[0] - cx)[:, None], (p[1] - ct)[None, :]) / (0.5 * L)
        vals.append(float(np.sum(np.exp(-exponent * np.log1p(d)))))
    return min(vals), max(vals)


def weighted_norm(g, box, p):
    """Riemann-sum ``(int |g|^p w_box)^{1/p}`` for a sampled grid function.

    Raises
    ------
    ValueError
        If the sampled window does not extend at least four box widths past
        the box on every side.
    """
    if isinstance(g, GridFunction1D):
        if box.dim != 1:
            raise ValueError("1D grid function needs a 1D box")
        axes = [g.points]
        cell = g.spacing
        samples = g.samples
    elif isinstance(g, GridFunction2D):
        if box.dim != 2:
            raise ValueError("2D grid function needs a 2D box")
        axes = [g.axis(0), g.axis(1)]
        cell = g.spacings[0] * g.spacings[1]
        samples = g.samples
    else:
        raise TypeError("expected a GridFunction1D or GridFunction2D")
    for ax, c, r in zip(axes, box.center, box.half_widths):
        margin = r + 4 * (2 * r)
        if ax[0] > c - margin or ax[-1] < c + margin:
            raise ValueError("grid window must extend four box widths beyond the box")
    if box.dim == 1:
        w = weight_eval(box, axes[0])
    else:
        X, T = np.meshgrid(axes[0], axes[1], indexing="ij")
        w = np.exp(box.log_weight(np.stack([X, T], axis=-1)))
    return float((np.sum(np.abs(samples) ** p * w) * cell) ** (1.0 / p))


# ---------------------------------------------------------------------------
# Cantor-bush geometry


@dataclass(frozen=True)
class BranchStrip:
    """One branch of ``K[a, da, xi1, xi2]`` and its bounding strip in ``(eta, tau)``."""

    a: Fraction
    delta_a: Fraction
    xi1: Fraction
    xi2: Fraction
    b: int
    N: int
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.check and self.xi2 - self.xi1 > self.xi1 / self.N:
            raise ValueError("need xi2 - xi1 <= xi1 / N")

    def eta_bounds(self):
        a, da = self.a, self.delta_a
        return self.xi1 * (1 + a * a), self.xi2 * (1 + a * a + a * da)

    def tau_bounds(self):
        w = self.xi1 * self.delta_a / self.N
        return -w * (self.b + 2), -w * self.b

    def contains(self, eta, tau):
        lo, hi = self.eta_bounds()
        t0, t1 = self.tau_bounds()
        return lo <= eta <= hi and t0 <= tau <= t1


@dataclass
class ContainmentReport:
    checked: int
    violations: list
    stress: bool

    @property
    def ok(self):
        return not self.violations


def bush_containment_check(a, delta_a, xi1, xi2, S, samples_per_branch=5, stress=False):
    """Check that each slanted segment of ``K_b`` lies in its strip ``E_b``.

    Segment endpoints ``eta_i = xi_i (1 + a^2 + a b)``, ``tau_i = -xi_i b`` are
    computed in exact rationals and cross-checked against the coordinate
    change itself.  ``Delta b`` runs over ``samples_per_branch`` equispaced
    rationals in ``[0, 1]``.

    Raises
    ------
    ValueError
        If ``xi2 - xi1 > xi1 / N`` and ``stress`` is False.
    """
    a, da, x1, x2 = (as_fraction(v) for v in (a, delta_a, xi1, xi2))
    if isinstance(S, DigitSet):
        N, digits = S.N, S.elements
    else:
        N, digits = S
    if not (a > 0 and da > 0 and 0 < x1 < x2):
        raise ValueError("need a > 0, delta_a > 0 and 0 < xi1 < xi2")
    if x2 - x1 > x1 / N and not stress:
        raise ValueError("xi2 - xi1 exceeds xi1 / N; pass stress=True to search for violations")
    m = max(int(samples_per_branch), 2)
    violations = []
    checked = 0
    for b0 in digits:
        strip = BranchStrip(a, da, x1, x2, int(b0), int(N), check=not stress)
        for k in range(m):
            db = Fraction(k, m - 1)
            b = da / N * (b0 + db)
            for xi in (x1, x2):
                eta, tau = xi * (1 + a * a + a * b), -xi * b
                s = -xi * (a + b)
                if (eta, tau) != (xi - a * s, a * xi + s):
                    raise ArithmeticError("endpoint formula disagrees with the coordinate change")
                checked += 1
                if not strip.contains(eta, tau):
                    violations.append({"b0": int(b0), "delta_b": db, "xi": xi, "eta": eta, "tau": tau})
    return ContainmentReport(checked, violations, bool(stress))


@dataclass
class BushCover:
    j: int
    epsilon: float
    N: int
    pieces: list
    strips: list
    sampled: int
    uncovered: int
    branch_multiplicity: int
    union_multiplicity: int

    @property
    def count(self):
        return len(self.pieces)

    def scaling_exponent(self):
        """``log count / log N`` for comparison with ``2 + j eps``."""
        return math.log(self.count) / math.log(self.N)


def bush_cover(j, epsilon, N, tree, samples=2000, random_state=0):
    """Cover ``K^eps_j`` by sets ``K^0_j[a0, xi1, xi2]`` and verify by sampling.

    ``xi``-strips are geometric, ``xi2 = xi1 (1 + 1/N)``, from ``N^j / 2`` past
    ``4 N^{j+2}``.  For each strip the shifts ``a0`` run over ``N^-j / 2``
    multiples with ``|a0| <= 2 N^{j eps} / xi1 + N^-j``.

    ``branch_multiplicity`` counts, for a sampled point of ``K^eps_{j,a}``, the
    pieces whose own ``a``-component contains it (the overlap that matters for
    the partition of unity); ``union_multiplicity`` counts pieces whose full
    union contains it.
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    if tree.N != N or tree.depth < j:
        raise ValueError("tree must have base N and depth >= j")
    Nj = float(N) ** j
    h = 0.5 / Nj
    strips = []
    x1 = 0.5 * Nj
    while x1 <= 4.0 * float(N) ** (j + 2):
        strips.append((x1, x1 * (1 + 1.0 / N)))
        x1 *= 1 + 1.0 / N
    pieces = []
    for x1, x2 in strips:
        R = 2.0 * Nj ** epsilon / x1 + 1.0 / Nj
        m = int(math.floor(R / h))
        for i in range(-m, m + 1):
            pieces.append((i * h, x1, x2))

    rng = check_random_state(random_state)
    pos = tree.positions(j)
    lo_xi, hi_xi = 0.5 * Nj, 4.0 * float(N) ** (j + 2)
    branch_mult = union_mult = uncovered = 0
    edges = np.array([s[0] for s in strips] + [strips[-1][1]])
    for _ in range(samples):
        a = pos[rng.randint(len(pos))]
        xi = math.exp(rng.uniform(math.log(lo_xi), math.log(hi_xi))) * (1 if rng.random() < 0.5 else -1)
        s = -a * xi + rng.uniform(-2, 2) * Nj ** epsilon
        sigma = -s / xi
        ax = abs(xi)
        i_hi = np.searchsorted(edges, ax, side="right")
        cand = [k for k in (i_hi - 2, i_hi - 1) if 0 <= k < len(strips) and strips[k][0] <= ax <= strips[k][1]]
        own = 0
        union = 0
        for k in cand:
            x1 = strips[k][0]
            R = 2.0 * Nj ** epsilon / x1 + 1.0 / Nj
            m = int(math.floor(R / h))
            a0 = np.arange(-m, m + 1) * h
            d = sigma - a0 - a
            own += int(np.sum((d >= -1e-12) & (d <= 1.0 / Nj + 1e-12)))
            # union membership: sigma - a0 lands in some [a', a' + N^-j]
            rel = sigma - a0
            idx = np.searchsorted(pos, rel, side="right") - 1
            ok = idx >= 0
            ok[ok] &= rel[ok] - pos[idx[ok]] <= 1.0 / Nj + 1e-12
            # also count the left neighbour when rel sits exactly on a shared endpoint
            union += int(ok.sum())
        if own == 0:
            uncovered += 1
        branch_mult = max(branch_mult, own)
        union_mult = max(union_mult, union)
    return BushCover(j, float(epsilon), N, pieces, strips, samples, uncovered, branch_mult, union_mult)


# ---------------------------------------------------------------------------
# branch lattices and trials

_BUMP = BumpSpec(0.25, 0.5)


def _bump(u):
    """Smooth bump supported in ``[0, 1]``, equal to 1 on ``[1/4, 3/4]``."""
    return smooth_cutoff(_BUMP, np.asarray(u, dtype=float) - 0.5)


def _sub_profiles(u, n_sub):
    u = np.asarray(u, dtype=float)
    return np.array([_bump(n_sub * u - m) for m in range(n_sub)]).reshape(n_sub, u.size)


@dataclass
class BranchLattice:
    """Branch-indexed lattice frequencies with fixed profiles.

    Frequencies are ``index / period``.  ``kind`` is ``"interval"`` (1D,
    branch ``a`` declared on ``a + [0, 2]``) or ``"bush"`` (2D, branch on
    ``xi1 <= xi <= xi2`` and ``-s/xi`` in ``offset + scale [pos, pos + N^-k]``).
    In line mode (``line_xi`` set) bush indices are ``s``-indices on the single
    line ``xi = line_xi``.
    """

    kind: str
    period: float
    labels: tuple
    indices: tuple
    profiles: tuple
    bounds: tuple
    depth: int = 1
    N: int = None
    tile: float = None
    line_xi: float = None
    meta: dict = field(default_factory=dict)

    @property
    def n_branches(self):
        return len(self.labels)

    @property
    def n_sub(self):
        return self.profiles[0].shape[0]

    @property
    def dim(self):
        if self.kind == "interval" or self.line_xi is not None:
            return 1
        return 2

    def groups(self, level):
        """Finest-branch indices grouped by their level-``level`` ancestor."""
        if self.kind == "interval" or level == self.depth:
            return [[i] for i in range(self.n_branches)]
        if not 1 <= level <= self.depth:
            raise ValueError(f"level must be in 1..{self.depth}")
        div = self.N ** (self.depth - level)
        out = {}
        for i, lab in enumerate(self.labels):
            out.setdefault(lab // div, []).append(i)
        return [out[k] for k in sorted(out)]

    def frequencies(self, b):
        """Real frequencies of branch ``b``; shape ``(m,)`` or ``(m, 2)``."""
        idx = self.indices[b]
        if self.dim == 1 and self.line_xi is None:
            return idx / self.period
        if self.line_xi is not None:
            return np.column_stack([np.full(idx.size, self.line_xi), idx / self.period])
        return idx / self.period

    def in_region(self, b, freqs, tol=1e-9):
        """Declared-region membership of frequencies for branch ``b``."""
        freqs = np.asarray(freqs, dtype=float)
        if self.kind == "interval":
            lo, hi = self.bounds[b]
            return (freqs >= lo - tol) & (freqs <= hi + tol)
        sig_lo, sig_hi, xi_lo, xi_hi = self.bounds[b]
        xi, s = freqs[:, 0], freqs[:, 1]
        sigma = -s / xi
        rel = tol * max(1.0, abs(sig_hi))
        return (xi >= xi_lo * (1 - tol)) & (xi <= xi_hi * (1 + tol)) & (sigma >= sig_lo - rel) & (sigma <= sig_hi + rel)


def single_step_family(S, n_sub=2, period=8.0, span=1.0, profile="bump"):
    """Lattice for the 1D single-step estimate: branch ``a`` in ``a + [0, 2]``.

    Profiles occupy ``a + [0, span]``; the default ``span = 1`` keeps the
    branches spectrally disjoint.  ``profile="delta"`` puts one unit
    coefficient at the frequency ``a`` itself.
    """
    digits = tuple(S.elements) if isinstance(S, DigitSet) else tuple(sorted(int(s) for s in S))
    if not 0 < span <= 2:
        raise ValueError("span must lie in (0, 2]")
    P = float(period)
    labels, indices, profiles, bounds = [], [], [], []
    for a in digits:
        if profile == "delta":
            idx = np.array([int(round(a * P))])
            prof = np.ones((1, 1))
        elif profile == "bump":
            m = np.arange(0, int(round(span * P)) + 1)
            u = m / (span * P)
            prof = _sub_profiles(u, n_sub)
            keep = np.any(prof != 0, axis=0)
            idx = int(round(a * P)) + m[keep]
            prof = prof[:, keep]
        else:
            raise ValueError(f"unknown profile {profile!r}")
        labels.append(int(a))
        indices.append(idx)
        profiles.append(prof)
        bounds.append((float(a), float(a) + 2.0))
    return BranchLattice("interval", P, tuple(labels), tuple(indices), tuple(profiles), tuple(bounds),
                         meta={"span": span, "profile": profile})


def _xi_lines(xi1, xi2, W, count):
    lo, hi = int(math.ceil(xi1 * W - 1e-9)), int(math.floor(xi2 * W + 1e-9))
    all_lines = np.arange(lo, hi + 1)
    if count is None or count >= all_lines.size:
        return all_lines
    if count == 1:
        return np.array([int(round(0.5 * (lo + hi)))])
    pick = np.unique(np.round(np.linspace(lo, hi, count + 2)[1:-1]).astype(int))
    return pick


def _bush_lattice(tree, k, offset, scale, xi1, xi2, xi_lines, n_sub, kind_meta):
    N = tree.N
    if tree.depth < k:
        raise ValueError(f"tree depth {tree.depth} is below level {k}")
    tile = N / (xi1 * scale)
    W = 4.0 * float(N) ** (k - 1) * tile
    lines = _xi_lines(xi1, xi2, W, xi_lines)
    line_mode = xi_lines == 1
    nums = tree.numerators(k)
    width = scale / float(N) ** k
    labels, indices, profiles, bounds = [], [], [], []
    for M in nums:
        sig_lo = offset + scale * (1.0 + M / float(N) ** k)
        sig_hi = sig_lo + width
        idx_rows, prof_cols = [], []
        for i in lines:
            xi = i / W
            k_lo = int(math.ceil(-xi * sig_hi * W - 1e-9))
            k_hi = int(math.floor(-xi * sig_lo * W + 1e-9))
            ks = np.arange(k_lo, k_hi + 1)
            u = (-(ks / W) / xi - sig_lo) / width
            prof = _sub_profiles(u, n_sub)
            if not line_mode and lines.size > 1:
                v = (xi - xi1) / (xi2 - xi1)
                prof = prof * _bump(v)
            keep = np.any(prof != 0, axis=0)
            if line_mode:
                idx_rows.append(ks[keep])
            else:
                idx_rows.append(np.column_stack([np.full(keep.sum(), i), ks[keep]]))
            prof_cols.append(prof[:, keep])
        idx = np.concatenate(idx_rows) if idx_rows else np.zeros(0, int)
        prof = np.concatenate(prof_cols, axis=1)
        if prof.shape[1] == 0:
            raise ValueError("lattice too coarse: a branch received no frequencies")
        labels.append(int(M))
        indices.append(idx)
        profiles.append(prof)
        bounds.append((sig_lo, sig_hi, xi1, xi2))
    meta = dict(kind_meta, xi1=xi1, xi2=xi2, offset=offset, scale=scale, lines=int(lines.size))
    return BranchLattice("bush", W, tuple(labels), tuple(indices), tuple(profiles), tuple(bounds),
                         depth=k, N=N, tile=tile, line_xi=(lines[0] / W if line_mode else None), meta=meta)


def bush_family(tree, k, a0=0.0, xi1=None, xi2=None, xi_lines=None, n_sub=1):
    """Lattice for the multilevel estimate on ``K^0_k[a0, xi1, xi2]``.

    Finest branches are the level-``k`` nodes.  Tiles have side ``N / xi1``,
    the size on which the first step already decouples, and the lattice
    period is four level-``k`` squares so each finest branch gets about four
    ``s``-frequencies per ``xi``-line.

    Raises
    ------
    ValueError
        If ``xi1`` or ``xi2 - xi1`` violate ``N^k/4 <= xi1 <= 4 N^{k+2}``,
        ``xi1/(2N) <= xi2 - xi1 <= xi1/N``.
    """
    N = tree.N
    xi1 = float(N) ** k if xi1 is None else float(xi1)
    xi2 = xi1 * (1 + 1.0 / N) if xi2 is None else float(xi2)
    Nk = float(N) ** k
    if not 0.25 * Nk <= xi1 <= 4 * Nk * N * N:
        raise ValueError(f"xi1={xi1} outside [N^k/4, 4 N^(k+2)]")
    gap = xi2 - xi1
    if not xi1 / (2 * N) * (1 - 1e-12) <= gap <= xi1 / N * (1 + 1e-12):
        raise ValueError("need xi1/(2N) <= xi2 - xi1 <= xi1/N")
    return _bush_lattice(tree, k, float(a0), 1.0, xi1, xi2, xi_lines, n_sub, {"family": "multilevel", "a0": float(a0)})


def strip_family(tree, a, delta_a, xi1, xi2, xi_lines=None, n_sub=1):
    """Lattice for the strip step on ``K[a, delta_a, xi1, xi2]`` (one level of digits)."""
    a, delta_a, xi1, xi2 = float(a), float(delta_a), float(xi1), float(xi2)
    if not (delta_a > 0 and 0 < xi1 < xi2):
        raise ValueError("need delta_a > 0 and 0 < xi1 < xi2")
    if xi2 - xi1 > xi1 / tree.N * (1 + 1e-12):
        raise ValueError("need xi2 - xi1 <= xi1 / N")
    return _bush_lattice(tree, 1, a - delta_a, delta_a, xi1, xi2, xi_lines, n_sub,
                         {"family": "strip", "a": a, "delta_a": delta_a})


@dataclass
class DecouplingTrial:
    """Coefficients on a branch lattice, with optional synthesized samples.

    The coefficient at the lattice points of branch ``b`` is
    ``(amplitudes[b] @ profiles[b]) * phases[b]``.
    """

    lattice: BranchLattice
    amplitudes: np.ndarray
    phases: tuple
    ratio: float = None
    g: object = None
    pieces: list = None
    info: dict = field(default_factory=dict)

    def coefficients(self, b):
        return (self.amplitudes[b] @ self.lattice.profiles[b]) * self.phases[b]

    def polynomial(self, branches):
        """Integer indices and coefficients of ``sum_{b in branches} g_b``."""
        idx = np.concatenate([self.lattice.indices[b] for b in branches])
        coef = np.concatenate([self.coefficients(b) for b in branches])
        if idx.ndim == 1:
            idx = idx[:, None]
        return idx, coef

    def with_amplitudes(self, amplitudes):
        return DecouplingTrial(self.lattice, np.asarray(amplitudes, dtype=complex), self.phases)

    def evaluate(self, points, branches=None):
        """Direct trigonometric sum at arbitrary points (no FFT)."""
        lat = self.lattice
        branches = range(lat.n_branches) if branches is None else branches
        pts = np.asarray(points, dtype=float)
        idx, coef = self.polynomial(list(branches))
        if lat.dim == 1 and lat.line_xi is None:
            return np.exp(2j * math.pi * np.outer(pts, idx[:, 0] / lat.period)) @ coef
        pts = np.atleast_2d(pts)
        if lat.line_xi is not None:
            phase = np.outer(pts[:, 1], idx[:, 0] / lat.period)
            return np.exp(2j * math.pi * lat.line_xi * pts[:, 0]) * (np.exp(2j * math.pi * phase) @ coef)
        freqs = idx / lat.period
        return np.exp(2j * math.pi * (pts @ freqs.T)) @ coef


def _trial(lattice, amplitudes, phases):
    return DecouplingTrial(lattice, np.asarray(amplitudes, dtype=complex), tuple(phases))


def random_trial(lattice, random_state=None):
    """Complex Gaussian sub-bump amplitudes with independent random phases per frequency."""
    rng = check_random_state(random_state)
    amp = rng.normal(size=(lattice.n_branches, lattice.n_sub)) + 1j * rng.normal(size=(lattice.n_branches, lattice.n_sub))
    phases = [np.exp(2j * math.pi * rng.random(len(ix))) for ix in lattice.indices]
    return _trial(lattice, amp, phases)


def unit_trial(lattice, active=None):
    """All amplitudes one (or only on ``active`` branch positions), no phases."""
    amp = np.zeros((lattice.n_branches, lattice.n_sub), dtype=complex)
    rows = range(lattice.n_branches) if active is None else active
    for b in rows:
        amp[b] = 1.0
    return _trial(lattice, amp, [np.ones(len(ix)) for ix in lattice.indices])


# ---------------------------------------------------------------------------
# exact weighted integrals of |f|^p


def _is_even_integer(p):
    return float(p).is_integer() and int(p) % 2 == 0


def _moment_spectrum(idx, coef, p, align=None, oversample=4):
    """Fourier coefficients of ``|f|^p`` on the smallest adequate FFT grid.

    ``f = sum coef e(idx . z / P)`` is demodulated first, which leaves ``|f|``
    unchanged.  For even ``p`` the result is exact; otherwise the grid is
    oversampled and the coefficients carry aliasing error.

    Returns
    -------
    freqs : list of int arrays
        Signed frequency indices per axis (FFT order).
    fhat : ndarray
        Coefficients ``F_m`` with ``|f|^p = sum F_m e(m . z / P)``.
    """
    idx = np.asarray(idx)
    d = idx.shape[1]
    lo = idx.min(axis=0)
    span = idx.max(axis=0) - lo
    factor = p if _is_even_integer(p) else oversample * p
    shape = []
    for ax in range(d):
        need = int(math.ceil(factor * span[ax])) + 1
        a = 1 if align is None else int(align[ax])
        shape.append(a * next_fast_len(int(math.ceil(need / a))))
    grid = np.zeros(shape, dtype=complex)
    np.add.at(grid, tuple((idx - lo).T), coef)
    f = ifftn(grid) * grid.size
    F = np.abs(f) ** p
    fhat = fftn(F) / F.size
    freqs = [np.round(np.fft.fftfreq(n) * n).astype(np.int64) for n in shape]
    return freqs, fhat


def _box_hat_on(freqs, period, box, marginal):
    if box.dim == 1 or marginal:
        return _centered_hat(box, freqs[0] / period, marginal=marginal)
    zx = freqs[0][:, None] / period
    zt = freqs[1][None, :] / period
    return _centered_hat(box, (zx, zt))


def _weighted_at(freqs, fhat, period, box, marginal):
    """``int |f|^p w_box`` for a single box; ``box.center`` may be anywhere."""
    hat = _box_hat_on(freqs, period, box, marginal)
    if box.dim == 1 or marginal:
        c = box.center[-1]
        phase = np.exp(2j * math.pi * freqs[0] * c / period)
    else:
        phase = np.exp(2j * math.pi * (freqs[0][:, None] * box.center[0] + freqs[1][None, :] * box.center[1]) / period)
    return float(np.real(np.sum(fhat * hat * phase)))


def _tile_integrals(freqs, fhat, period, half, exponent, marginal):
    """``int |f|^p w_S`` for boxes of half-width ``half`` centered at every grid point."""
    d = 2 if marginal else fhat.ndim
    box = WeightBox((0.0,) * d, (half,) * d, exponent)
    hat = _box_hat_on(freqs, period, box, marginal)
    return np.real(ifftn(fhat * hat) * fhat.size)


def _lp_moment(trial, branches, p, box, marginal):
    idx, coef = trial.polynomial(branches)
    freqs, fhat = _moment_spectrum(idx, coef, p)
    return _weighted_at(freqs, fhat, trial.lattice.period, box, marginal)


def _default_box(lattice, half=None):
    if lattice.kind == "interval":
        return WeightBox((0.0,), (0.5 if half is None else half,))
    h = 0.5 * lattice.tile if half is None else half
    return WeightBox((0.0, 0.0), (h, h))


def single_step_ratio(trial, box=None, p=4):
    """``||h||_{L^p(w)} / (sum_a ||h_a||^2_{L^p(w)})^{1/2}`` at the branch level.

    The default box is the 1-interval ``[-1/2, 1/2]`` for 1D lattices and the
    tile square centered at the origin for strip lattices.

    Raises
    ------
    ValueError
        If every branch of the trial vanishes.
    """
    lat = trial.lattice
    box = _default_box(lat) if box is None else box
    marginal = lat.line_xi is not None
    level = lat.depth if lat.kind == "bush" else 1
    groups = lat.groups(level)
    num = _lp_moment(trial, list(range(lat.n_branches)), p, box, marginal)
    den = 0.0
    for g in groups:
        if not np.any(np.concatenate([trial.coefficients(b) for b in g]) != 0):
            continue
        den += max(_lp_moment(trial, g, p, box, marginal), 0.0) ** (2.0 / p)
    if den == 0:
        raise ValueError("all-zero trial")
    return float(max(num, 0.0) ** (1.0 / p) / math.sqrt(den))


def _columns(lattice, k):
    return lattice.N ** (k - 1)


def multilevel_ratios(trial, p=4, levels=None):
    """Per-level ratios of the multilevel inequality.

    For level ``k`` the left side is ``(sum_S ||g||^p_{L^p(w_S)})^{1/p}`` over
    the tile squares ``S`` tiling ``Q_k`` (side ``N^{k-1}`` tiles, centered at
    the origin); the right side is ``(sum_a ||g_{k,a}||^2_{L^p(w_{Q_k})})^{1/2}``
    over level-``k`` pieces.

    Returns
    -------
    dict
        ``{k: ratio}``.
    """
    lat = trial.lattice
    if lat.kind != "bush":
        raise ValueError("multilevel ratios need a bush lattice")
    levels = range(1, lat.depth + 1) if levels is None else levels
    marginal = lat.line_xi is not None
    L = lat.tile
    n_across = int(round(lat.period / L))
    d = 1 if marginal else 2
    idx, coef = trial.polynomial(list(range(lat.n_branches)))
    freqs, fhat = _moment_spectrum(idx, coef, p, align=(2 * n_across,) * d)
    # tile weight integrals at every grid point, then pick tile centers
    vals = _tile_integrals(freqs, fhat, lat.period, 0.5 * L, 100.0, marginal)
    out = {}
    for k in levels:
        m = N_k = lat.N ** (k - 1)
        offs = (np.arange(m) - 0.5 * (m - 1)) * L
        steps = [lat.period / n for n in fhat.shape]
        pos = [np.round(offs / s).astype(int) % n for s, n in zip(steps, fhat.shape)]
        if marginal:
            lhs = float(np.sum(vals[pos[0]])) * _columns(lat, k)
        else:
            lhs = float(np.sum(vals[np.ix_(pos[0], pos[1])]))
        h = 0.5 * N_k * L
        box = WeightBox((0.0, 0.0), (h, h))
        rhs = 0.0
        for g in lat.groups(k):
            rhs += max(_lp_moment(trial, g, p, box, marginal), 0.0) ** (2.0 / p)
        if rhs == 0:
            raise ValueError("all-zero trial")
        out[k] = float(max(lhs, 0.0) ** (1.0 / p) / math.sqrt(rhs))
    return out


def global_ratio(trial, p=4, level=None):
    """Unweighted ratio ``||G||_p / (sum_a ||G_a||_p^2)^{1/2}`` over one period.

    Pieces are the level-``level`` groups (finest branches by default).

    Raises
    ------
    ValueError
        If the trial vanishes.
    """
    lat = trial.lattice
    level = lat.depth if level is None else level

    def norm_p(branches):
        idx, coef = trial.polynomial(branches)
        if not np.any(coef != 0):
            return 0.0
        _, fhat = _moment_spectrum(idx, coef, p)
        # mean of |f|^p; the period factor cancels in the ratio
        return max(float(np.real(fhat.flat[0])), 0.0) ** (1.0 / p)

    num = norm_p(list(range(lat.n_branches)))
    den = math.sqrt(sum(norm_p(g) ** 2 for g in lat.groups(level)))
    if den == 0:
        raise ValueError("all-zero trial")
    return num / den


# ---------------------------------------------------------------------------
# synthesis and checks


def synthesize_branch_function(lattice, trial_or_amplitudes=None, n=None, random_state=None):
    """Sample ``g`` and every branch piece ``g_b`` over one period.

    ``trial_or_amplitudes`` may be a :class:`DecouplingTrial`, an amplitude
    array (unit phases) or None for a random trial.  ``n`` is the number of
    samples per axis (``t`` only in line mode).

    Raises
    ------
    ValueError
        If ``n`` does not exceed twice the largest frequency index.
    """
    if isinstance(trial_or_amplitudes, DecouplingTrial):
        trial = trial_or_amplitudes
    elif trial_or_amplitudes is None:
        trial = random_trial(lattice, random_state)
    else:
        trial = _trial(lattice, trial_or_amplitudes, [np.ones(len(ix)) for ix in lattice.indices])
    allidx = np.concatenate([np.atleast_2d(np.asarray(ix).reshape(len(ix), -1)) for ix in lattice.indices])
    top = int(np.abs(allidx).max())
    d = allidx.shape[1]
    n = 2 * top + 2 if n is None else int(n)
    if n <= 2 * top:
        raise ValueError(f"grid of {n} samples cannot resolve frequency index {top}")
    P = lattice.period
    pieces = []
    for b in range(lattice.n_branches):
        grid = np.zeros((n,) * d, dtype=complex)
        ix = np.asarray(lattice.indices[b]).reshape(len(lattice.indices[b]), -1) % n
        np.add.at(grid, tuple(ix.T), trial.coefficients(b))
        pieces.append(ifftn(grid) * grid.size)
    total = np.sum(pieces, axis=0)
    if d == 1:
        wrap = lambda v: GridFunction1D(0.0, P / n, v, "t" if lattice.line_xi is not None else "x")
    else:
        wrap = lambda v: GridFunction2D((0.0, 0.0), (P / n, P / n), v)
    out = DecouplingTrial(lattice, trial.amplitudes, trial.phases, trial.ratio, wrap(total), [wrap(v) for v in pieces])
    out.info["sum_defect"] = float(np.max(np.abs(total - np.sum(pieces, axis=0)))) if pieces else 0.0
    return out


def spectral_mask_check(trial, tol=1e-20):
    """Confirm every branch's spectrum sits inside its declared region.

    The lattice frequencies with nonzero coefficient are tested directly.  If
    sampled pieces are attached, their FFT energy off the declared lattice
    support is also measured.

    Returns
    -------
    dict
        ``{"ok": bool, "outside_points": int, "leak": float}``.
    """
    lat = trial.lattice
    outside = 0
    for b in range(lat.n_branches):
        c = trial.coefficients(b)
        f = lat.frequencies(b)[c != 0]
        if f.size:
            outside += int(np.sum(~lat.in_region(b, f)))
    leak = 0.0
    if trial.pieces is not None:
        for b, piece in enumerate(trial.pieces):
            arr = piece.samples
            spec = fftn(arr) / arr.size
            mask = np.zeros(arr.shape, dtype=bool)
            ix = np.asarray(lat.indices[b]).reshape(len(lat.indices[b]), -1) % arr.shape[0]
            mask[tuple(ix.T)] = True
            total = float(np.sum(np.abs(spec) ** 2))
            if total > 0:
                leak = max(leak, float(np.sum(np.abs(spec[~mask]) ** 2)) / total)
    return {"ok": outside == 0 and leak <= tol, "outside_points": outside, "leak": leak}


# ---------------------------------------------------------------------------
# extremizer search


def _objective(kind, p):
    if callable(kind):
        return kind
    if kind == "single":
        return lambda t: single_step_ratio(t, p=p)
    if kind == "global":
        return lambda t: global_ratio(t, p=p)
    if isinstance(kind, str) and kind.startswith("level:"):
        k = int(kind.split(":")[1])
        return lambda t: multilevel_ratios(t, p=p, levels=[k])[k]
    raise ValueError(f"unknown objective {kind!r}")


def extremizer_ascent(trial, steps=30, p=4, objective="single", fd_step=1e-6, patience=3):
    """Projected gradient ascent on per-branch complex multipliers.

    The ratio is invariant under scaling, so the multipliers are kept on the
    unit sphere.  Gradients are central finite differences; a step is only
    accepted if it increases the ratio, so the result is never below the
    starting value.  ``info["stagnated"]`` is set when ``patience``
    consecutive line searches fail.
    """
    f = _objective(objective, p)
    nb = trial.lattice.n_branches
    base = trial.amplitudes.copy()
    active = np.array([np.any(base[b] != 0) for b in range(nb)])

    def build(x):
        c = x[:nb] + 1j * x[nb:]
        return trial.with_amplitudes(base * c[:, None])

    x = np.concatenate([active.astype(float), np.zeros(nb)])
    x /= np.linalg.norm(x)
    best = f(build(x))
    start = best
    history = [best]
    fails = 0
    for _ in range(int(steps)):
        grad = np.zeros_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = fd_step
            grad[i] = (f(build(x + e)) - f(build(x - e))) / (2 * fd_step)
        grad -= np.dot(grad, x) * x
        gn = np.linalg.norm(grad)
        if gn < 1e-12:
            fails = patience
            break
        eta = 0.5
        improved = False
        for _ in range(12):
            y = x + eta * grad / gn
            y /= np.linalg.norm(y)
            val = f(build(y))
            if val > best:
                x, best, improved = y, val, True
                break
            eta *= 0.5
        history.append(best)
        fails = 0 if improved else fails + 1
        if fails >= patience:
            break
    out = build(x)
    out.ratio = best
    out.info.update(start=start, history=history, stagnated=fails >= patience)
    return out


# ---------------------------------------------------------------------------
# experiments


@dataclass
class SingleStepReport:
    digits: tuple
    N: int
    p: float
    unit_ratio: float
    random_ratios: np.ndarray
    ascent_ratios: np.ndarray
    C1: float

    def rows(self):
        return [{"N": self.N, "n": len(self.digits), "p": self.p, "unit_ratio": self.unit_ratio,
                 "random_max": float(np.max(self.random_ratios)) if self.random_ratios.size else float("nan"),
                 "ascent_max": float(np.max(self.ascent_ratios)) if self.ascent_ratios.size else float("nan"),
                 "C1": self.C1}]


def single_step_experiment(S, p=4, trials=200, ascent_trials=50, ascent_steps=10, random_state=0, n_sub=2):
    """Largest single-step ratio over random and ascent-refined trials (``C1*``)."""
    rng = check_random_state(random_state)
    lat = single_step_family(S, n_sub=n_sub)
    unit = single_step_ratio(unit_trial(lat), p=p)
    rand = []
    starts = []
    for _ in range(int(trials)):
        t = random_trial(lat, rng)
        r = single_step_ratio(t, p=p)
        rand.append(r)
        starts.append((r, t))
    # refine the best random starts first, then fresh ones
    starts.sort(key=lambda rt: -rt[0])
    asc = []
    for i in range(int(ascent_trials)):
        t = starts[i][1] if i < len(starts) else random_trial(lat, rng)
        asc.append(extremizer_ascent(t, steps=ascent_steps, p=p).ratio)
    digits = tuple(S.elements) if isinstance(S, DigitSet) else tuple(S)
    N = S.N if isinstance(S, DigitSet) else max(digits) + 2
    allr = np.concatenate([rand, asc, [unit]])
    return SingleStepReport(digits, N, float(p), unit, np.array(rand), np.array(asc), float(np.max(allr)))


def weight_compare_log10(N, k, exponent=100.0, samples=41):
    """``log10 sup (sum_{S in T(Q_k)} w_S) / w_{Q_k}`` for unit tiles.

    Sample coordinates are the three outermost tile centers on each side, a
    uniform grid over twice ``Q_k`` and a few points just outside it; tiles
    more than 12 widths from a sample point are dropped.  At ``k = 1`` the
    tiling is trivial and the value is 0.
    """
    m = N ** (k - 1)
    if m == 1:
        return 0.0
    offs = np.arange(m) - 0.5 * (m - 1)
    edge = np.concatenate([offs[:3], offs[-3:], 0.5 * m + np.arange(4), -0.5 * m - np.arange(4)])
    coords = np.unique(np.concatenate([edge, np.linspace(-m, m, samples)]))
    near = np.arange(-TRUNCATION_WIDTHS, TRUNCATION_WIDTHS + 1)
    best = -np.inf
    for x in coords:
        ix = np.unique(np.clip(np.round(x + 0.5 * (m - 1)).astype(int) + near, 0, m - 1))
        cx = offs[ix]
        for t in coords:
            it = np.unique(np.clip(np.round(t + 0.5 * (m - 1)).astype(int) + near, 0, m - 1))
            ct = offs[it]
            ds = np.hypot(x - cx[:, None], t - ct[None, :]) / 0.5
            log_s = logsumexp(-exponent * np.log1p(ds))
            log_q = -exponent * math.log1p(math.hypot(x, t) / (0.5 * m))
            best = max(best, float(log_s - log_q))
    return best / math.log(10)


@dataclass
class DecouplingReport:
    """Measured per-level ratios and constants of the multilevel estimate.

    ``C2`` is the largest level-to-level growth factor, ``C3`` the largest
    squared level-1 ratio (the strip step), ``log10_C4`` the weight-compare
    constant for the deepest level; ``C1`` is filled in when a single-step
    measurement accompanies the run.
    """

    N: int
    p: float
    k_max: int
    trials: int
    per_level: dict
    growth: dict
    C2: float
    C3: float
    log10_C4: float
    C1: float = None
    line_mode: bool = False
    all_ratios: dict = field(default_factory=dict)

    def rows(self):
        rows = []
        for k, r in sorted(self.per_level.items()):
            rows.append({"N": self.N, "p": self.p, "k": k, "max_ratio": r, "growth": self.growth.get(k, float("nan")),
                         "trials": self.trials, "line_mode": self.line_mode})
        return rows


def multilevel_experiment(tree, k_max, trials=10, p=4, a0=0.0, xi1=None, xi2=None, xi_lines=None,
                          random_state=0, ascent_steps=0, n_sub=1):
    """Max multilevel ratios per level over random (optionally ascent-refined) trials.

    ``xi_lines=1`` selects the single-line reduction, needed once
    ``N^{k_max - 1}`` gets large; ``None`` uses every lattice line.
    """
    if not 1 <= k_max <= tree.depth:
        raise ValueError("k_max must lie in 1..depth")
    rng = check_random_state(random_state)
    lat = bush_family(tree, k_max, a0=a0, xi1=xi1, xi2=xi2, xi_lines=xi_lines, n_sub=n_sub)
    ratios = {k: [] for k in range(1, k_max + 1)}
    for _ in range(int(trials)):
        t = random_trial(lat, rng)
        if ascent_steps:
            t = extremizer_ascent(t, steps=ascent_steps, p=p, objective=f"level:{k_max}")
        for k, r in multilevel_ratios(t, p=p).items():
            ratios[k].append(r)
    per_level = {k: float(max(v)) for k, v in ratios.items()}
    growth = {k: per_level[k + 1] / per_level[k] for k in range(1, k_max)}
    C2 = max(growth.values()) if growth else float("nan")
    C3 = per_level[1] ** 2
    return DecouplingReport(tree.N, float(p), k_max, int(trials), per_level, growth, C2, C3,
                            weight_compare_log10(tree.N, k_max), line_mode=lat.line_xi is not None,
                            all_ratios={k: np.array(v) for k, v in ratios.items()})
