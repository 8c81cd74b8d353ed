"""Box counts for unions of scaled Cantor copies ``x + t(x) E_j``.

Everything is exact: base points and scales are converted to Fractions (a
float is already a dyadic rational, so the conversion loses nothing) and a
level-``j`` N-adic interval ``[k N^-j, (k+1) N^-j]`` is counted when its
interior meets the set.  With that convention ``E_j`` itself is covered by
exactly ``N0^j`` intervals.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import as_fraction, check_random_state

__all__ = [
    "NadicCover",
    "ScaledCopyFamily",
    "DimensionEstimate",
    "build_union_cover",
    "midpoint_cover",
    "cover_points",
    "cantor_cover",
    "grid_family",
    "neighborhood_ratio",
    "calibrated_ratios",
    "minkowski_estimate",
]


@dataclass(frozen=True)
class NadicCover:
    """Sorted distinct indices ``k`` of level-``j`` intervals ``[k, k+1] N^-j``."""

    N: int
    level: int
    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(set(int(k) for k in self.indices)))
        if len(idx) != len(self.indices):
            raise ValueError("cover indices must be distinct")
        object.__setattr__(self, "indices", idx)

    @property
    def count(self):
        return len(self.indices)

    @property
    def measure(self):
        return self.count / float(self.N) ** self.level

    def shifted(self, m):
        """Translate by ``m`` level-``j`` cells."""
        return NadicCover(self.N, self.level, tuple(k + int(m) for k in self.indices))


@dataclass
class ScaledCopyFamily:
    """Finite family ``{x + t(x) E_j : x in Y}``."""

    points: tuple
    scales: tuple
    tree: object
    level: int

    def __post_init__(self):
        self.points = tuple(as_fraction(x) for x in self.points)
        self.scales = tuple(as_fraction(t) for t in self.scales)
        if len(self.points) != len(self.scales):
            raise ValueError("one scale per base point")
        if any(t <= 0 for t in self.scales):
            raise ValueError("scales must be positive")
        if not 0 <= self.level <= self.tree.depth:
            raise ValueError(f"level must lie in 0..{self.tree.depth}")

    def at_level(self, j):
        return ScaledCopyFamily(self.points, self.scales, self.tree, j)

    def pieces(self):
        """Exact closed intervals ``x + t [a, a + N^-j]`` making up the union."""
        N, j = self.tree.N, self.level
        den = N ** j
        nums = self.tree.numerators(j)
        out = []
        for x, t in zip(self.points, self.scales):
            for M in nums:
                lo = x + t * (1 + Fraction(M, den))
                out.append((lo, lo + t / den))
        return out


def _interior_hits(lo, hi, den):
    """Indices ``k`` with ``(k/den, (k+1)/den)`` meeting ``[lo, hi]``."""
    return range(math.floor(lo * den), math.ceil(hi * den))


def build_union_cover(family):
    """Level-``j`` N-adic intervals whose interiors meet ``U (x + t(x) E_j)``."""
    den = family.tree.N ** family.level
    hit = set()
    for lo, hi in family.pieces():
        hit.update(_interior_hits(lo, hi, den))
    return NadicCover(family.tree.N, family.level, tuple(hit))


def midpoint_cover(family):
    """Independent oracle: a cell counts when its midpoint is within half a cell of the set.

    Each candidate midpoint near a piece is tested with an exact distance
    comparison rather than the index arithmetic of :func:`build_union_cover`.
    """
    den = family.tree.N ** family.level
    half = Fraction(1, 2 * den)
    hit = set()
    for lo, hi in family.pieces():
        for k in range(math.floor(lo * den) - 2, math.ceil(hi * den) + 2):
            m = Fraction(2 * k + 1, 2 * den)
            dist = lo - m if m < lo else (m - hi if m > hi else Fraction(0))
            if dist < half:
                hit.add(k)
    return NadicCover(family.tree.N, family.level, tuple(hit))


def cover_points(points, N, j):
    """Cells ``[k, k+1) N^-j`` containing at least one of the points."""
    den = N ** j
    return NadicCover(N, j, tuple({math.floor(as_fraction(x) * den) for x in points}))


def cantor_cover(tree, j):
    """The cover of ``E_j``: exactly its own ``N0^j`` cells."""
    return NadicCover(tree.N, j, tuple(tree.N ** j + M for M in tree.numerators(j)))


def grid_family(tree, j, n_points=64, t_range=(1, 2), random_state=0, denominator=997):
    """``Y = {i/(n-1)}`` with random rational scales ``t in t_range``."""
    rng = check_random_state(random_state)
    lo, hi = (as_fraction(v) for v in t_range)
    pts = [Fraction(i, n_points - 1) for i in range(n_points)]
    scales = [lo + (hi - lo) * Fraction(int(rng.randint(0, denominator + 1)), denominator) for _ in pts]
    return ScaledCopyFamily(pts, scales, tree, j)


def neighborhood_ratio(X, Y, delta, p, calibration=None):
    """``|X_j| / (N^{-j delta p} |Y_j|)`` and whether it reaches ``calibration``.

    With ``calibration=None`` the ratio is its own threshold (the smallest
    level calibrates the constant).

    Raises
    ------
    ValueError
        If ``Y`` is empty or the covers live on different levels.
    """
    if X.level != Y.level or X.N != Y.N:
        raise ValueError("covers must share N and level")
    if Y.count == 0:
        raise ValueError("empty Y cover")
    j = X.level
    ratio = X.measure / (float(X.N) ** (-j * delta * p) * Y.measure)
    c = ratio if calibration is None else calibration
    return ratio, bool(ratio >= c * (1 - 1e-12))


def calibrated_ratios(X_covers, Y_covers, delta, p):
    """Ratios per level with the constant fixed at the smallest level.

    Returns
    -------
    list of dict
        One row per level: ``level``, ``ratio``, ``threshold``, ``passed``.
    """
    rows = []
    c = None
    for X, Y in zip(X_covers, Y_covers):
        r, ok = neighborhood_ratio(X, Y, delta, p, c)
        if c is None:
            c = r
        rows.append({"level": X.level, "ratio": r, "threshold": c, "passed": ok})
    return rows


@dataclass
class DimensionEstimate:
    levels: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    residual: float
    degenerate: bool = False
    N: int = None

    def at_least(self, other, delta):
        """``dim(self) >= dim(other) - delta`` on the estimates."""
        return self.slope >= other.slope - delta

    def rows(self):
        return [{"level": int(j), "count": int(c)} for j, c in zip(self.levels, self.counts)]


def minkowski_estimate(covers):
    """Least-squares slope of ``log count`` against ``j log N``.

    Constant counts are flagged as degenerate (slope 0).

    Raises
    ------
    ValueError
        With fewer than three levels or mixed bases.
    """
    covers = list(covers)
    if len(covers) < 3:
        raise ValueError("need covers on at least three levels")
    N = covers[0].N
    if any(c.N != N for c in covers):
        raise ValueError("covers must share N")
    levels = np.array([c.level for c in covers], dtype=float)
    counts = np.array([c.count for c in covers], dtype=float)
    if np.any(counts == 0):
        raise ValueError("empty cover")
    x = levels * math.log(N)
    y = np.log(counts)
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    degenerate = bool(np.all(counts == counts[0]))
    return DimensionEstimate(levels.astype(int), counts.astype(int), float(coef[0]), float(coef[1]), resid, degenerate, N)
