"""Exact N-adic digit trees for Lambda(p) Cantor sets and their measures.

Level ``j`` of a tree holds the left endpoints ``a = 1 + M N^-j`` of the
``N0**j`` construction intervals ``[a, a + N^-j]``; they are stored as integer
numerators ``M`` so that every position and every measure query is an exact
rational.  ``mu_J`` is the normalized indicator of the level-``J`` union.
"""

import bisect
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import as_fraction
from .lambdap import DigitSet

__all__ = [
    "CantorParams",
    "NodeAddress",
    "CantorTree",
    "FrostmanReport",
    "build_self_similar",
    "build_with_selector",
    "measure_of_interval",
    "ancestor_ratios",
    "frostman_scan",
    "tree_to_json",
    "tree_from_json",
]


@dataclass(frozen=True)
class CantorParams:
    N: int
    N0: int
    p: float = 4.0

    def __post_init__(self):
        if int(self.N) < 2:
            raise ValueError("N must be at least 2")
        if not 1 <= int(self.N0) <= int(self.N) - 1:
            raise ValueError(f"need 1 <= N0 <= N - 1, got N0={self.N0}, N={self.N}")
        if float(self.p) < 2:
            raise ValueError("p must be >= 2")

    @property
    def alpha(self):
        return math.log(self.N0) / math.log(self.N)

    @classmethod
    def for_digits(cls, S, p=4.0):
        return cls(S.N, len(S), p)


@dataclass(frozen=True)
class NodeAddress:
    level: int
    digits: tuple
    numerator: int

    def position(self, N):
        """Left endpoint ``1 + M N^-level`` as a Fraction."""
        return 1 + Fraction(self.numerator, N ** self.level)

    def interval(self, N):
        a = self.position(N)
        return a, a + Fraction(1, N ** self.level)


class CantorTree:
    """Immutable digit tree of depth ``J``.

    Attributes
    ----------
    params : CantorParams
    depth : int
    levels : tuple of tuple of NodeAddress
        ``levels[j]`` lists the level-``j`` nodes in lexicographic digit order.
    selector : str
        Human-readable description of the digit-set rule.
    digit_set : DigitSet or None
        The common digit set when the tree is self-similar.
    """

    def __init__(self, params, levels, selector, digit_set=None):
        self.params = params
        self.levels = tuple(tuple(level) for level in levels)
        self.depth = len(self.levels) - 1
        self.selector = selector
        self.digit_set = digit_set
        self._numerators = tuple(sorted(n.numerator for n in level) for level in self.levels)

    @property
    def N(self):
        return self.params.N

    @property
    def N0(self):
        return self.params.N0

    @property
    def alpha(self):
        return self.params.alpha

    @property
    def self_similar(self):
        return self.digit_set is not None

    def nodes(self, j):
        return self.levels[j]

    def numerators(self, j):
        """Sorted integer numerators of level ``j`` (denominator ``N**j``)."""
        return self._numerators[j]

    def positions(self, j):
        """Float left endpoints of level-``j`` intervals."""
        return 1.0 + np.asarray(self._numerators[j], dtype=float) / float(self.N) ** j

    def children(self, node):
        j = node.level + 1
        lo = node.numerator * self.N
        nums = self._numerators[j]
        i0 = bisect.bisect_left(nums, lo)
        i1 = bisect.bisect_left(nums, lo + self.N)
        keep = set(nums[i0:i1])
        return [n for n in self.levels[j] if n.numerator in keep]

    def node_at(self, j, numerator):
        for n in self.levels[j]:
            if n.numerator == numerator:
                return n
        raise KeyError(f"no level-{j} node with numerator {numerator}")

    def truncate(self, J):
        return CantorTree(self.params, self.levels[: J + 1], self.selector, self.digit_set)

    def __repr__(self):
        return f"CantorTree(N={self.N}, N0={self.N0}, depth={self.depth}, selector={self.selector!r})"


def _check_digits(digits, params):
    digits = tuple(sorted(int(d) for d in digits))
    if len(digits) != params.N0 or len(set(digits)) != len(digits):
        raise ValueError(f"digit set {digits} must have exactly N0={params.N0} distinct elements")
    for d in digits:
        if not 0 <= d <= params.N - 1:
            raise ValueError(f"digit {d} out of range [0, {params.N - 1}]")
        if d == params.N - 1:
            raise ValueError(f"digit N-1={d} is excluded from Cantor digit sets")
    return digits


def build_with_selector(selector, params, J, description=None):
    """Unroll the construction to depth ``J`` with ``selector(node) -> digits``."""
    J = int(J)
    if J < 0:
        raise ValueError("depth J must be >= 0")
    N = params.N
    root = NodeAddress(0, (), 0)
    levels = [[root]]
    for _ in range(J):
        nxt = []
        for node in levels[-1]:
            digits = _check_digits(selector(node), params)
            for d in digits:
                nxt.append(NodeAddress(node.level + 1, node.digits + (d,), node.numerator * N + d))
        levels.append(nxt)
    if description is None:
        description = getattr(selector, "description", None) or getattr(selector, "__name__", repr(selector))
    return CantorTree(params, levels, description)


def build_self_similar(S, params=None, J=1):
    """Self-similar tree with ``S_{j,a} = S`` for every node.

    Raises
    ------
    ValueError
        If a digit is out of range, ``N - 1`` is in ``S`` or ``|S| != N0``.
    """
    if not isinstance(S, DigitSet):
        if params is None:
            raise ValueError("params required when S is not a DigitSet")
        S = DigitSet(params.N, S)
    if params is None:
        params = CantorParams.for_digits(S)
    if S.N != params.N:
        raise ValueError(f"digit set base {S.N} differs from N={params.N}")
    digits = _check_digits(S.elements, params)
    if J < 1:
        raise ValueError("depth J must be >= 1")
    tree = build_with_selector(lambda node: digits, params, J, description=f"constant {list(digits)}")
    tree.digit_set = S
    return tree


def measure_of_interval(tree, J, interval):
    """Exact ``mu_J([l, r])`` with linear credit for partially covered cells."""
    l, r = (as_fraction(v) for v in interval)
    if l > r:
        raise ValueError(f"malformed interval: left {l} > right {r}")
    if J > tree.depth:
        raise ValueError(f"J={J} exceeds tree depth {tree.depth}")
    N, N0 = tree.N, tree.N0
    scale = N ** J
    L = (l - 1) * scale
    R = (r - 1) * scale
    nums = tree.numerators(J)
    lo = math.ceil(L)
    hi = math.floor(R) - 1
    full = 0
    if hi >= lo:
        full = bisect.bisect_right(nums, hi) - bisect.bisect_left(nums, lo)
    partial = Fraction(0)
    candidates = set()
    if L.denominator != 1:
        candidates.add(math.floor(L))
    if R.denominator != 1:
        candidates.add(math.floor(R))
    for M in candidates:
        i = bisect.bisect_left(nums, M)
        if i < len(nums) and nums[i] == M:
            overlap = min(Fraction(M + 1), R) - max(Fraction(M), L)
            if overlap > 0:
                partial += overlap
    return (full + partial) / Fraction(N0 ** J)


def _alpha_power(tree, r):
    """``r**alpha``, exact when ``r`` is an integral power of ``1/N``."""
    r = as_fraction(r)
    if r.numerator == 1:
        j = round(math.log(r.denominator) / math.log(tree.N))
        if tree.N ** j == r.denominator:
            return Fraction(1, tree.N0 ** j)
    return float(r) ** tree.alpha


def ancestor_ratios(tree, J):
    """``mu_J(I) / |I|**alpha`` over every construction interval I of levels 0..J.

    Each value is an exact Fraction; all equal 1 because ``N0**-j = (N**-j)**alpha``.
    """
    out = []
    for j in range(J + 1):
        for node in tree.nodes(j):
            a, b = node.interval(tree.N)
            out.append(measure_of_interval(tree, J, (a, b)) / _alpha_power(tree, Fraction(1, tree.N ** j)))
    return out


@dataclass(frozen=True)
class FrostmanReport:
    J: int
    n_centers: int
    radii: tuple
    ratio_min: float
    ratio_max: float
    implied_constant: float

    def as_row(self):
        return {
            "J": self.J,
            "centers": self.n_centers,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "implied_constant": self.implied_constant,
        }


def frostman_scan(tree, J, radius_grid=None, max_centers=None):
    """Extremes of ``mu_J(B(x, r)) / r**alpha`` over level-J node positions.

    Parameters
    ----------
    tree : CantorTree
    J : int
        Level of the atomic measure and of the sampled centers.
    radius_grid : sequence of rationals, optional
        Radii in ``[N^-J, 1]``; defaults to ``N^-j`` for ``j = 0..J``.
    max_centers : int, optional
        Evenly thin the centers to at most this many.
    """
    N = tree.N
    if radius_grid is None:
        radius_grid = [Fraction(1, N ** j) for j in range(J + 1)]
    radii = tuple(as_fraction(r) for r in radius_grid)
    if not radii:
        raise ValueError("empty radius grid")
    floor = Fraction(1, N ** J)
    for r in radii:
        if not floor <= r <= 1:
            raise ValueError(f"radius {r} outside [N^-J, 1]")
    nodes = tree.nodes(J)
    if max_centers is not None and len(nodes) > max_centers:
        idx = np.linspace(0, len(nodes) - 1, int(max_centers)).round().astype(int)
        nodes = [nodes[i] for i in sorted(set(idx))]
    lo, hi = math.inf, -math.inf
    for r in radii:
        ra = _alpha_power(tree, r)
        for node in nodes:
            x = node.position(N)
            ratio = float(measure_of_interval(tree, J, (x - r, x + r)) / ra)
            lo = min(lo, ratio)
            hi = max(hi, ratio)
    implied = max(1.0 / lo if lo > 0 else math.inf, hi, 1.0)
    return FrostmanReport(J, len(nodes), radii, lo, hi, implied)


def tree_to_json(tree):
    """Serialize params, selector description and per-level digit arrays."""
    doc = {
        "format": "cantorbush.tree/1",
        "params": {"N": tree.N, "N0": tree.N0, "p": tree.params.p, "alpha": tree.alpha},
        "selector": tree.selector,
        "self_similar": tree.self_similar,
        "depth": tree.depth,
        "levels": [[list(n.digits) for n in tree.nodes(j)] for j in range(1, tree.depth + 1)],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def tree_from_json(text):
    doc = json.loads(text)
    if doc.get("format") != "cantorbush.tree/1":
        raise ValueError("not a serialized cantorbush tree")
    P = doc["params"]
    params = CantorParams(int(P["N"]), int(P["N0"]), float(P["p"]))
    N = params.N
    levels = [[NodeAddress(0, (), 0)]]
    for j, level in enumerate(doc["levels"], start=1):
        nodes = []
        for digits in level:
            M = 0
            for d in digits:
                M = M * N + int(d)
            nodes.append(NodeAddress(j, tuple(int(d) for d in digits), M))
        levels.append(nodes)
    digit_set = None
    if doc.get("self_similar") and len(levels) > 1:
        digit_set = DigitSet(N, [n.digits[0] for n in levels[1]])
    tree = CantorTree(params, levels, doc["selector"], digit_set)
    for j in range(tree.depth + 1):
        if len(tree.nodes(j)) != params.N0 ** j:
            raise ValueError(f"level {j} has {len(tree.nodes(j))} nodes, expected {params.N0 ** j}")
    return tree
