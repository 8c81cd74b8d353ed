"""Sidon and Lambda(p) digit sets: construction, certification, moments.

Digit sets are sourced from explicit constructions (Singer perfect difference
sets and the Mian-Chowla greedy sequence) and certified exactly.  The even
moments of unit-coefficient exponential sums are exact integers (additive
energies); for general coefficients and exponents the best Lambda(p) ratio is
lower-bounded numerically by projected gradient ascent on the unit sphere.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from sklearn.base import BaseEstimator

from ._gf import ExtensionField, prime_power
from ._validation import check_random_state

logger = logging.getLogger(__name__)

__all__ = [
    "DigitSet",
    "SidonCertificate",
    "MomentCount",
    "LambdaPEstimate",
    "LambdaPConstantEstimator",
    "singer_difference_set",
    "mian_chowla_greedy",
    "is_sidon",
    "is_perfect_difference_set",
    "additive_energy",
    "additive_energy_bruteforce",
    "lambda_p_ratio_exact_even",
    "lambda_p_ratio_search",
    "size_bounds_check",
    "exponential_sum_moment",
]

SUPPORTED_Q = (2, 3, 4, 5, 7, 8, 9, 11, 13, 16)


@dataclass(frozen=True)
class DigitSet:
    """A finite set of digits ``0 <= s <= N - 1`` for base ``N``.

    The Cantor construction further excludes ``N - 1``; that restriction is
    enforced where trees are built, not here, so greedy Sidon sets that may
    touch ``N - 1`` are still representable.
    """

    N: int
    elements: tuple

    def __post_init__(self):
        elems = tuple(sorted(int(e) for e in self.elements))
        if len(set(elems)) != len(elems):
            raise ValueError(f"digits must be distinct: {self.elements}")
        if elems and (elems[0] < 0 or elems[-1] > self.N - 1):
            raise ValueError(f"digits must lie in [0, {self.N - 1}]: {elems}")
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "N", int(self.N))

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, item):
        return item in self.elements

    @property
    def size(self):
        return len(self.elements)

    def translate(self, c):
        return DigitSet(self.N, [(e + c) for e in self.elements])


@dataclass(frozen=True)
class SidonCertificate:
    digits: DigitSet
    is_sidon: bool
    witness: tuple | None
    energy: int


@dataclass(frozen=True)
class MomentCount:
    k: int
    value: int


@dataclass
class LambdaPEstimate:
    """Numerical lower bound for the Lambda(p) constant of a set.

    ``ratio_sup`` is the best ratio found; it bounds the true constant from
    below and is never the constant itself.
    """

    p: float
    digits: DigitSet
    ratio_unit: float
    ratio_sup: float
    coefficients: np.ndarray
    iterations: int
    trials: int
    converged: bool = True
    history: list = field(default_factory=list)


def _as_digit_set(S, N=None):
    if isinstance(S, DigitSet):
        return S
    elems = sorted(int(s) for s in S)
    if N is None:
        N = (elems[-1] + 2) if elems else 2
    return DigitSet(N, elems)


@lru_cache(maxsize=None)
def singer_difference_set(q):
    """Perfect difference set of size ``q + 1`` modulo ``q**2 + q + 1``.

    The set is ``{i mod n : Tr(g**i) = 0}`` for a primitive element ``g`` of
    GF(q^3), where ``Tr`` is the trace to GF(q).  It is then translated so
    that it contains 0 and avoids ``n - 1``.

    Parameters
    ----------
    q : int
        A prime power in ``SUPPORTED_Q``.

    Returns
    -------
    DigitSet
        Digits in ``[0, n - 2]`` with base ``n = q**2 + q + 1``.
    """
    q = int(q)
    if q not in SUPPORTED_Q:
        try:
            prime_power(q)
        except ValueError:
            raise ValueError(f"q={q} is not a prime power") from None
        raise ValueError(f"q={q} is outside the supported range {SUPPORTED_Q}")
    p, e = prime_power(q)
    n = q * q + q + 1
    F = ExtensionField(p, 3 * e)
    residues = set()
    for i, z in enumerate(F.powers()):
        zq = F.power(z, q)
        zqq = F.power(zq, q)
        if F.add(F.add(z, zq), zqq) == 0:
            residues.add(i % n)
    if len(residues) != q + 1:
        raise ArithmeticError(f"trace-zero construction produced {len(residues)} residues")
    # translate by -s so that 0 is included and n - 1 is not
    for s in sorted(residues):
        shifted = sorted((r - s) % n for r in residues)
        if n - 1 not in shifted:
            return DigitSet(n, shifted)
    raise ArithmeticError("no admissible translate")  # pragma: no cover


def is_perfect_difference_set(elements, n):
    """True iff every nonzero residue mod ``n`` is a difference exactly once."""
    counts = [0] * n
    for a in elements:
        for b in elements:
            if a != b:
                counts[(a - b) % n] += 1
    return all(c == 1 for c in counts[1:])


def mian_chowla_greedy(N):
    """Greedy Sidon set in ``[0, N - 1]``: add each integer keeping sums distinct."""
    N = int(N)
    if N < 1:
        raise ValueError("N must be positive")
    chosen = []
    sums = set()
    for c in range(N):
        new = {c + a for a in chosen} | {2 * c}
        if new & sums:
            continue
        chosen.append(c)
        sums |= new
    return DigitSet(N, chosen)


def is_sidon(S):
    """Exhaustively check that ``a + b = c + d`` has only trivial solutions."""
    S = _as_digit_set(S)
    seen = {}
    witness = None
    for a, b in combinations_with_replacement(S.elements, 2):
        s = a + b
        if s in seen:
            c, d = seen[s]
            witness = (c, d, a, b)
            break
        seen[s] = (a, b)
    energy = additive_energy(S, 2).value
    return SidonCertificate(S, witness is None, witness, energy)


def _representation_counts(elements, k):
    """Integer array r with r[s] = #{(a_1..a_k) in S^k : sum = s} (shifted by k*min)."""
    elems = np.asarray(elements, dtype=np.int64)
    lo = int(elems.min())
    span = int(elems.max()) - lo
    n = len(elems)
    # exact in int64 while n**(2k) stays below 2**62
    dtype = np.int64 if 2 * k * math.log2(max(n, 2)) < 62 else object
    ind = np.zeros(span + 1, dtype=dtype)
    ind[elems - lo] = 1
    r = np.ones(1, dtype=dtype)
    for _ in range(k):
        r = np.convolve(r, ind)
    return r


def additive_energy(S, k=2):
    """Exact ``E_k(S) = sum_s r_k(s)**2`` via iterated integer convolution."""
    S = _as_digit_set(S)
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(S) == 0:
        return MomentCount(k, 0)
    r = _representation_counts(S.elements, k)
    return MomentCount(k, int(sum(int(x) * int(x) for x in r)))


def additive_energy_bruteforce(S, k=2):
    """Count 2k-tuples with equal k-fold sums by enumerating k-fold sums."""
    from collections import Counter
    from itertools import product

    elems = list(_as_digit_set(S).elements)
    counts = Counter(sum(t) for t in product(elems, repeat=k))
    return sum(v * v for v in counts.values())


def lambda_p_ratio_exact_even(S, k=2):
    """Unit-coefficient ratio ``E_k(S)**(1/2k) / |S|**(1/2)`` (p = 2k)."""
    S = _as_digit_set(S)
    n = len(S)
    E = additive_energy(S, k).value
    return math.exp(math.log(E) / (2 * k) - 0.5 * math.log(n))


def exponential_sum_moment(S, p, coefficients=None, n_points=None):
    """``int_0^1 |sum_a c_a e(ax)|^p dx`` by equispaced quadrature.

    With ``n_points > p/2 * span`` the rule is exact for even ``p`` because
    ``|P|^p`` is then a trigonometric polynomial of degree below ``n_points``.
    """
    S = _as_digit_set(S)
    elems = np.asarray(S.elements, dtype=np.int64)
    c = np.ones(len(elems), dtype=complex) if coefficients is None else np.asarray(coefficients, complex)
    M = n_points or _grid_size(elems, p)
    values = _evaluate(elems, c, M)
    return float(np.mean(np.abs(values) ** p))


def _grid_size(elems, p):
    top = int(np.max(elems)) if len(elems) else 0
    if float(p).is_integer() and int(p) % 2 == 0:
        return max(int(p) * top + 1, 4 * top + 1, 8)
    return max(16 * top, 64)


def _evaluate(elems, c, M):
    """P(m/M) for m = 0..M-1 through one inverse FFT."""
    buf = np.zeros(M, dtype=complex)
    np.add.at(buf, elems % M, c)
    return np.fft.ifft(buf) * M


def _moment_and_gradient(elems, c, p, M):
    P = _evaluate(elems, c, M)
    absP = np.abs(P)
    F = np.mean(absP ** p)
    # d F / d conj(c_a) = p/2 * mean(|P|^(p-2) P e(-a x))
    w = (absP ** (p - 2)) * P
    g = np.fft.fft(w) / M
    grad = 0.5 * p * g[elems % M]
    return F, grad


def lambda_p_ratio_search(S, p=4, trials=50, steps=200, random_state=None, step_size=0.5, tol=1e-12):
    """Lower-bound the Lambda(p) constant of ``S`` by projected gradient ascent.

    Maximizes ``||sum c_a e(ax)||_p / ||c||_2`` over complex coefficients by
    ascent on the unit l2 sphere with backtracking step halving.  Restart 0
    starts from unit coefficients, so the result dominates the unit ratio;
    later restarts are drawn from a seeded generator so more trials can only
    raise the reported value.

    Returns
    -------
    LambdaPEstimate
    """
    S = _as_digit_set(S)
    p = float(p)
    if p < 2:
        raise ValueError("p must be >= 2")
    elems = np.asarray(S.elements, dtype=np.int64)
    n = len(elems)
    M = _grid_size(elems, p)
    rng = check_random_state(random_state)

    unit = np.ones(n, dtype=complex) / math.sqrt(n)
    ratio_unit = _moment_and_gradient(elems, unit, p, M)[0] ** (1 / p)

    best_ratio, best_c = -np.inf, unit
    total_iters = 0
    converged_all = True
    history = []
    for trial in range(int(trials)):
        if trial == 0:
            c = unit.copy()
        else:
            c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            c /= np.linalg.norm(c)
        F, grad = _moment_and_gradient(elems, c, p, M)
        eta = step_size
        converged = False
        for _ in range(int(steps)):
            total_iters += 1
            # project the gradient onto the tangent space of the sphere
            radial = np.real(np.vdot(c, grad))
            tangent = grad - radial * c
            if np.linalg.norm(tangent) < tol:
                converged = True
                break
            while eta > 1e-12:
                trial_c = c + eta * tangent
                trial_c /= np.linalg.norm(trial_c)
                F_new, grad_new = _moment_and_gradient(elems, trial_c, p, M)
                if F_new > F:
                    break
                eta *= 0.5
            else:
                converged = True
                break
            if F_new - F < tol * F:
                c, F, grad = trial_c, F_new, grad_new
                converged = True
                break
            c, F, grad = trial_c, F_new, grad_new
            eta = min(2 * eta, step_size)
        converged_all &= converged
        ratio = F ** (1 / p)
        history.append(ratio)
        if ratio > best_ratio:
            best_ratio, best_c = ratio, c
    if not converged_all:
        logger.info("lambda_p_ratio_search: some restarts hit the step limit")
    return LambdaPEstimate(
        p=p,
        digits=S,
        ratio_unit=float(ratio_unit),
        ratio_sup=float(max(best_ratio, ratio_unit)),
        coefficients=best_c,
        iterations=total_iters,
        trials=int(trials),
        converged=bool(converged_all),
        history=history,
    )


def size_bounds_check(S, N, p, c0, c1):
    """True iff ``c0 N^(2/p) <= |S| <= c1 N^(2/p)``."""
    size = len(_as_digit_set(S)) if not isinstance(S, int) else S
    scale = float(N) ** (2.0 / float(p))
    return bool(c0 * scale <= size <= c1 * scale)


class LambdaPConstantEstimator(BaseEstimator):
    """Estimator wrapper around :func:`lambda_p_ratio_search`.

    ``fit`` takes a digit set; the fitted attributes are ``ratio_sup_``,
    ``ratio_unit_`` and ``coef_``.
    """

    def __init__(self, p=4.0, trials=50, steps=200, random_state=None):
        self.p = p
        self.trials = trials
        self.steps = steps
        self.random_state = random_state

    def fit(self, S, y=None):
        est = lambda_p_ratio_search(S, self.p, self.trials, self.steps, self.random_state)
        self.estimate_ = est
        self.ratio_sup_ = est.ratio_sup
        self.ratio_unit_ = est.ratio_unit
        self.coef_ = est.coefficients
        return self

    def score(self, S, y=None):
        """Ratio of the fitted coefficients on the same set (must match ``S``)."""
        S = _as_digit_set(S)
        elems = np.asarray(S.elements, dtype=np.int64)
        F = _moment_and_gradient(elems, self.coef_, float(self.p), _grid_size(elems, self.p))[0]
        return F ** (1 / float(self.p))
