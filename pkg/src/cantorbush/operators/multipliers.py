"""The multiplier ``m~_j`` and its localized pieces ``m_{j,a}``.

``m~_j(xi, s) = <s>^gamma int e^{-2 pi i t s} rho(t) sigma_j^(t xi) dt`` with
``sigma_j^ = phi_j mu^``.  The primary evaluator is a trapezoid rule over the
effective ``t``-support (the integrand is smooth and vanishes at both ends, so
the rule converges spectrally); the dual form
``<s>^gamma int sigma_j(y) rho^(xi y + s) dy`` is kept as an independent check.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from ..spectral import MeasureSpectrum, phi_j, rho, sigma_spatial

__all__ = [
    "MultiplierField",
    "default_gamma",
    "japanese",
    "multiplier_support",
    "multiplier_mtilde",
    "multiplier_mtilde_dual",
    "multiplier_field",
    "localized_multiplier",
    "resolve_node",
]

MAX_NODES = 2_000_000


def default_gamma(p, eps=0.05):
    return 1.0 / float(p) + eps


def japanese(s):
    return np.sqrt(1.0 + np.asarray(s, dtype=float) ** 2)


def multiplier_support(j, N):
    return 0.5 * float(N) ** j, 4.0 * float(N) ** (j + 2)


def _t_window(j, N, xi):
    """Where ``rho(t) phi_j(t xi)`` can be nonzero."""
    axi = abs(xi)
    lo = max(1.0 / (2 * N), float(N) ** j / axi)
    hi = min(2.0, 2.0 * float(N) ** (j + 1) / axi)
    return lo, hi


def _node_count(j, N, xi, s, lo, hi):
    spec_rule = 64 * (1 + abs(s) + 2 * abs(xi) * float(N) ** (-j))
    # phases of mu^(t xi) run at up to 2|xi| in t; the cutoff edges need ~400 N more
    cycles = (hi - lo) * (2 * abs(xi) + abs(s) + 400 * N) * 1.5
    return int(math.ceil(max(spec_rule, cycles))) + 64


def _t_integral(j, N, xi, s, hat):
    lo, hi = _t_window(j, N, xi)
    if hi <= lo:
        return 0j
    n = _node_count(j, N, xi, s, lo, hi)
    if n > MAX_NODES:
        raise RuntimeError(f"quadrature budget exceeded: {n} nodes for xi={xi}, s={s}")
    t = np.linspace(lo, hi, n)
    vals = rho(t, N) * phi_j(t * xi, j, N) * hat(t * xi) * np.exp(-2j * np.pi * t * s)
    # both endpoints are zeros of the integrand, so the trapezoid rule is a plain sum
    return complex(vals.sum() * (t[1] - t[0]))


def multiplier_mtilde(j, gamma, xi, s, tree, spectrum=None):
    """``m~_j(xi, s)`` by trapezoid quadrature in ``t``.

    Returns exactly 0 when ``|xi|`` is outside ``[N^j/2, 4 N^{j+2}]``.

    Raises
    ------
    RuntimeError
        If the node count would exceed ``MAX_NODES``.
    """
    N = tree.N
    lo, hi = multiplier_support(j, N)
    if not lo <= abs(xi) <= hi:
        return 0j
    spectrum = spectrum or MeasureSpectrum(tree)
    return complex(japanese(s) ** gamma * _t_integral(j, N, float(xi), float(s), spectrum))


def resolve_node(tree, j, a):
    """Accept a NodeAddress or a level-j numerator; reject anything else."""
    nums = tree.numerators(j) if j <= tree.depth else ()
    if hasattr(a, "numerator") and hasattr(a, "level"):
        if a.level != j or a.numerator not in set(nums):
            raise ValueError(f"{a} is not a level-{j} node of the tree")
        return a
    if isinstance(a, (int, np.integer)) and int(a) in set(nums):
        return tree.node_at(j, int(a))
    raise ValueError(f"{a!r} is not a level-{j} node of the tree")


def localized_multiplier(j, a, gamma, xi, tau, tree, normalized=True, spectrum=None):
    """``m_{j,a}(xi, tau) = N^{j(alpha - gamma)} m~_{j,a}(xi, tau - a xi)``.

    With ``normalized=False`` the unnormalized ``m~_{j,a}(xi, s)`` is returned
    and ``tau`` is read as ``s``.
    """
    node = resolve_node(tree, j, a)
    N = tree.N
    lo, hi = multiplier_support(j, N)
    if not lo <= abs(xi) <= hi:
        return 0j
    spectrum = spectrum or MeasureSpectrum(tree)
    hat = spectrum.local(j, node)
    if not normalized:
        s = float(tau)
        return complex(japanese(s) ** gamma * _t_integral(j, N, float(xi), s, hat))
    apos = float(node.position(N))
    s = float(tau) - apos * float(xi)
    val = japanese(s) ** gamma * _t_integral(j, N, float(xi), s, hat)
    return complex(float(N) ** (j * (tree.alpha - gamma)) * val)


@dataclass
class MultiplierField:
    j: int
    gamma: float
    N: int
    xi: np.ndarray
    s: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lo, hi = multiplier_support(self.j, self.N)
        outside = (np.abs(self.xi) < lo) | (np.abs(self.xi) > hi)
        if np.any(self.values[outside] != 0):
            raise ValueError("multiplier samples must vanish outside the xi-support")


def multiplier_field(j, gamma, xi, s, tree):
    """``m~_j`` sampled on the tensor grid ``xi x s`` (shape ``(len(xi), len(s))``)."""
    xi = np.asarray(xi, dtype=float)
    s = np.asarray(s, dtype=float)
    spec = MeasureSpectrum(tree)
    vals = np.array([[multiplier_mtilde(j, gamma, x, y, tree, spec) for y in s] for x in xi])
    XI, _ = np.meshgrid(xi, s, indexing="ij")
    return MultiplierField(j, gamma, tree.N, XI, s, vals)


# ---------------------------------------------------------------------------
# dual y-form, used only as an oracle


@lru_cache(maxsize=8)
def _rho_hat_table(N):
    T = 32.0
    while T < 2 * (4 * N + 2):
        T *= 2
    dt = 1.0 / 2048
    n = int(T / dt)
    t = dt * np.arange(n)
    omega = np.fft.fftfreq(n, dt)
    vals = np.fft.fft(rho(t, N)) * dt
    order = np.argsort(omega)
    return omega[order], vals[order]


class _SigmaSpline:
    def __init__(self, tree, j, oversample=64):
        N = tree.N
        margin = 60.0 * float(N) ** (-j)
        g = sigma_spatial(tree, j, window=(1.0 - margin, 2.0 + margin), oversample=oversample)
        self.lo, self.hi = g.origin, g.origin + g.length
        self.spline = CubicSpline(g.points, g.samples)

    def __call__(self, y):
        out = np.zeros(y.shape, dtype=complex)
        m = (y >= self.lo) & (y <= self.hi - 1e-12)
        out[m] = self.spline(y[m])
        return out


_SPLINES = {}


def multiplier_mtilde_dual(j, gamma, xi, s, tree, omega_max=700.0):
    """``<s>^gamma int sigma_j(y) rho^(xi y + s) dy`` via ``omega = xi y + s``.

    ``rho^`` comes from an FFT table, ``sigma_j`` from a cubic spline through
    an oversampled inverse FFT.  Accuracy is about 1e-7 relative to the
    largest values of the multiplier.
    """
    N = tree.N
    lo, hi = multiplier_support(j, N)
    if not lo <= abs(xi) <= hi:
        return 0j
    key = (id(tree), j)
    if key not in _SPLINES:
        _SPLINES[key] = (tree, _SigmaSpline(tree, j))
    sig = _SPLINES[key][1]
    omega, rh = _rho_hat_table(N)
    keep = np.abs(omega) <= omega_max
    omega, rh = omega[keep], rh[keep]
    y = (omega - s) / xi
    d_omega = omega[1] - omega[0]
    val = np.sum(sig(y) * rh) * d_omega / abs(xi)
    return complex(japanese(s) ** gamma * val)
