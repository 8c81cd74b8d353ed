"""Grid functions, smooth cutoffs and Fourier transforms of Cantor measures.

Conventions: ``f^(xi) = int f(x) e^{-2 pi i x xi} dx``.  A :class:`GridFunction1D`
is a sampled function on a periodic window ``[origin, origin + n * spacing)``;
its discrete transform approximates the continuous one with the same kernel.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin

__all__ = [
    "GridFunction1D",
    "GridFunction2D",
    "BumpSpec",
    "MeasureSpectrum",
    "transition",
    "smooth_cutoff",
    "phi",
    "phi_j",
    "rho",
    "littlewood_paley_piece",
    "LittlewoodPaley",
    "mu_hat_selfsimilar",
    "mu_hat_atoms",
    "sigma_piece",
    "sigma_spatial",
    "truncation_bound",
]


@dataclass
class GridFunction1D:
    origin: float
    spacing: float
    samples: np.ndarray
    variable: str = "x"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ValueError("a grid function needs at least two samples")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def from_callable(cls, fn, origin, spacing, n, variable="x"):
        pts = origin + spacing * np.arange(n)
        return cls(origin, spacing, fn(pts), variable)

    def __len__(self):
        return self.samples.size

    @property
    def points(self):
        return self.origin + self.spacing * np.arange(self.samples.size)

    @property
    def length(self):
        return self.spacing * self.samples.size

    def norm(self, p=2):
        """Riemann-sum ``L^p`` norm; ``p = inf`` gives the max modulus."""
        a = np.abs(self.samples)
        if np.isinf(p):
            return float(a.max())
        return float((np.sum(a ** p) * self.spacing) ** (1.0 / p))

    def frequencies(self):
        """FFT-ordered frequencies dual to the grid."""
        return np.fft.fftfreq(self.samples.size, self.spacing)

    def fourier_coefficients(self):
        """Continuous-transform samples ``f^(xi_k)`` in FFT order."""
        xi = self.frequencies()
        return np.fft.fft(self.samples) * self.spacing * np.exp(-2j * np.pi * self.origin * xi)

    def fourier(self):
        """Centered frequency-domain grid function ``f^``."""
        n = self.samples.size
        xi = np.fft.fftshift(self.frequencies())
        vals = np.fft.fftshift(self.fourier_coefficients())
        return GridFunction1D(float(xi[0]), 1.0 / (n * self.spacing), vals, "xi")

    def with_multiplier(self, m):
        """Apply a Fourier multiplier ``m(xi)`` on the periodic window."""
        xi = self.frequencies()
        out = np.fft.ifft(np.fft.fft(self.samples) * m(xi))
        return GridFunction1D(self.origin, self.spacing, out, self.variable)

    def to_text(self):
        lines = [f"# origin={self.origin!r} spacing={self.spacing!r} variable={self.variable} n={len(self)}"]
        for x, v in zip(self.points, self.samples):
            lines.append(f"{float(x)!r} {float(v.real)!r} {float(v.imag)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        head, *rows = [ln for ln in text.splitlines() if ln.strip()]
        meta = dict(item.split("=", 1) for item in head.lstrip("# ").split())
        data = np.array([[float(v) for v in r.split()] for r in rows])
        return cls(float(meta["origin"]), float(meta["spacing"]), data[:, 1] + 1j * data[:, 2], meta["variable"])


@dataclass
class GridFunction2D:
    origins: tuple
    spacings: tuple
    samples: np.ndarray
    variables: tuple = ("x", "t")

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 2 or min(self.samples.shape) < 2:
            raise ValueError("a 2D grid function needs a rectangular array")

    def axis(self, k):
        return self.origins[k] + self.spacings[k] * np.arange(self.samples.shape[k])

    def norm(self, p=2):
        a = np.abs(self.samples)
        if np.isinf(p):
            return float(a.max())
        cell = self.spacings[0] * self.spacings[1]
        return float((np.sum(a ** p) * cell) ** (1.0 / p))

    def to_text(self):
        lines = [
            f"# origins={float(self.origins[0])!r},{float(self.origins[1])!r}"
            f" spacings={float(self.spacings[0])!r},{float(self.spacings[1])!r}"
            f" variables={self.variables[0]},{self.variables[1]} shape={self.samples.shape[0]},{self.samples.shape[1]}"
        ]
        a0, a1 = self.axis(0), self.axis(1)
        for i, x in enumerate(a0):
            for k, t in enumerate(a1):
                v = self.samples[i, k]
                lines.append(f"{float(x)!r} {float(t)!r} {float(v.real)!r} {float(v.imag)!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BumpSpec:
    """Plateau bump: 1 on ``[-inner, inner]``, 0 outside ``[-outer, outer]``."""

    inner: float = 1.0
    outer: float = 2.0

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")


def transition(x):
    """Smooth step ``e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)})``: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    with np.errstate(divide="ignore", over="ignore"):
        val = expit(1.0 / (1.0 - xs) - 1.0 / xs)
    return np.where(x >= 1, 1.0, np.where(inside, val, 0.0))


def smooth_cutoff(spec, u):
    u = np.abs(np.asarray(u, dtype=float))
    out = 1.0 - transition((u - spec.inner) / (spec.outer - spec.inner))
    return out if out.ndim else float(out)


_PHI = BumpSpec(1.0, 2.0)


def phi(u):
    """The fixed cutoff: 1 on ``|u| <= 1``, supported in ``|u| <= 2``."""
    return smooth_cutoff(_PHI, u)


def phi_j(xi, j, N):
    """Littlewood-Paley piece ``phi(N^{-j-1} xi) - phi(N^{-j} xi)`` (``phi(xi/N)`` at j=0)."""
    xi = np.asarray(xi, dtype=float)
    top = phi(xi / float(N) ** (j + 1))
    if j == 0:
        return top
    return top - phi(xi / float(N) ** j)


def rho(t, N):
    """1 on ``[1/N, 1]``, supported in ``(1/(2N), 2)``."""
    t = np.asarray(t, dtype=float)
    a = 1.0 / (2 * N)
    rise = transition((t - a) / a)
    fall = 1.0 - transition(t - 1.0)
    out = rise * fall
    return out if out.ndim else float(out)


def littlewood_paley_piece(f, j, N):
    """``f_j`` with ``f_j^ = phi_j f^``; rejects grids whose Nyquist is below ``2 N^{j+1}``."""
    nyquist = 0.5 / f.spacing
    if nyquist < 2.0 * float(N) ** (j + 1):
        raise ValueError(f"grid Nyquist {nyquist:g} cannot resolve piece j={j} (needs {2.0 * N ** (j + 1):g})")
    return f.with_multiplier(lambda xi: phi_j(xi, j, N))


class LittlewoodPaley(BaseEstimator, TransformerMixin):
    """Transformer splitting rows of samples into Littlewood-Paley pieces.

    ``transform`` maps an ``(n_functions, n_samples)`` array to
    ``(n_functions, J + 1, n_samples)``; ``inverse_transform`` sums the pieces.
    """

    def __init__(self, N=7, J=2, spacing=1e-3):
        self.N = N
        self.J = J
        self.spacing = spacing

    def fit(self, X, y=None):
        X = np.atleast_2d(np.asarray(X))
        if 0.5 / self.spacing < 2.0 * float(self.N) ** (self.J + 1):
            raise ValueError("spacing too coarse for the requested pieces")
        self.n_samples_ = X.shape[1]
        return self

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        if X.shape[1] != getattr(self, "n_samples_", None):
            raise ValueError("transformer is not fitted for this grid length")
        xi = np.fft.fftfreq(X.shape[1], self.spacing)
        F = np.fft.fft(X, axis=1)
        pieces = [np.fft.ifft(F * phi_j(xi, j, self.N), axis=1) for j in range(self.J + 1)]
        return np.stack(pieces, axis=1)

    def inverse_transform(self, Xt):
        return np.asarray(Xt).sum(axis=1)


def truncation_bound(S, N, xi, K):
    """Bound on ``|mu^(xi) - product truncated at K|`` from ``|1 - m(u)| <= 2 pi max(S) |u|``."""
    top = max(S) if len(S) else 0
    return 2 * math.pi * top * np.abs(xi) * float(N) ** (-K) / (N - 1)


def mu_hat_selfsimilar(S, N, xi, K=40):
    """``e^{-2 pi i xi} prod_{k<=K} N0^{-1} sum_s e^{-2 pi i s xi N^{-k}}``.

    Factors are dropped once ``max(S) |xi| N^{-k}`` is below 1e-17, where they
    equal 1 in double precision.
    """
    digits = np.asarray(list(S), dtype=float)
    xi = np.asarray(xi, dtype=float)
    scalar = xi.ndim == 0
    xi = np.atleast_1d(xi)
    out = np.exp(-2j * np.pi * xi)
    top = max(float(np.max(np.abs(xi))) * (digits.max() if digits.size else 0.0), 0.0)
    for k in range(1, int(K) + 1):
        scale = float(N) ** (-k)
        if top * scale < 1e-17:
            break
        u = xi * scale
        out = out * np.mean(np.exp(-2j * np.pi * np.multiply.outer(u, digits)), axis=-1)
    return complex(out[0]) if scalar else out


def mu_hat_atoms(tree, J, xi, chunk=4096):
    """``N0^{-J} sum_{a in A_J} e^{-2 pi i a xi}`` for the level-J left endpoints."""
    if J > tree.depth:
        raise ValueError(f"J={J} exceeds tree depth {tree.depth}")
    pos = tree.positions(J)
    xi = np.asarray(xi, dtype=float)
    scalar = xi.ndim == 0
    flat = np.atleast_1d(xi).ravel()
    out = np.empty(flat.size, dtype=complex)
    for s in range(0, flat.size, chunk):
        block = flat[s : s + chunk]
        out[s : s + chunk] = np.exp(-2j * np.pi * np.multiply.outer(block, pos)).mean(axis=1)
    return complex(out[0]) if scalar else out.reshape(np.shape(xi))


class MeasureSpectrum:
    """Evaluator for ``mu^`` and for the localized pieces ``mu_{j,a}^``.

    Self-similar trees use the product formula (the limit measure), other
    trees the atomic measure at full tree depth.
    """

    def __init__(self, tree, K=40):
        self.tree = tree
        self.K = K
        self._digits = tree.digit_set.elements if tree.self_similar else None

    def __call__(self, xi):
        if self._digits is not None:
            return mu_hat_selfsimilar(self._digits, self.tree.N, xi, self.K)
        return mu_hat_atoms(self.tree, self.tree.depth, xi)

    def local(self, j, node):
        """Callable ``eta -> mu_{j,a}^(eta)`` for the level-j node ``a``."""
        N = self.tree.N
        a = float(node.position(N))
        if self._digits is not None:
            mass = float(self.tree.N0) ** (-j)
            shift = a - float(N) ** (-j)

            def local_hat(eta):
                eta = np.asarray(eta, dtype=float)
                return mass * np.exp(-2j * np.pi * eta * shift) * self(eta * float(N) ** (-j))

            return local_hat
        J = self.tree.depth
        width = N ** (J - j)
        lo = node.numerator * width
        nums = np.asarray(self.tree.numerators(J))
        pos = 1.0 + nums[(nums >= lo) & (nums < lo + width)] / float(N) ** J
        mass = float(self.tree.N0) ** (-J)

        def local_hat(eta):
            eta = np.asarray(eta, dtype=float)
            return mass * np.exp(-2j * np.pi * np.multiply.outer(eta, pos)).sum(axis=-1)

        return local_hat


def sigma_piece(tree, j, grid, spectrum=None):
    """Samples of ``sigma_j^ = phi_j mu^`` on a frequency grid function's points."""
    N = tree.N
    xi = grid.points
    if np.max(np.abs(xi)) < 2.0 * float(N) ** (j + 1) and grid.spacing * len(grid) < 4.0 * float(N) ** (j + 1):
        raise ValueError("frequency grid does not reach the support of phi_j")
    spectrum = spectrum or MeasureSpectrum(tree)
    vals = phi_j(xi, j, N) * spectrum(xi)
    return GridFunction1D(grid.origin, grid.spacing, vals, "xi")


def sigma_spatial(tree, j, window=(-30.0, 33.0), oversample=8, spectrum=None):
    """``sigma_j(y)`` on a uniform grid by inverse FFT of ``phi_j mu^``.

    The window must contain the Schwartz tails of ``sigma_j`` around ``[1, 2]``;
    periodization error equals the tail mass outside it.
    """
    N = tree.N
    lo, hi = window
    L = hi - lo
    band = 2.0 * float(N) ** (j + 1)
    n = int(2 ** math.ceil(math.log2(2 * band * L * oversample)))
    spacing = L / n
    y = lo + spacing * np.arange(n)
    xi = np.fft.fftfreq(n, spacing)
    spectrum = spectrum or MeasureSpectrum(tree)
    vals = phi_j(xi, j, N) * spectrum(xi)
    # sigma(y_m) = sum_k vals_k e^{2 pi i xi_k y_m} d_xi
    samples = np.fft.ifft(vals * np.exp(2j * np.pi * xi * lo)) * n / L
    return GridFunction1D(lo, spacing, samples, "y")
