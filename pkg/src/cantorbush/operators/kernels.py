"""Localized kernels ``K_{j,a}`` and their main parts.

The kernel is computed in sheared coordinates ``u = x - t a``:

    K(u, t) = 2 Re int_{xi > 0} e^{2 pi i u xi} k(xi, t) dxi,
    k(xi, .) = inverse FT in tau of m_{j,a}(xi, tau).

Real-valuedness comes from ``m(-xi, -tau) = conj m(xi, tau)``.  For a fixed
``xi`` the multiplier is ``N^{j(alpha-gamma)} <tau - a xi>^gamma h_xi^(tau)``
where ``h_xi(t) = rho(t) phi_j(t xi) mu_{j,a}^(t xi) e^{2 pi i t a xi}``; one
FFT in ``t`` produces the whole ``tau`` line, the weight is applied there and a
second FFT returns to ``t``.  Nothing of size ``n_xi * n_tau`` is ever stored.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from ..spectral import MeasureSpectrum, mu_hat_selfsimilar, phi, phi_j, rho
from .multipliers import default_gamma, japanese, multiplier_support, resolve_node

__all__ = [
    "LocalizedKernel",
    "kernel_K",
    "verify_kernel_decay",
    "truncate_main",
    "kernel_apply",
    "multiplier_apply",
    "falp_constant",
]

GRID_BUDGET = 4e8


@dataclass
class LocalizedKernel:
    """Samples of ``K_{j,a}`` on a sheared ``(u, t)`` grid.

    ``values[i, l]`` is ``K(u_l + t_i a, t_i)`` in the original coordinates.
    ``ktilde`` keeps the partial transform ``k(xi, t_i)`` (positive ``xi``)
    so that multiplier-side evaluations can reuse it.
    """

    j: int
    a: object
    a_pos: float
    gamma: float
    alpha: float
    epsilon: object
    N: int
    u: np.ndarray
    t: np.ndarray
    values: np.ndarray
    main: object = None
    xi: np.ndarray = None
    ktilde: np.ndarray = None
    ktilde_main: np.ndarray = None
    tau_tail: float = 0.0
    grid_sum: float = 0.0
    grid_sum_main: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def du(self):
        return float(self.u[1] - self.u[0])

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 1.0

    def l1_in_x(self, which="full"):
        """``int |K(x, t)| dx`` for each grid ``t``."""
        arr = self._pick(which)
        return np.abs(arr).sum(axis=1) * self.du

    def l1(self, which="full"):
        return float(self.l1_in_x(which).sum() * self.dt)

    def _pick(self, which):
        if which == "full":
            return self.values
        if self.main is None:
            raise ValueError("kernel was built without a main part")
        if which == "main":
            return self.main
        if which == "tail":
            return self.values - self.main
        raise ValueError(which)

    def x_grid(self, i):
        return self.u + self.t[i] * self.a_pos


@lru_cache(maxsize=4)
def _nu_table(digits, N, top, step=2e-5):
    """``e^{2 pi i eta} mu^(eta)`` on ``[0, top]``: the transform of mu shifted to ``[0, 1]``."""
    eta = np.arange(0.0, top + 2 * step, step)
    vals = np.exp(2j * np.pi * eta) * mu_hat_selfsimilar(digits, N, eta)
    return eta, vals.real.copy(), vals.imag.copy()


def _demodulated_local(tree, j, node, spectrum):
    """Callable ``w -> mu_{j,a}^(w) e^{2 pi i w a}`` for ``w >= 0``."""
    N = tree.N
    if tree.self_similar:
        digits = tuple(tree.digit_set.elements)
        eta, re, im = _nu_table(digits, N, 2.0 * N + 1.0)
        mass = float(tree.N0) ** (-j)
        scale = float(N) ** (-j)
        step = eta[1] - eta[0]

        def f(w):
            e = w * scale
            return mass * (np.interp(e, eta, re) + 1j * np.interp(e, eta, im))

        f.max_error = 0.5 * step ** 2 * (2 * math.pi) ** 2 * mass
        return f
    hat = spectrum.local(j, node)
    apos = float(node.position(N))

    def g(w):
        return hat(w) * np.exp(2j * np.pi * w * apos)

    g.max_error = 0.0
    return g


def kernel_K(j, a, tree, gamma=None, epsilon=None, *, t_range=(-1.0, 3.0), u_window=64.0,
             tau_nyquist=None, t_margin=3.0, n_t_keep=321, chunk=256):
    """Build ``K_{j,a}`` (and ``K^main`` when ``epsilon`` is given).

    Parameters
    ----------
    j : int
    a : NodeAddress or int
        Level-j node (or its numerator).
    tree : CantorTree
    gamma : float, optional
        Defaults to ``1/p + 0.05``.
    epsilon : float, optional
        Main-part cutoff ``phi(N^{-j eps} tau)``.
    t_range : (float, float)
        Output t-range; the internal periodic window adds ``t_margin`` each side.
    u_window : float
        Width of the sheared x-window in units of ``N^-j``.
    tau_nyquist : float, optional
        Half-width of the tau line; default ``4 N^2 + 400`` covers the shift
        of ``h_xi^`` by up to ``N^-j xi`` plus the cutoff tails.

    Raises
    ------
    RuntimeError
        If the ``xi * t`` work exceeds ``GRID_BUDGET``.
    """
    node = resolve_node(tree, j, a)
    N = tree.N
    alpha = tree.alpha
    gamma = default_gamma(tree.params.p) if gamma is None else float(gamma)
    apos = float(node.position(N))
    if tau_nyquist is None:
        tau_nyquist = 4.0 * N * N + 400.0
    dt = 0.5 / tau_nyquist
    t_lo_idx = int(math.floor((min(t_range[0], 0.0) - t_margin) / dt))
    t_hi = max(t_range[1], 2.0) + t_margin
    n_t = sfft.next_fast_len(int(math.ceil(t_hi / dt)) - t_lo_idx + 1)
    t_lo = t_lo_idx * dt
    t_all = t_lo + dt * np.arange(n_t)
    tau = np.fft.fftfreq(n_t, dt)

    U = u_window * float(N) ** (-j)
    xi_top = multiplier_support(j, N)[1] * 1.02
    n_xi = 2 * int(math.ceil(xi_top * U / 2))
    if n_xi * n_t > GRID_BUDGET:
        raise RuntimeError(f"grid budget exceeded: {n_xi} x {n_t}")
    dxi = 1.0 / U
    xi = dxi * np.arange(n_xi)

    # rho is supported in (1/(2N), 2); only those t-samples can be nonzero
    sup = np.nonzero((t_all > 1.0 / (2 * N)) & (t_all < 2.0))[0]
    t_sup = t_all[sup]
    rho_sup = rho(t_sup, N)

    i0 = -t_lo_idx
    keep = np.arange(n_t)
    in_range = (t_all >= t_range[0] - 1e-12) & (t_all <= t_range[1] + 1e-12)
    keep = keep[in_range]
    stride = max(1, int(math.ceil(keep.size / n_t_keep)))
    keep = keep[(keep - i0) % stride == 0]
    t_keep = t_all[keep]

    spectrum = MeasureSpectrum(tree)
    local = _demodulated_local(tree, j, node, spectrum)
    norm = float(N) ** (j * (alpha - gamma))
    shift_in = np.exp(-2j * np.pi * tau * t_lo) * dt          # forward: continuous FT phase
    shift_out = np.exp(2j * np.pi * tau * t_lo) / dt          # inverse, times n_t * dtau
    cut = phi(tau * float(N) ** (-j * epsilon)) if epsilon is not None else None

    kt = np.zeros((n_xi, keep.size), dtype=complex)
    kt_main = np.zeros_like(kt) if cut is not None else None
    total = total_main = 0.0
    tail_num = 0.0
    peak = 0.0
    edge = np.abs(tau) > 0.8 * tau_nyquist
    lo_sup, hi_sup = multiplier_support(j, N)
    active = np.nonzero((xi >= lo_sup) & (xi <= hi_sup))[0]
    for s in range(0, active.size, chunk):
        rows = active[s : s + chunk]
        w = np.multiply.outer(xi[rows], t_sup)
        h = np.zeros((rows.size, n_t), dtype=complex)
        h[:, sup] = rho_sup * phi_j(w, j, N) * local(w)
        H = sfft.fft(h, axis=1) * shift_in
        m = norm * japanese(tau[None, :] - apos * xi[rows, None]) ** gamma * H
        am = np.abs(m)
        peak = max(peak, float(am.max()))
        tail_num = max(tail_num, float(am[:, edge].max()))
        total += float(m.real.sum())
        back = sfft.ifft(m * shift_out, axis=1)
        kt[rows] = back[:, keep]
        if cut is not None:
            mm = m * cut
            total_main += float(mm.real.sum())
            kt_main[rows] = sfft.ifft(mm * shift_out, axis=1)[:, keep]

    u = -U / 2 + (U / n_xi) * np.arange(n_xi)
    sign = (-1.0) ** np.arange(n_xi)

    def to_u(block):
        # K(u_l, t) = 2 Re sum_m k(xi_m, t) e^{2 pi i u_l xi_m} dxi
        return 2.0 * (sfft.ifft(block * sign[:, None], axis=0) * n_xi * dxi).real.T

    dtau = 1.0 / (n_t * dt)
    K = LocalizedKernel(
        j=j, a=node, a_pos=apos, gamma=gamma, alpha=alpha, epsilon=epsilon, N=N,
        u=u, t=t_keep, values=to_u(kt), main=to_u(kt_main) if cut is not None else None,
        xi=xi, ktilde=kt, ktilde_main=kt_main,
        tau_tail=tail_num / peak if peak > 0 else 0.0,
        grid_sum=2.0 * total * dxi * dtau, grid_sum_main=2.0 * total_main * dxi * dtau,
        info={"n_xi": n_xi, "n_t": n_t, "dt_internal": dt, "dxi": dxi, "tau_nyquist": tau_nyquist,
              "interp_error": local.max_error, "multiplier_peak": peak},
    )
    return K


def verify_kernel_decay(K, M):
    """Measured envelope constants of ``K_{j,a}``.

    Returns a dict with ``C_u = sup |K| N^-j (1 + N^{2j} u^2)^M``,
    ``C_t = sup |K| N^-j (1 + t^2)^M``, their joint value ``C_joint``
    (the sup against the larger envelope, i.e. the max of the two), the peak
    near ``u = 0`` and the suppression measured at ``|u| = 10 N^-j`` and
    ``t = 3``.
    """
    if M > 3:
        raise ValueError("M > 3 is not resolvable on the kernel grid")
    N, j = K.N, K.j
    scale = float(N) ** j
    absK = np.abs(K.values)
    env_u = (1.0 + (scale * K.u[None, :]) ** 2) ** M
    env_t = (1.0 + K.t[:, None] ** 2) ** M
    C_u = float((absK * env_u).max() / scale)
    C_t = float((absK * env_t).max() / scale)
    small = np.abs(K.t) <= 0.5
    peak = float(absK.max())
    far_idx = int(np.argmin(np.abs(np.abs(K.u) - 10.0 / scale)))
    ti3 = int(np.argmin(np.abs(K.t - 3.0)))
    return {
        "j": j,
        "M": M,
        "C_u": C_u,
        "C_t": C_t,
        "C_joint": max(C_u, C_t),
        "peak": peak,
        "peak_over_Nj": peak / scale,
        "peak_small_t": float(absK[small].max()) if small.any() else float("nan"),
        "far_field_ratio": float(absK[:, far_idx].max() / peak),
        "t3_ratio": float(absK[ti3].max() / peak) if abs(K.t[ti3] - 3.0) < 0.05 else float("nan"),
        "tau_tail": K.tau_tail,
    }


def truncate_main(j, a, epsilon, Mpp, tree, gamma=None, **grid):
    """Kernel with its main part and the ``L^1(dx dt)`` norm of ``K - K^main``.

    Returns
    -------
    kernel : LocalizedKernel
    tail : float
    predicted : float
        ``N^{-j eps Mpp}``, the rate the tail is compared against.
    """
    if not 0 < epsilon <= 0.5:
        raise ValueError("epsilon must lie in (0, 1/2]")
    if Mpp not in (1, 2):
        raise ValueError("Mpp must be 1 or 2")
    K = kernel_K(j, a, tree, gamma, epsilon, **grid)
    return K, K.l1("tail"), float(tree.N) ** (-j * epsilon * Mpp)


def kernel_apply(K, f, x, t_index, which="full"):
    """``N^{j(gamma-alpha)} int f(x - t a - u) K(u, t) du`` by a Riemann sum over the u-grid."""
    arr = K.values if which == "full" else K.main
    t = K.t[t_index]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pts = x[:, None] - t * K.a_pos - K.u[None, :]
    val = (f(pts) * arr[t_index][None, :]).sum(axis=1) * K.du
    return float(K.N) ** (K.j * (K.gamma - K.alpha)) * val


def multiplier_apply(K, fhat, x, t_index, which="full"):
    """``N^{j(gamma-alpha)} int_{xi>0} f^(xi) e^{2 pi i (x - t a) xi} k(xi, t) dxi``.

    ``fhat`` must vanish for negative frequencies.  The sum over the discrete
    xi-grid is periodic in ``x - t a`` with the window width, so points must
    lie inside the sheared window.
    """
    kt = K.ktilde if which == "full" else K.ktilde_main
    t = K.t[t_index]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.abs(x - t * K.a_pos) > abs(K.u[0])):
        raise ValueError("x - t a outside the sheared window; the result would be a periodic alias")
    dxi = K.xi[1] - K.xi[0]
    ph = np.exp(2j * np.pi * np.multiply.outer(x - t * K.a_pos, K.xi))
    val = ph @ (fhat(K.xi) * kt[:, t_index]) * dxi
    return float(K.N) ** (K.j * (K.gamma - K.alpha)) * val


def falp_constant(K, p=4.0, n_probes=4, random_state=0):
    """``max ||K *_x f||_{L^p(dx dt)} / ||f||_{L^p(dx)}`` over random periodic probes.

    Probes are trigonometric polynomials on the sheared window with random
    frequencies in ``[N^j, 2 N^{j+1}]``; the convolution is circular (the
    kernel is negligible at the window edge).  Dividing the operator ratio by
    ``N^{j(gamma - alpha)}`` gives exactly this quantity.
    """
    rng = np.random.RandomState(random_state)
    n = K.u.size
    U = n * K.du
    k_lo = int(math.ceil(float(K.N) ** K.j * U))
    k_hi = int(math.floor(2 * float(K.N) ** (K.j + 1) * U))
    Khat = np.fft.fft(K.values, axis=1)
    best = 0.0
    for _ in range(n_probes):
        coef = np.zeros(n, dtype=complex)
        ks = rng.choice(np.arange(k_lo, k_hi + 1), size=min(24, k_hi - k_lo + 1), replace=False)
        coef[ks % n] = rng.standard_normal(ks.size) + 1j * rng.standard_normal(ks.size)
        f = np.fft.ifft(coef) * n
        conv = np.fft.ifft(Khat * np.fft.fft(f)[None, :], axis=1) * K.du
        num = (np.sum(np.abs(conv) ** p) * K.du * K.dt) ** (1 / p)
        den = (np.sum(np.abs(f) ** p) * K.du) ** (1 / p)
        best = max(best, float(num / den))
    return best
