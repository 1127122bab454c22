"""Laguerre polynomials and half-line Gaussian moment integrals.

The tomographic kernels reduce to integrals

    I_k(b) = int_0^inf s^k exp(-s^2 + 2 i b s) ds,

computed here by vectorized adaptive Gauss-Kronrod quadrature (primary) and
by the Faddeeva-function recursion (used as an independent check).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import Polynomial
from scipy import special as sp


def laguerre(n: int, alpha: float, z):
    """Generalized Laguerre polynomial L_n^alpha(z) by upward recurrence.

    ``z`` may be a scalar, an array, or a ``numpy.polynomial.Polynomial``
    (in which case the polynomial itself is returned).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    prev = 1.0 + 0 * z
    if n == 0:
        return prev
    cur = 1.0 + alpha - z
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - z) * cur - (k + alpha) * prev) / (k + 1)
    return cur


def laguerre_coefficients(n: int, alpha: float) -> np.ndarray:
    """Power-series coefficients of L_n^alpha, lowest order first."""
    poly = laguerre(n, alpha, Polynomial([0.0, 1.0]))
    return np.pad(np.asarray(poly.coef, dtype=float), (0, max(0, n + 1 - len(poly.coef))))


# 15-point Kronrod rule and its embedded 7-point Gauss rule on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
G_WEIGHTS = np.zeros(15)
G_WEIGHTS[[1, 3, 5, 13, 11, 9]] = np.concatenate([_WG[:3], _WG[:3]])
G_WEIGHTS[7] = _WG[3]


def gaussian_tail_bound(k: int, s_max: float) -> float:
    """Upper bound of int_{s_max}^inf s^k exp(-s^2) ds."""
    a = (k + 1) / 2
    return 0.5 * sp.gammaincc(a, s_max**2) * sp.gamma(a)


def truncation_point(kmax: int, tol: float, start: float = 6.0) -> float:
    s_max = start
    while max(gaussian_tail_bound(k, s_max) for k in range(kmax + 1)) > tol:
        s_max += 0.5
    return s_max


class QuadratureError(RuntimeError):
    pass


def _panel_moments(f, s, orders):
    """Kronrod sums and Gauss/Kronrod error for panels of 15 nodes.

    ``f`` holds integrand values times the half-width and ``s`` the nodes, both
    shaped (m, 15).
    """
    powers = s[..., None] ** orders
    kron = np.einsum("mj,mjk->mk", f, powers * GK_WEIGHTS[:, None])
    diff = np.einsum("mj,mjk->mk", f, powers * (GK_WEIGHTS - G_WEIGHTS)[:, None])
    return kron, np.abs(diff).max(axis=-1)


def halfline_moments(b, orders, tol: float = 1e-12, s_max: float | None = None,
                     panel: float = 0.25, max_depth: int = 12):
    """Adaptive Gauss-Kronrod evaluation of I_k(b) for k in ``orders``.

    Every entry of ``b`` gets its own panels on [0, s_max]; a panel is
    accepted when the Kronrod/Gauss difference, maximized over k, is below
    its share ``tol * width / s_max`` and is bisected otherwise.

    Returns ``(moments, converged)`` with shapes ``b.shape + (len(orders),)``
    and ``b.shape``. The truncation ``s_max`` defaults to the smallest point
    where the analytic tail bound drops below ``tol``.
    """
    orders = np.atleast_1d(np.asarray(orders, dtype=int))
    b = np.asarray(b, dtype=float)
    shape = b.shape
    flat = b.ravel()
    n = flat.size
    if s_max is None:
        s_max = truncation_point(int(orders.max()), tol)
    n_panels = max(1, int(math.ceil(s_max / panel)))
    h = s_max / n_panels
    n_ord = orders.size
    converged = np.ones(n, dtype=bool)

    # first pass on the shared panel grid; the oscillatory factor splits into
    # a per-panel phase (unit modulus) times a per-node factor
    xi = 0.5 * (1.0 + GK_NODES) * h
    s0 = np.arange(n_panels)[:, None] * h + xi
    weighted = (np.exp(-s0 * s0) * 0.5 * h)[..., None] * s0[..., None] ** orders
    kron_w = (weighted * GK_WEIGHTS[None, :, None]).transpose(1, 0, 2).reshape(15, -1)
    diff_w = (weighted * (GK_WEIGHTS - G_WEIGHTS)[None, :, None]).transpose(1, 0, 2).reshape(15, -1)
    node_phase = np.exp(2j * flat[:, None] * xi)
    panel_phase = np.exp(2j * flat[:, None] * h * np.arange(n_panels))
    kron = (node_phase @ kron_w).reshape(n, n_panels, n_ord)
    err = np.abs((node_phase @ diff_w).reshape(n, n_panels, n_ord)).max(axis=-1)
    ok = err <= tol * h / s_max
    moments = np.einsum("np,npk->nk", panel_phase * ok, kron)
    idx, pan = np.nonzero(~ok)
    left = pan * h
    width = np.full(idx.size, h)

    for depth in range(1, max_depth + 1):
        if idx.size == 0:
            break
        idx = np.repeat(idx, 2)
        width = np.repeat(width / 2, 2)
        left = np.repeat(left, 2) + np.tile([0.0, 1.0], idx.size // 2) * width
        half = 0.5 * width[:, None]
        s = left[:, None] + half * (1.0 + GK_NODES)
        f = np.exp(-s * s + 2j * flat[idx][:, None] * s) * half
        kron, err = _panel_moments(f, s, orders)
        ok = err <= tol * width / s_max
        if depth == max_depth:
            converged[np.unique(idx[~ok])] = False
            ok[:] = True
        for k in range(n_ord):
            moments[:, k] += np.bincount(idx[ok], kron[ok, k].real, minlength=n)
            moments[:, k] += 1j * np.bincount(idx[ok], kron[ok, k].imag, minlength=n)
        bad = ~ok
        idx, left, width = idx[bad], left[bad], width[bad]
    return moments.reshape(shape + (n_ord,)), converged.reshape(shape)


def halfline_moments_faddeeva(b, kmax: int):
    """I_k(b) from the Faddeeva function and the integration-by-parts recursion

        I_{k+1} = i b I_k + (k I_{k-1} + [k == 0]) / 2.

    Loses relative accuracy for large |b| and k; meant for cross-checks.
    """
    b = np.asarray(b, dtype=float)
    out = np.empty(b.shape + (kmax + 1,), dtype=complex)
    out[..., 0] = 0.5 * math.sqrt(math.pi) * sp.wofz(b)
    for k in range(kmax):
        prev = out[..., k - 1] if k > 0 else 0.0
        out[..., k + 1] = 1j * b * out[..., k] + (k * prev + (k == 0)) / 2
    return out
