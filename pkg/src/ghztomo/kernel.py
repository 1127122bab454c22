"""Unbiased homodyne estimators for multimode density-matrix elements.

One detector measures the quadrature X = (A + A^dag)/2 of the combined mode
A = sum_l exp(-i psi_l) u_l a_l over M + 1 physical modes. For a sample x the
estimator of <{n}| rho |{m}> is

    exp(i sum_l (n_l - m_l) psi_l) kappa^(M+1)/M!
      prod_l [(-i sqrt(kappa) u_l)^(mu_l - nu_l) sqrt(nu_l!/mu_l!)]
      int_0^inf dt exp(-t + 2i sqrt(kappa t) x) t^(M + sum(mu-nu)/2)
      prod_l L_{nu_l}^{mu_l - nu_l}(kappa u_l^2 t),

with mu = max(n, m), nu = min(n, m) and kappa = 2 eta / (2 eta - 1). Averaged
over uniform phases, the Poincare-sphere measure for u, and homodyne data at
efficiency eta, it reproduces the matrix element exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .special import halfline_moments, laguerre_coefficients, truncation_point

KERNEL_TOL = 1e-10


class KernelConvergenceError(RuntimeError):
    pass


def kappa(eta: float) -> float:
    if not 0.5 < eta <= 1:
        raise ValueError(f"homodyne efficiency must lie in (0.5, 1], got {eta}")
    return 2 * eta / (2 * eta - 1)


@dataclass(frozen=True)
class KernelRequest:
    """Matrix element <n| . |m> on the modes seen by one detector."""

    n: tuple[int, ...]
    m: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if len(self.n) != len(self.m) or not self.n:
            raise ValueError("n and m need the same, non-zero length")
        if min(self.n + self.m) < 0:
            raise ValueError("occupations must be non-negative")

    @property
    def n_modes(self) -> int:
        return len(self.n)

    @property
    def mu(self):
        return tuple(max(a, b) for a, b in zip(self.n, self.m))

    @property
    def nu(self):
        return tuple(min(a, b) for a, b in zip(self.n, self.m))

    def s_polynomial(self, u, kap):
        """Orders and per-sample coefficients of the integrand polynomial in s = sqrt(t).

        The t-integral equals ``sum_i coef[:, i] * I_{orders[i]}``.
        """
        u = np.atleast_2d(u)
        big_m = self.n_modes - 1
        shift = 1 + 2 * big_m + sum(a - b for a, b in zip(self.mu, self.nu))
        coef = np.full((u.shape[0], 1), 2.0)
        for l, (mu, nu) in enumerate(zip(self.mu, self.nu)):
            lag = laguerre_coefficients(nu, mu - nu)
            scale = (kap * u[:, l] ** 2)[:, None] ** np.arange(nu + 1)
            factor = lag[None, :] * scale
            new = np.zeros((coef.shape[0], coef.shape[1] + nu))
            for i in range(nu + 1):
                new[:, i:i + coef.shape[1]] += factor[:, i:i + 1] * coef
            coef = new
        orders = shift + 2 * np.arange(coef.shape[1])
        return orders, coef

    def prefactor(self, u, psi, kap):
        u = np.atleast_2d(u)
        psi = np.atleast_2d(psi)
        big_m = self.n_modes - 1
        out = np.full(u.shape[0], kap ** (big_m + 1) / math.factorial(big_m), dtype=complex)
        phase = np.zeros(u.shape[0])
        for l, (n, m, mu, nu) in enumerate(zip(self.n, self.m, self.mu, self.nu)):
            out *= (-1j * math.sqrt(kap) * u[:, l]) ** (mu - nu)
            out *= math.sqrt(math.factorial(nu) / math.factorial(mu))
            phase += (n - m) * psi[:, l]
        return out * np.exp(1j * phase)


def kernel_values(x, u, psi, requests, eta: float, tol: float = KERNEL_TOL):
    """Estimator values for several requests on the same detector data.

    ``x`` has shape (N,), ``u`` and ``psi`` shape (N, M + 1). The t-integrals
    share one adaptive quadrature per sample. Returns an (len(requests), N)
    complex array.
    """
    kap = kappa(eta)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.asarray(u, dtype=float).reshape(x.size, -1)
    psi = np.asarray(psi, dtype=float).reshape(x.size, -1)
    polys = []
    prefs = []
    scale = 0.0
    for req in requests:
        if req.n_modes != u.shape[1]:
            raise ValueError(f"request {req} does not match {u.shape[1]} modes")
        orders, coef = req.s_polynomial(u, kap)
        pref = req.prefactor(u, psi, kap)
        polys.append((orders, coef))
        prefs.append(pref)
        if x.size:
            scale = max(scale, float(np.max(np.abs(pref) * np.abs(coef).sum(axis=1))))
    all_orders = sorted({int(o) for orders, _ in polys for o in orders})
    col = {o: i for i, o in enumerate(all_orders)}
    moment_tol = tol / max(scale, 1.0)
    moments, ok = halfline_moments(math.sqrt(kap) * x, all_orders, tol=moment_tol)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise KernelConvergenceError(
            f"kernel quadrature did not reach {tol:g} for {list(requests)} at x={float(x[bad])!r}, eta={eta}"
        )
    out = np.empty((len(requests), x.size), dtype=complex)
    for r, ((orders, coef), pref) in enumerate(zip(polys, prefs)):
        cols = [col[int(o)] for o in orders]
        out[r] = pref * np.einsum("ni,ni->n", coef, moments[:, cols])
    return out


def matrix_element_kernel(x, theta, psi_o, psi_e, n, m, eta: float, tol: float = KERNEL_TOL):
    """Estimator of <n_o n_e| rho |m_o m_e> for one polarization-pair detector.

    The pair weights are u = (cos theta, sin theta).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta, psi_o, psi_e = (np.broadcast_to(v, x.shape) for v in (theta, psi_o, psi_e))
    u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    psi = np.stack([psi_o, psi_e], axis=-1)
    return kernel_values(x, u, psi, [KernelRequest(n, m)], eta, tol)[0]


def _normal_ordered_displacement(beta, dim: int) -> np.ndarray:
    """<n| exp(beta a^dag) exp(-conj(beta) a) |m> for n, m < dim, batched over ``beta``."""
    beta = np.asarray(beta, dtype=complex)
    fact = [math.factorial(k) for k in range(dim)]
    up = np.zeros(beta.shape + (dim, dim), dtype=complex)
    down = np.zeros(beta.shape + (dim, dim), dtype=complex)
    for i in range(dim):
        for k in range(i + 1):
            c = math.sqrt(fact[i] / fact[k]) / fact[i - k]
            up[..., i, k] = c * beta ** (i - k)
            down[..., k, i] = c * (-np.conj(beta)) ** (i - k)
    return up @ down


def _trace_with_displacement(op: np.ndarray, betas: np.ndarray, dim: int) -> np.ndarray:
    """Tr[op * (x)_l E(beta_l)] for ``betas`` of shape (K, L)."""
    k = betas.shape[0]
    mat = np.ones((k, 1, 1), dtype=complex)
    for col in range(betas.shape[1]):
        e = _normal_ordered_displacement(betas[:, col], dim)
        mat = np.einsum("kab,kcd->kacbd", mat, e).reshape(k, mat.shape[1] * dim, mat.shape[2] * dim)
    return np.einsum("ij,kji->k", op, mat)


def _embed(op: np.ndarray, n_modes: int, dim: int, new_dim: int) -> np.ndarray:
    t = op.reshape((dim,) * (2 * n_modes))
    out = np.zeros((new_dim,) * (2 * n_modes), dtype=complex)
    out[tuple(slice(0, dim) for _ in range(2 * n_modes))] = t
    return out.reshape(new_dim**n_modes, new_dim**n_modes)


def _composite_gauss_legendre(s_max: float, panels: int, order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    h = s_max / panels
    left = np.arange(panels)[:, None] * h
    return (left + 0.5 * h * (t + 1)).ravel(), np.tile(0.5 * h * w, panels)


def generic_operator_kernel(op, x: float, u, psi, eta: float, tol: float = KERNEL_TOL) -> complex:
    """Estimator of Tr[rho op] for an operator given in a truncated Fock basis.

    ``op`` is a (d^L, d^L) matrix over L = M + 1 modes (mode 0 most
    significant). The exponential inside the trace is taken normally
    ordered, which makes the vacuum kernel kappa * int exp(-t) dt. The
    s-integral uses two composite Gauss-Legendre rules of different order;
    their difference is the error estimate. The trace is recomputed with one
    extra Fock level to confirm the truncation.
    """
    kap = kappa(eta)
    u = np.asarray(u, dtype=float).ravel()
    psi = np.asarray(psi, dtype=float).ravel()
    n_modes = u.size
    big_m = n_modes - 1
    op = np.asarray(op, dtype=complex)
    dim = round(op.shape[0] ** (1 / n_modes))
    if op.shape != (dim**n_modes, dim**n_modes):
        raise ValueError(f"operator shape {op.shape} does not fit {n_modes} modes")
    if not np.any(op):
        return 0j
    pref = kap ** (big_m + 1) / math.factorial(big_m)
    s_max = truncation_point(2 * big_m + 1 + 2 * (dim - 1) * n_modes, tol * 1e-3 / pref)
    root_k = math.sqrt(kap)
    phase = u * np.exp(1j * psi)

    def integrand(s, operator=op, d=dim):
        betas = -1j * root_k * s[:, None] * phase[None, :]
        tr = _trace_with_displacement(operator, betas, d)
        return np.exp(-s * s + 2j * root_k * x * s) * 2 * s ** (2 * big_m + 1) * tr

    panels = max(8, int(math.ceil(s_max * (1 + root_k * abs(x)))))
    results = []
    for order in (16, 24):
        nodes, weights = _composite_gauss_legendre(s_max, panels, order)
        results.append(pref * np.dot(weights, integrand(nodes)))
    probe = np.array([0.5, 1.5, 3.0])
    if np.max(np.abs(integrand(probe) - integrand(probe, _embed(op, n_modes, dim, dim + 1), dim + 1))) > 1e-8:
        raise ValueError("Fock truncation too small for this operator")
    if abs(results[1] - results[0]) > tol:
        raise KernelConvergenceError(f"generic kernel quadrature error {abs(results[1] - results[0]):g} > {tol:g}")
    return complex(results[1])


def fock_operator(n, m, dim: int) -> np.ndarray:
    """|m><n| on len(n) modes, each truncated at ``dim`` levels."""
    def index(occ):
        i = 0
        for v in occ:
            i = i * dim + v
        return i
    size = dim ** len(n)
    op = np.zeros((size, size), dtype=complex)
    op[index(m), index(n)] = 1.0
    return op


def all_requests(n_modes: int, n_max: int):
    """Every KernelRequest with occupations up to n_max on n_modes modes."""
    occs = list(product(range(n_max + 1), repeat=n_modes))
    return [KernelRequest(a, b) for a in occs for b in occs]
