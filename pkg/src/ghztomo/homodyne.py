"""Joint quadrature statistics of per-pair homodyne detectors, and a sampler.

Each polarization pair (o, e) feeds one detector that measures the quadrature
X = (A + A^dag)/2 of A = exp(-i psi_o) cos(theta) a_o + exp(-i psi_e) sin(theta) a_e.
Finite efficiency eta is modelled as Gaussian noise of variance
(1 - eta)/(4 eta) added to the ideal outcome, so the vacuum variance becomes
1/(4 eta).

Every conditional law met here has the form poly(x) * N(x; 0, 1/(4 eta)),
which is what the sampler exploits: its CDF is a finite sum of incomplete
Gaussian moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite as H
from scipy import special as sp

from .fock import MixedEnsemble, PureKet, pair_transform


@dataclass(frozen=True)
class DetectorSettings:
    """Angles for every detector; arrays of shape (..., n_pairs)."""

    theta: np.ndarray
    psi_o: np.ndarray
    psi_e: np.ndarray

    def __post_init__(self):
        arrs = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (self.theta, self.psi_o, self.psi_e)))
        for name, arr in zip(("theta", "psi_o", "psi_e"), arrs):
            object.__setattr__(self, name, arr)

    @property
    def n_pairs(self) -> int:
        return self.theta.shape[-1]

    @property
    def batch_shape(self):
        return self.theta.shape[:-1]

    @property
    def u(self):
        """Poincare weights (u_o, u_e), shape (..., n_pairs, 2)."""
        return np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)

    @property
    def psi(self):
        return np.stack([self.psi_o, self.psi_e], axis=-1)

    def __getitem__(self, item):
        return DetectorSettings(self.theta[item], self.psi_o[item], self.psi_e[item])


@dataclass(frozen=True)
class HomodyneSamples:
    """Outcomes ``x`` (N, n_pairs) together with the settings that produced them."""

    x: np.ndarray
    settings: DetectorSettings
    eta: float

    def __len__(self):
        return self.x.shape[0]


def draw_settings(rng: np.random.Generator, size: int | None = None, n_pairs: int = 3) -> DetectorSettings:
    """Random settings: uniform phases on [0, 2pi), theta with density sin(2 theta).

    ``theta = arcsin(sqrt(v))`` for uniform v makes sin^2(theta) uniform.
    """
    shape = (n_pairs,) if size is None else (size, n_pairs)
    v = rng.random(shape)
    psi_o = rng.random(shape) * 2 * math.pi
    psi_e = rng.random(shape) * 2 * math.pi
    return DetectorSettings(np.arcsin(np.sqrt(v)), psi_o, psi_e)


def smearing_variance(eta: float) -> float:
    if not 0 < eta <= 1:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    return (1 - eta) / (4 * eta)


def quadrature_wavefunction(n: int, x):
    """<x|n> for X = (a + a^dag)/2; real, normalized over x."""
    x = np.asarray(x, dtype=float)
    c = np.zeros(n + 1)
    c[n] = 1.0
    norm = (2 / math.pi) ** 0.25 / math.sqrt(2.0**n * math.factorial(n))
    return norm * H.hermval(math.sqrt(2) * x, c) * np.exp(-x * x)


def _product_polynomial(n: int, m: int) -> np.ndarray:
    """Power coefficients q with phi_n phi_m = q(y) N(y; 0, 1/4)."""
    cn = np.zeros(n + 1)
    cn[n] = 1.0
    cm = np.zeros(m + 1)
    cm[m] = 1.0
    pn = H.herm2poly(cn) * math.sqrt(2) ** np.arange(n + 1)
    pm = H.herm2poly(cm) * math.sqrt(2) ** np.arange(m + 1)
    return np.convolve(pn, pm) / math.sqrt(2.0 ** (n + m) * math.factorial(n) * math.factorial(m))


def _gaussian_moment(r: int) -> float:
    """E[Z^r] for a standard normal Z."""
    return 0.0 if r % 2 else float(sp.factorial2(r - 1)) if r > 0 else 1.0


def smeared_coefficients(dim: int, eta: float) -> np.ndarray:
    """C[n, m, j] with (phi_n phi_m * noise)(x) = N(x; 0, 1/(4 eta)) sum_j C[n, m, j] x^j.

    Given the smeared outcome x, the ideal outcome is Gaussian with mean
    eta x and variance (1 - eta)/4, which turns each product polynomial into
    a polynomial in x.
    """
    tau = math.sqrt(max(1 - eta, 0.0) / 4)
    deg = 2 * (dim - 1)
    out = np.zeros((dim, dim, deg + 1))
    for n in range(dim):
        for m in range(dim):
            q = _product_polynomial(n, m)
            for k, qk in enumerate(q):
                for j in range(k + 1):
                    out[n, m, j] += qk * math.comb(k, j) * eta**j * tau ** (k - j) * _gaussian_moment(k - j)
    return out


def smeared_matrix(x, eta: float, dim: int, coeffs: np.ndarray | None = None) -> np.ndarray:
    """S[..., n, m](x): smeared quadrature densities of |n><m|, real symmetric."""
    if coeffs is None:
        coeffs = smeared_coefficients(dim, eta)
    x = np.asarray(x, dtype=float)
    var = 1 / (4 * eta)
    gauss = np.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var)
    powers = x[..., None] ** np.arange(coeffs.shape[-1])
    return np.einsum("...j,nmj->...nm", powers, coeffs) * gauss[..., None, None]


# -- state preparation in the measured-mode basis ---------------------------------

def _pair_dim(ensemble: MixedEnsemble) -> int:
    layout = ensemble.layout
    paired = {i for pair in layout.signal_pair_indices() for i in pair}
    if len(paired) != len(layout):
        raise ValueError("every mode must belong to a detector pair")
    return ensemble.max_pair_total() + 1


def ket_tensor(ket: PureKet, dim: int) -> np.ndarray:
    """Dense amplitudes indexed (o_1, e_1, o_2, e_2, ...) per detector pair."""
    idx = ket.layout.signal_pair_indices()
    t = np.zeros((dim,) * (2 * len(idx)), dtype=complex)
    for occ, amp in ket.amplitudes.items():
        key = []
        for o, e in idx:
            if occ[o] + occ[e] >= dim:
                raise ValueError(f"pair occupation in {occ} exceeds the cutoff {dim - 1}")
            key += [occ[o], occ[e]]
        t[tuple(key)] += amp
    return t


def pair_basis_change(theta, psi_o, psi_e, dim: int) -> np.ndarray:
    """T[..., nA, nB, no, ne]: Fock amplitudes in the measured/complementary modes.

    A = w_o a_o + w_e a_e and B = -conj(w_e) a_o + conj(w_o) a_e with
    w_o = exp(-i psi_o) cos(theta), w_e = exp(-i psi_e) sin(theta). Only
    inputs with n_o + n_e < dim are filled.
    """
    theta, psi_o, psi_e = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (theta, psi_o, psi_e)))
    w_o = np.exp(-1j * psi_o) * np.cos(theta)
    w_e = np.exp(-1j * psi_e) * np.sin(theta)
    # a_o^dag = w_o A^dag - conj(w_e) B^dag,  a_e^dag = w_e A^dag + conj(w_o) B^dag
    alpha, beta, gamma, delta = w_o, -np.conj(w_e), w_e, np.conj(w_o)
    out = np.zeros(theta.shape + (dim,) * 4, dtype=complex)
    for p in range(dim):
        for q in range(dim - p):
            for (na, nb), amp in pair_transform(p, q, alpha, beta, gamma, delta).items():
                out[..., na, nb, p, q] = amp
    return out


def reduced_density(ensemble: MixedEnsemble, settings: DetectorSettings, dim: int | None = None) -> np.ndarray:
    """Density matrix of the measured modes A_1..A_P, complementary modes traced out.

    Returns shape batch + (dim**P, dim**P), row index (nA_1, ..., nA_P).
    """
    if dim is None:
        dim = _pair_dim(ensemble)
    n_pairs = settings.n_pairs
    batch = settings.batch_shape
    flat = int(np.prod(batch, dtype=int))
    th = settings.theta.reshape(flat, n_pairs)
    po = settings.psi_o.reshape(flat, n_pairs)
    pe = settings.psi_e.reshape(flat, n_pairs)
    trans = [pair_basis_change(th[:, j], po[:, j], pe[:, j], dim) for j in range(n_pairs)]
    idx = ensemble.layout.signal_pair_indices()
    size = dim**n_pairs
    rho = np.zeros((flat, size, size), dtype=complex)
    for weight, ket in ensemble.components:
        if weight == 0:
            continue
        # sum over Fock terms of outer products of per-pair (A, B) amplitude grids
        c = np.zeros((flat,) + (dim,) * (2 * n_pairs), dtype=complex)
        for occ, amp in ket.amplitudes.items():
            term = np.full((flat,), amp, dtype=complex)
            for j, (o, e) in enumerate(idx):
                if occ[o] + occ[e] >= dim:
                    raise ValueError(f"pair occupation in {occ} exceeds the cutoff {dim - 1}")
                grid = trans[j][:, :, :, occ[o], occ[e]]
                term = (term.reshape(flat, -1, 1) * grid.reshape(flat, 1, dim * dim)).reshape(flat, -1)
            c += term.reshape(c.shape)
        # axes (A_1, B_1, A_2, B_2, ...) -> (A_1..A_P, B_1..B_P)
        order = [0] + [1 + 2 * j for j in range(n_pairs)] + [2 + 2 * j for j in range(n_pairs)]
        c = c.transpose(order).reshape(flat, size, size)
        rho += weight * (c @ c.conj().transpose(0, 2, 1))
    return rho.reshape(batch + (size, size))


def joint_pdf(ensemble: MixedEnsemble, settings: DetectorSettings, eta: float, x) -> np.ndarray:
    """Joint density of the detector outcomes.

    ``x`` has shape (..., P); settings either unbatched (shape (P,)) or with a
    batch shape broadcastable against ``x.shape[:-1]``.
    """
    if eta <= 0:
        raise ValueError("efficiency must be positive")
    x = np.asarray(x, dtype=float)
    n_pairs = settings.n_pairs
    if x.shape[-1] != n_pairs:
        raise ValueError(f"need {n_pairs} outcomes per point")
    dim = _pair_dim(ensemble)
    rho = reduced_density(ensemble, settings, dim)
    batch = np.broadcast_shapes(settings.batch_shape, x.shape[:-1])
    size = dim**n_pairs
    z = int(np.prod(batch, dtype=int))
    rho = np.broadcast_to(rho, batch + (size, size)).reshape(z, size, size)
    x = np.broadcast_to(x, batch + (n_pairs,)).reshape(z, n_pairs)
    coeffs = smeared_coefficients(dim, eta)
    for j in range(n_pairs):
        rest = dim ** (n_pairs - j - 1)
        s = smeared_matrix(x[:, j], eta, dim, coeffs)
        rho = np.einsum("zaibk,zab->zik", rho.reshape(z, dim, rest, dim, rest), s)
    return rho.reshape(batch).real


# -- sampling --------------------------------------------------------------------

def _incomplete_moments(x, var: float, kmax: int):
    """J_k(x) = int_{-inf}^x y^k N(y; 0, var) dy for k = 0..kmax, stacked last."""
    sd = math.sqrt(var)
    dens = np.exp(-x * x / (2 * var)) / (sd * math.sqrt(2 * math.pi))
    out = [sp.ndtr(x / sd)]
    if kmax >= 1:
        out.append(-var * dens)
    xp = np.ones_like(x)
    for k in range(2, kmax + 1):
        xp = xp * x
        out.append((k - 1) * var * out[k - 2] - var * xp * dens)
    return np.stack(out, axis=-1)


def invert_cdf(coef: np.ndarray, var: float, u: np.ndarray, xtol: float = 1e-12, max_iter: int = 200):
    """Solve F(x) = u for densities proportional to sum_k coef[:, k] x^k N(x; 0, var).

    Safeguarded Newton iteration on the closed-form CDF, all rows at once.
    """
    kmax = coef.shape[1] - 1
    mom = np.array([_gaussian_moment(k) * var ** (k / 2) for k in range(kmax + 1)])
    z = coef @ mom
    if np.any(z <= 0):
        raise ValueError("non-positive normalization in conditional law")
    c = coef / z[:, None]
    sd = math.sqrt(var)
    lo = np.full(u.shape, -40 * sd)
    hi = np.full(u.shape, 40 * sd)
    # Gaussian quantile as the starting point
    x = np.clip(sd * sp.ndtri(np.clip(u, 1e-300, 1 - 1e-16)), lo, hi)
    active = np.ones(u.shape, dtype=bool)
    for _ in range(max_iter):
        xa = x[active]
        ca = c[active]
        cdf = np.einsum("nk,nk->n", _incomplete_moments(xa, var, kmax), ca) - u[active]
        pdf = np.polynomial.polynomial.polyval(xa, ca.T, tensor=False) * np.exp(-xa * xa / (2 * var)) / (sd * math.sqrt(2 * math.pi))
        la, ha = lo[active], hi[active]
        la = np.where(cdf < 0, xa, la)
        ha = np.where(cdf >= 0, xa, ha)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(pdf > 0, cdf / pdf, np.inf)
        new = xa - step
        inside = (new > la) & (new < ha) & np.isfinite(new)
        new = np.where(inside, new, 0.5 * (la + ha))
        done = np.abs(new - xa) <= xtol * np.maximum(1.0, np.abs(xa))
        done |= (ha - la) <= xtol
        x[active] = new
        lo[active], hi[active] = la, ha
        active[np.flatnonzero(active)[done]] = False
        if not active.any():
            break
    return x


def sample(ensemble: MixedEnsemble, settings: DetectorSettings, eta: float, rng: np.random.Generator,
           size: int | None = None) -> HomodyneSamples:
    """Draw outcomes from :func:`joint_pdf`, one detector at a time.

    Detector j is drawn from its law conditioned on the outcomes already
    drawn; the conditioning contracts the measured-mode density matrix with
    the smeared projector at the drawn value. Batched ``settings`` give one
    outcome per setting; unbatched settings with ``size`` repeat them.
    """
    if settings.theta.ndim == 1:
        n = 1 if size is None else size
        settings = DetectorSettings(*(np.broadcast_to(v, (n, settings.n_pairs)) for v in
                                      (settings.theta, settings.psi_o, settings.psi_e)))
    n, n_pairs = settings.theta.shape
    dim = _pair_dim(ensemble)
    var = 1 / (4 * eta)
    coeffs = smeared_coefficients(dim, eta)
    uniforms = rng.random((n, n_pairs))
    rho = reduced_density(ensemble, settings, dim).reshape((n,) + (dim,) * (2 * n_pairs))
    x = np.empty((n, n_pairs))
    for j in range(n_pairs):
        k = n_pairs - j
        # marginal of the first remaining detector
        m = rho.reshape((n, dim, dim ** (k - 1), dim, dim ** (k - 1)))
        marg = np.einsum("zaibi->zab", m)
        poly = np.einsum("zab,abj->zj", marg, coeffs).real
        x[:, j] = invert_cdf(poly, var, uniforms[:, j])
        if k > 1:
            s = smeared_matrix(x[:, j], eta, dim, coeffs)
            rho = np.einsum("zaibk,zab->zik", m, s)
            tr = np.einsum("zii->z", rho.reshape(n, dim ** (k - 1), dim ** (k - 1))).real
            rho = (rho / tr[:, None, None]).reshape((n,) + (dim,) * (2 * (k - 1)))
    return HomodyneSamples(x, settings, eta)
