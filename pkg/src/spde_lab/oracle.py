"""Independent ground truths.

Closed forms for the Ornstein-Uhlenbeck semigroup on trigonometric
polynomials, Gaussian expectations by tensor Gauss-Hermite quadrature, and
the factorized Gibbs density of the gradient case,

    nu(dx) proportional to prod_k exp(-a_k x_k^2 / lambda_k^{2 alpha} - 2 u_k(x_k)) dx_k.

Nothing here calls the simulation or estimator code.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

TAIL_MASS_MAX = 1e-10
DUAL_RULE_RTOL = 1e-8
MAX_TENSOR_DIM = 6


class QuadratureFailure(RuntimeError):
    """An oracle integral could not be certified to its stated accuracy."""


def _terms(phi):
    """``(coefs, is_sin, freqs)`` of a trig polynomial."""
    return (np.asarray(phi.coefs, float), np.asarray(phi.is_sin, bool),
            np.asarray(phi.freqs, float))


def _ou_variance(a, q2a, t):
    # plain closed form, deliberately separate from the simulator's version
    a = np.asarray(a, float)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = q2a * (1.0 - np.exp(-2.0 * a * t)) / (2.0 * a)
    return np.where(a * t < 1e-8, q2a * t, v)


def ou_exact(phi, x, t: float, spec) -> np.ndarray:
    """``T(t) phi(x)`` for a trig polynomial ``phi`` (rows of ``x`` vectorized).

    Each term uses ``E[sin<m + Y, h>] = exp(-<Q_t h, h>/2) sin<m, h>``.
    """
    c, s, H = _terms(phi)
    x = np.asarray(x, float)
    m = np.exp(-spec.a * t) * x
    damp = np.exp(-0.5 * (H ** 2) @ _ou_variance(spec.a, spec.q2a, t))
    U = m @ H.T
    vals = np.where(s, np.sin(U), np.cos(U)) * (c * damp)
    return vals.sum(axis=-1)


def ou_exact_gradient(phi, x, t: float, spec) -> np.ndarray:
    """``D T(t) phi(x)`` in closed form."""
    c, s, H = _terms(phi)
    x = np.asarray(x, float)
    decay = np.exp(-spec.a * t)
    damp = np.exp(-0.5 * (H ** 2) @ _ou_variance(spec.a, spec.q2a, t))
    U = (decay * x) @ H.T
    dvals = np.where(s, np.cos(U), -np.sin(U)) * (c * damp)
    return (dvals @ H) * decay


def ou_exact_resolvent(phi, lam: float, x, spec) -> np.ndarray:
    """``int_0^inf e^{-lam t} T(t) phi(x) dt`` by adaptive 1-D quadrature."""
    x = np.atleast_2d(np.asarray(x, float))
    out = np.empty(x.shape[0])
    for i, xi in enumerate(x):
        out[i] = integrate.quad(lambda t: np.exp(-lam * t) * ou_exact(phi, xi, t, spec),
                                0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    return out


def ou_exact_resolvent_gradient(phi, lam: float, x, spec) -> np.ndarray:
    """Gradient of :func:`ou_exact_resolvent` at the rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, float))
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        for k in range(x.shape[1]):
            out[i, k] = integrate.quad(
                lambda t: np.exp(-lam * t) * ou_exact_gradient(phi, xi, t, spec)[k],
                0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    return out


def hermite_rule(order: int):
    """Probabilists' Gauss-Hermite nodes and weights normalized to sum 1."""
    z, w = np.polynomial.hermite_e.hermegauss(order)
    return z, w / w.sum()


def gaussian_functional(cov, phi, order: int = 40, active: Sequence[int] = None) -> float:
    """``E[phi(Y)]`` for ``Y ~ N(0, cov)`` by tensor Gauss-Hermite quadrature.

    Only the active coordinates of ``phi`` are integrated; the others are
    fixed at 0, which is exact because ``phi`` does not depend on them.
    """
    q = np.asarray(getattr(cov, "q", cov), float)
    idx = np.asarray(phi.active if active is None else active, dtype=int)
    if idx.size > MAX_TENSOR_DIM:
        raise ValueError(f"active dimension {idx.size} exceeds the tensor limit {MAX_TENSOR_DIM}")
    pts, w = gaussian_nodes(q, idx, order)
    return float(w @ phi.value(pts))


def gaussian_nodes(q, active, order: int):
    """Tensor Gauss-Hermite points (full state vectors) and weights for ``N(0, diag q)``."""
    q = np.asarray(q, float)
    active = np.asarray(active, dtype=int)
    z, w = hermite_rule(order)
    grids = [np.sqrt(q[k]) * z for k in active]
    wts = [w for _ in active]
    return _tensor(q.size, active, grids, wts)


def _tensor(n, active, grids, wts):
    if len(active) == 0:
        return np.zeros((1, n)), np.ones(1)
    mesh = np.meshgrid(*grids, indexing="ij")
    wmesh = np.meshgrid(*wts, indexing="ij")
    pts = np.zeros((mesh[0].size, n))
    for j, k in enumerate(active):
        pts[:, k] = mesh[j].ravel()
    weight = np.prod([m.ravel() for m in wmesh], axis=0)
    return pts, weight


@dataclass
class GibbsDensity1D:
    """Unnormalized density ``exp(l(x))``, ``l(x) = -a x^2/q2a - 2 u(x)``,
    ``u(x) = w x^2/2 + c x^4/4 + eps cos x``.

    The integration window is ``[-width, width]`` with ``width`` equal to
    ``window`` standard deviations of the Gaussian reference ``N(0, q2a/(2a))``
    (of the quadratic part when that is tighter); the mass outside it must
    be below ``1e-10``.
    """

    a: float
    q2a: float
    w: float = 0.0
    c: float = 0.0
    eps: float = 0.0
    window: float = 12.0

    def __post_init__(self):
        if self.a <= 0 or self.q2a <= 0:
            raise ValueError("a and q2a must be positive")
        if self.c < 0:
            raise ValueError("quartic coefficient must be >= 0")
        curv = 2.0 * self.a / self.q2a + 2.0 * self.w
        if self.c == 0 and curv <= 0:
            raise ValueError("density is not normalizable")
        ref = np.sqrt(self.q2a / (2.0 * self.a))
        if curv > 0:
            ref = max(ref, 1.0 / np.sqrt(curv))
        self.width = self.window * ref
        # shift so that the log-density peaks near 0 on the grid
        grid = np.linspace(-self.width, self.width, 4001)
        self.shift = float(np.max(self.logpdf_unnormalized(grid)))
        self.norm = self._quad(lambda x: np.ones_like(x))
        # beyond 4 widths the log-density is below -(4 window)^2/2 in reference units
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            tail = 2.0 * integrate.quad(
                lambda x: np.exp(self.logpdf_unnormalized(x) - self.shift),
                self.width, 4.0 * self.width, epsabs=1e-300, epsrel=1e-8, limit=200)[0]
        self.tail_mass = tail / self.norm
        if not self.tail_mass <= TAIL_MASS_MAX:
            raise QuadratureFailure(f"window misses mass {self.tail_mass:.2e}")

    def logpdf_unnormalized(self, x):
        x = np.asarray(x, float)
        u = 0.5 * self.w * x ** 2 + 0.25 * self.c * x ** 4 + self.eps * np.cos(x)
        return -self.a * x ** 2 / self.q2a - 2.0 * u

    def pdf(self, x):
        return np.exp(self.logpdf_unnormalized(x) - self.shift) / self.norm

    def _quad(self, g):
        f = lambda x: g(np.asarray(x, float)) * np.exp(self.logpdf_unnormalized(x) - self.shift)
        return integrate.quad(f, -self.width, self.width, epsabs=0.0, epsrel=1e-12,
                              limit=500, points=[0.0])[0]

    def _legendre(self, g, panels: int = 48, order: int = 24):
        z, wz = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(-self.width, self.width, panels + 1)
        tot = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            x = 0.5 * (hi - lo) * z + 0.5 * (hi + lo)
            tot += 0.5 * (hi - lo) * np.sum(wz * g(x) * np.exp(self.logpdf_unnormalized(x) - self.shift))
        return tot

    def expect(self, g) -> float:
        """``E[g(X)]`` by adaptive quadrature, cross-checked by composite Gauss-Legendre."""
        v1 = self._quad(g) / self.norm
        v2 = self._legendre(g) / self._legendre(lambda x: np.ones_like(x))
        scale = max(abs(v1), self._quad(lambda x: np.abs(g(x))) / self.norm, 1e-300)
        if abs(v1 - v2) > DUAL_RULE_RTOL * scale:
            raise QuadratureFailure(f"quadrature rules disagree: {v1!r} vs {v2!r}")
        return float(v1)

    def moment(self, p: int) -> float:
        if p < 0 or int(p) != p:
            raise ValueError("moment order must be a nonnegative integer")
        if p % 2 == 1:
            return 0.0  # even density
        return self.expect(lambda x: x ** p)

    def nodes(self, panels: int = 24, order: int = 16):
        """Composite Gauss-Legendre nodes and probability weights on the window."""
        z, wz = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(-self.width, self.width, panels + 1)
        xs, ws = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            x = 0.5 * (hi - lo) * z + 0.5 * (hi + lo)
            xs.append(x)
            ws.append(0.5 * (hi - lo) * wz * np.exp(self.logpdf_unnormalized(x) - self.shift))
        x = np.concatenate(xs)
        w = np.concatenate(ws)
        return x, w / w.sum()


def gibbs_densities(spec, potential) -> list:
    """Per-mode Gibbs densities for ``F = -Q^{2 alpha} DU``."""
    n = spec.n_modes
    w, c, e = potential.arrays(n)
    return [GibbsDensity1D(float(spec.a[k]), float(spec.q2a[k]), float(w[k]), float(c[k]),
                           float(e[k])) for k in range(n)]


def gibbs_moments(densities: Sequence[GibbsDensity1D], exponents) -> float:
    """``E_nu[prod_k x_k^{e_k}]`` as a product of 1-D moments."""
    exponents = list(exponents)
    if len(exponents) > len(densities):
        raise ValueError("more exponents than modes")
    out = 1.0
    for dens, p in zip(densities, exponents):
        if p:
            out *= dens.moment(int(p))
    return out


def gibbs_nodes(densities: Sequence[GibbsDensity1D], active, panels: int = 24, order: int = 16):
    """Tensor quadrature points (full state vectors) and weights for the Gibbs law."""
    active = np.asarray(active, dtype=int)
    if active.size > MAX_TENSOR_DIM:
        raise ValueError("too many active coordinates for tensor quadrature")
    grids, wts = [], []
    for k in active:
        x, w = densities[k].nodes(panels, order)
        grids.append(x)
        wts.append(w)
    return _tensor(len(densities), active, grids, wts)


def gaussian_moment(q: float, p: int) -> float:
    """``E[Y^p]`` for ``Y ~ N(0, q)``: ``(p-1)!! q^{p/2}`` for even ``p``."""
    if p % 2:
        return 0.0
    return float(np.prod(np.arange(p - 1, 0, -2))) * q ** (p // 2)


def ou_invariant_expect_trig(phi, spec) -> float:
    """``E[phi]`` under ``N(0, Q_inf)``: ``sum_j c_j exp(-<Q_inf h_j, h_j>/2)`` over cosines."""
    c, s, H = _terms(phi)
    qinf = spec.q2a / (2.0 * spec.a)
    return float(np.sum(np.where(s, 0.0, c * np.exp(-0.5 * (H ** 2) @ qinf))))


__all__ = [
    "QuadratureFailure", "ou_exact", "ou_exact_gradient", "ou_exact_resolvent",
    "ou_exact_resolvent_gradient", "gaussian_functional", "gaussian_nodes", "GibbsDensity1D",
    "gibbs_densities", "gibbs_moments", "gibbs_nodes", "gaussian_moment",
    "ou_invariant_expect_trig", "hermite_rule",
]
