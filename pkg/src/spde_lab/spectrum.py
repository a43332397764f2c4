"""Diagonal model of the operators A, Q and the space H_alpha.

All operators are diagonal in one fixed basis ``e_1, ..., e_n``:
``A e_k = -a_k e_k`` and ``Q e_k = lambda_k e_k``.  Every covariance that
appears in the dynamics is therefore a vector of per-mode variances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .report import CheckReport

# below this value of a*t the variance integral is evaluated by its series
SERIES_CUTOFF = 1e-8


@dataclass(frozen=True, eq=False)
class ModeSpectrum:
    """Eigenvalues of ``-A`` (``a``) and ``Q`` (``lam``) plus the exponent ``alpha``.

    Parameters
    ----------
    a : array_like
        Drift eigenvalues, ``A e_k = -a_k e_k``.
    lam : array_like
        Eigenvalues of ``Q``.
    alpha : float
        Noise exponent, ``alpha >= 0``.
    strict : bool
        When False, ``a_k = 0`` and ``lam_k = 0`` are accepted.  Only meant for
        degenerate test fixtures (no linear damping, no noise).
    """

    a: np.ndarray
    lam: np.ndarray
    alpha: float
    strict: bool = True

    def __post_init__(self):
        a = np.array(self.a, dtype=float, ndmin=1)
        lam = np.array(self.lam, dtype=float, ndmin=1)
        if a.ndim != 1 or a.shape != lam.shape or a.size == 0:
            raise ValueError("a and lam must be nonempty vectors of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(lam))):
            raise ValueError("eigenvalues must be finite")
        if self.alpha < 0 or not np.isfinite(self.alpha):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.strict:
            if np.any(a <= 0):
                raise ValueError("all drift eigenvalues a_k must be > 0")
            if np.any(lam <= 0):
                raise ValueError("all noise eigenvalues lambda_k must be > 0")
        elif np.any(a < 0) or np.any(lam < 0):
            raise ValueError("eigenvalues must be nonnegative")
        a.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_modes(self) -> int:
        return self.a.size

    @property
    def lam_alpha(self) -> np.ndarray:
        """Diagonal of ``Q^alpha``."""
        return self.lam ** self.alpha

    @property
    def q2a(self) -> np.ndarray:
        """Diagonal of ``Q^{2 alpha}``."""
        return self.lam ** (2.0 * self.alpha)

    @property
    def zeta1(self) -> float:
        return float(self.a.min())

    def semigroup(self, t: float) -> np.ndarray:
        """Diagonal of ``e^{tA}``."""
        return np.exp(-self.a * t)

    def with_q2a(self, q2a) -> "ModeSpectrum":
        """Copy whose ``Q^{2 alpha}`` diagonal equals ``q2a`` (alpha fixed to 1/2)."""
        return ModeSpectrum(self.a, np.asarray(q2a, dtype=float), 0.5, strict=self.strict)

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "lambda": self.lam.tolist(), "alpha": self.alpha}

    def __repr__(self):
        return f"ModeSpectrum(n_modes={self.n_modes}, alpha={self.alpha})"


@dataclass(frozen=True)
class HAlphaVector:
    """Coordinates of a vector of H_alpha in the basis ``e_k``."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))


@dataclass(frozen=True)
class CovarianceDiagonal:
    """Per-mode variances of a centred Gaussian diagonal in ``e_k``."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if np.any(q < 0):
            raise ValueError("variances must be nonnegative")
        object.__setattr__(self, "q", q)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.q)

    @property
    def trace(self) -> float:
        return float(self.q.sum())


def build_example_dirichlet(n_modes: int, alpha: float, beta: float) -> ModeSpectrum:
    """Dirichlet preset on [0, 1]: ``lambda_k = (pi k)^-2``, ``a_k = lambda_k^-beta / 2``."""
    if int(n_modes) != n_modes or n_modes < 1:
        raise ValueError(f"n_modes must be a positive integer, got {n_modes}")
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    k = np.arange(1, int(n_modes) + 1, dtype=float)
    lam = (np.pi * k) ** -2.0
    return ModeSpectrum(0.5 * lam ** (-float(beta)), lam, alpha)


def variance_factor(a, t) -> np.ndarray:
    """``(1 - e^{-2 a t}) / (2 a)`` with the ``a t -> 0`` limit ``t``."""
    a = np.asarray(a, dtype=float)
    t = float(t)
    x = a * t
    small = x < SERIES_CUTOFF
    safe_a = np.where(small, 1.0, a)
    big = -np.expm1(-2.0 * x) / (2.0 * safe_a)
    # two-term series: t (1 - a t)
    return np.where(small, t * (1.0 - x), big)


def stochastic_convolution_covariance(spec: ModeSpectrum, t: float) -> CovarianceDiagonal:
    """Covariance ``Q_t`` of the stochastic convolution at time ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return CovarianceDiagonal(spec.q2a * variance_factor(spec.a, t))


def q_infinity(spec: ModeSpectrum) -> CovarianceDiagonal:
    """Covariance ``Q_inf`` of the invariant law of the linear part."""
    if np.any(spec.a <= 0):
        raise ValueError("Q_inf requires all a_k > 0")
    return CovarianceDiagonal(spec.q2a / (2.0 * spec.a))


def halpha_inner(spec: ModeSpectrum, h, k) -> float:
    """``<h, k>_alpha = sum_j h_j k_j / lambda_j^{2 alpha}``."""
    h = h.coords if isinstance(h, HAlphaVector) else np.asarray(h, dtype=float)
    k = k.coords if isinstance(k, HAlphaVector) else np.asarray(k, dtype=float)
    return float(np.sum(h * k / spec.q2a))


def halpha_basis(spec: ModeSpectrum, j: int) -> HAlphaVector:
    """H_alpha-orthonormal basis vector ``lambda_j^alpha e_j``."""
    v = np.zeros(spec.n_modes)
    v[j] = spec.lam_alpha[j]
    return HAlphaVector(v)


def trace_condition_value(spec: ModeSpectrum, eta: float) -> float:
    """Closed form of ``int_0^inf s^-eta Tr[e^{2sA} Q^{2 alpha}] ds``."""
    return float(np.sum(spec.q2a * special.gamma(1.0 - eta) * (2.0 * spec.a) ** (eta - 1.0)))


def trace_condition_quadrature(spec: ModeSpectrum, eta: float, horizon: float = None) -> float:
    """Numeric cross-check of :func:`trace_condition_value`.

    Integrates on ``[0, horizon]`` with the algebraic endpoint weight; the
    default horizon ``50 / min a`` leaves a tail below ``e^{-100}``.
    """
    if horizon is None:
        horizon = 50.0 / spec.a.min()
    total = 0.0
    for ak, qk in zip(spec.a, spec.q2a):
        # split where the integrand has decayed to keep QUADPACK accurate
        edge = min(horizon, 50.0 / ak)
        val, _ = integrate.quad(lambda s: np.exp(-2.0 * ak * s), 0.0, edge,
                                weight="alg", wvar=(-eta, 0.0), epsabs=0.0, epsrel=1e-12,
                                limit=200)
        total += qk * val
    return total


def check_trace_condition(spec: ModeSpectrum, eta: float) -> CheckReport:
    """Finite-trace condition on the stochastic convolution for exponent ``eta``."""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    closed = trace_condition_value(spec, eta)
    numeric = trace_condition_quadrature(spec, eta)
    rel = abs(closed - numeric) / abs(closed)
    finite = bool(np.isfinite(closed))
    return CheckReport(
        "trace_condition", lhs=rel if finite else np.inf, rhs=1e-6, predicate="le",
        label=f"eta={eta:g}", oracle=True,
        metadata={"closed_form": closed, "quadrature": numeric, "eta": eta},
    )
