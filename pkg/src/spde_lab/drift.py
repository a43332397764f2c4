"""Nonlinear drift ``F``: variants, dissipativity certificates and regularizations.

All variants are separable, ``F_k(x) = f_k(x_k)``, and are reduced to the
per-mode form ``f_k(y) = p1_k y + p3_k y^3 + ps_k sin(y)`` by
:func:`drift_coefficients`.  The certificate constants are computed from that
form analytically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import _kernels as K
from .spectrum import CovarianceDiagonal, ModeSpectrum

VARIANTS = ("zero", "linear_diagonal", "gradient", "cubic_diagonal")


class CertificationFailed(Exception):
    """The configured drift leaves the dissipative hypothesis class.

    Attributes
    ----------
    constants : list of str
        Names of the violated constants (``"zeta"``, ``"zeta_alpha"``).
    certificate : DissipativityCertificate
        The computed (failing) constants.
    """

    def __init__(self, constants, certificate, message):
        super().__init__(message)
        self.constants = list(constants)
        self.certificate = certificate

    @property
    def constant(self) -> str:
        return self.constants[0]


class NoConvergence(RuntimeError):
    """The implicit per-mode solve did not reach its residual tolerance."""


def _vec(v, n: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or a vector of length {n}")
    return arr


@dataclass(frozen=True)
class PotentialSpec:
    """Separable potential ``U(x) = sum_k w_k x_k^2/2 + c_k x_k^4/4 + eps_k cos(x_k)``.

    Scalars broadcast over modes.
    """

    w: object = 0.0
    c: object = 0.0
    eps: object = 0.0

    def arrays(self, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        w, c, e = _vec(self.w, n, "w"), _vec(self.c, n, "c"), _vec(self.eps, n, "eps")
        if np.any(c < 0):
            raise ValueError("quartic coefficients must be >= 0 (growth at infinity)")
        return w, c, e

    def semiconvexity(self, n: int) -> float:
        """Largest ``v`` with ``u_k'' >= v`` for every mode."""
        w, c, e = self.arrays(n)
        return float(np.min(w - np.abs(e)))

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        w, c, e = self.arrays(x.shape[-1])
        return np.sum(0.5 * w * x ** 2 + 0.25 * c * x ** 4 + e * np.cos(x), axis=-1)

    def mode_terms(self, k: int, n: int) -> Tuple[float, float, float]:
        w, c, e = self.arrays(n)
        return float(w[k]), float(c[k]), float(e[k])

    def to_dict(self) -> dict:
        return {"w": _plain(self.w), "c": _plain(self.c), "eps": _plain(self.eps)}


def _plain(v):
    return np.asarray(v, dtype=float).tolist()


@dataclass(frozen=True)
class DriftSpec:
    """Drift variant and its parameters.

    Parameters
    ----------
    variant : {"zero", "linear_diagonal", "gradient", "cubic_diagonal"}
    m : scalar or vector
        Coefficients of ``linear_diagonal``, ``F_k = m_k x_k``.
    potential : PotentialSpec
        For ``gradient``: ``F = -Q^{2 alpha} DU``.
    c : scalar or vector
        For ``cubic_diagonal``: ``F_k = -c_k x_k^3``.
    premultiply : bool
        For ``cubic_diagonal``: multiply by ``Q^{2 alpha}`` so that ``F`` has
        the ``Q^{2 alpha} G`` structure.
    """

    variant: str = "zero"
    m: object = 0.0
    potential: Optional[PotentialSpec] = None
    c: object = 0.0
    premultiply: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown drift variant {self.variant!r}")
        if self.variant == "gradient" and self.potential is None:
            raise ValueError("gradient variant needs a potential")
        if self.variant == "cubic_diagonal" and np.any(np.asarray(self.c) < 0):
            raise ValueError("cubic coefficients must be >= 0")

    @property
    def growth_degree(self) -> int:
        if self.variant == "cubic_diagonal" and np.any(np.asarray(self.c) != 0):
            return 3
        if self.variant == "gradient" and np.any(np.asarray(self.potential.c) != 0):
            return 3
        return 1

    def growth_constant(self, spec: ModeSpectrum) -> float:
        """``C`` with ``|F(x)| <= C (1 + |x|^m)`` for every ``x``."""
        p1, p3, ps = drift_coefficients(self, spec)
        C = np.abs(p1).max() + np.abs(p3).max() + np.sqrt(np.sum(ps ** 2))
        return float(C) if C > 0 else 1.0

    def is_zero(self, spec: ModeSpectrum) -> bool:
        return not any(np.any(p != 0) for p in drift_coefficients(self, spec))

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        if self.variant == "linear_diagonal":
            out["m"] = _plain(self.m)
        elif self.variant == "gradient":
            out["potential"] = self.potential.to_dict()
        elif self.variant == "cubic_diagonal":
            out["c"] = _plain(self.c)
            out["premultiply"] = bool(self.premultiply)
        return out


def drift_coefficients(d: DriftSpec, spec: ModeSpectrum):
    """Per-mode ``(p1, p3, ps)`` with ``f_k(y) = p1 y + p3 y^3 + ps sin y``."""
    n = spec.n_modes
    zero = np.zeros(n)
    if d.variant == "zero":
        return zero, zero.copy(), zero.copy()
    if d.variant == "linear_diagonal":
        return _vec(d.m, n, "m"), zero, zero.copy()
    if d.variant == "cubic_diagonal":
        c = _vec(d.c, n, "c")
        scale = spec.q2a if d.premultiply else 1.0
        return zero, -c * scale, zero.copy()
    w, c, e = d.potential.arrays(n)
    q = spec.q2a
    # F = -q u'(y) with u' = w y + c y^3 - eps sin y
    return -q * w, -q * c, q * e


def sup_derivative(d: DriftSpec, spec: ModeSpectrum) -> np.ndarray:
    """Upper bound ``s_k >= sup_y f_k'(y)`` (exact for every shipped variant)."""
    p1, p3, ps = drift_coefficients(d, spec)
    if np.any(p3 > 0):
        return np.full(spec.n_modes, np.inf)
    return p1 + np.abs(ps)


def one_sided_constant(d: DriftSpec, spec: ModeSpectrum) -> float:
    """``zeta_2``: one-sided Lipschitz constant of ``F``, clipped below at 0."""
    return float(max(0.0, sup_derivative(d, spec).max()))


@dataclass(frozen=True)
class DissipativityCertificate:
    zeta1: float
    zeta2: float
    zeta: float
    zeta_alpha: float
    mode_bounds: Tuple[float, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return self.zeta > 0 and self.zeta_alpha > 0

    def to_dict(self) -> dict:
        return {"zeta1": self.zeta1, "zeta2": self.zeta2, "zeta": self.zeta,
                "zeta_alpha": self.zeta_alpha}


def compute_certificate(d: DriftSpec, spec: ModeSpectrum) -> DissipativityCertificate:
    """Constants without the pass/fail gate."""
    s = sup_derivative(d, spec)
    zeta1 = spec.zeta1
    zeta2 = float(max(0.0, s.max()))
    # <(A + DF)h, h>_alpha = sum_k (f_k' - a_k) h_k^2 / lambda_k^{2 alpha}
    mode = spec.a - s
    return DissipativityCertificate(zeta1, zeta2, zeta1 - zeta2, float(mode.min()),
                                    tuple(float(v) for v in mode))


def certify_dissipativity(d: DriftSpec, spec: ModeSpectrum) -> DissipativityCertificate:
    """Certified ``zeta_1, zeta_2, zeta, zeta_alpha``.

    Raises
    ------
    CertificationFailed
        If ``zeta <= 0`` or ``zeta_alpha <= 0``.
    """
    cert = compute_certificate(d, spec)
    failed, msgs = [], []
    if not cert.zeta > 0:
        failed.append("zeta")
        msgs.append(f"zeta = zeta1 - zeta2 = {cert.zeta1:.6g} - {cert.zeta2:.6g} = "
                    f"{cert.zeta:.6g} <= 0: one-sided dissipativity in X violated")
    if not cert.zeta_alpha > 0:
        failed.append("zeta_alpha")
        msgs.append(f"zeta_alpha = {cert.zeta_alpha:.6g} <= 0: "
                    f"dissipativity of A + DF in H_alpha violated")
    if failed:
        raise CertificationFailed(failed, cert, "; ".join(msgs))
    return cert


def _rows(x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.ascontiguousarray(np.atleast_2d(x)), single


def _check_dim(x: np.ndarray, spec: ModeSpectrum):
    if x.shape[-1] != spec.n_modes:
        raise ValueError(f"state dimension {x.shape[-1]} != n_modes {spec.n_modes}")


def eval_drift(d: DriftSpec, spec: ModeSpectrum, x) -> np.ndarray:
    """``F(x)`` for one state or a stack of states (last axis = modes)."""
    x = np.asarray(x, dtype=float)
    _check_dim(x, spec)
    p1, p3, ps = drift_coefficients(d, spec)
    return p1 * x + p3 * x ** 3 + ps * np.sin(x)


def eval_drift_derivative(d: DriftSpec, spec: ModeSpectrum, x) -> np.ndarray:
    """Diagonal of the Jacobian ``DF(x)``."""
    x = np.asarray(x, dtype=float)
    _check_dim(x, spec)
    p1, p3, ps = drift_coefficients(d, spec)
    return p1 + 3.0 * p3 * x ** 2 + ps * np.cos(x)


def eval_drift_jacobian_action(d: DriftSpec, spec: ModeSpectrum, x, h) -> np.ndarray:
    """``DF(x) h``."""
    h = np.asarray(h, dtype=float)
    _check_dim(h, spec)
    return eval_drift_derivative(d, spec, x) * h


def yosida_resolvent(d: DriftSpec, spec: ModeSpectrum, zeta2: float, delta: float, x) -> np.ndarray:
    """``x_delta`` solving ``y - delta (F(y) - zeta2 y) = x``.

    Raises
    ------
    NoConvergence
        If a coordinate fails to converge (drift outside the dissipative class).
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    X, single = _rows(x)
    _check_dim(X, spec)
    p1, p3, ps = drift_coefficients(d, spec)
    out = np.empty_like(X)
    status = K.resolve_array(X, float(delta), float(zeta2), p1, p3, ps, out)
    if status != K.OK:
        raise NoConvergence(f"Yosida resolvent failed for delta={delta}, zeta2={zeta2}")
    return out[0] if single else out


def yosida_drift(d: DriftSpec, spec: ModeSpectrum, delta: float, x, zeta2: float = None) -> np.ndarray:
    """``F_delta(x) = F(x_delta)``; ``zeta2`` defaults to the certified value."""
    if zeta2 is None:
        zeta2 = one_sided_constant(d, spec)
    return eval_drift(d, spec, yosida_resolvent(d, spec, zeta2, delta, x))


@dataclass(frozen=True)
class QuadratureSpec:
    """Expectation rule: tensorized Gauss-Hermite or plain Monte Carlo."""

    kind: str = "gauss_hermite"
    order: int = 32
    n_mc: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gauss_hermite", "mc"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")


@dataclass(frozen=True)
class SmoothedValue:
    value: np.ndarray
    error: np.ndarray


def _gh_expect_modes(func, mean, sd, order):
    """``E[func(mean_k + sd_k Z)]`` per mode by Gauss-Hermite (probabilists')."""
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    pts = mean[None, :] + sd[None, :] * z[:, None]
    return w @ func(pts)


def mehler_smoothed_drift(d: DriftSpec, spec: ModeSpectrum, delta: float, s: float,
                          B: CovarianceDiagonal, x, quadrature: QuadratureSpec = QuadratureSpec(),
                          zeta2: float = None) -> SmoothedValue:
    """``F_{delta,s}(x) = E[F_delta(e^{-(s/2) B^-1} x + Y)]``, ``Y ~ N(0, B_s)``.

    ``B_s`` has entries ``b_k (1 - e^{-s/b_k})``.  For separable drifts the
    expectation factorizes over modes and is computed by 1-D Gauss-Hermite;
    the error estimate is the difference to a rule with 3/4 of the nodes.
    With ``kind="mc"`` a sample mean and its standard error are returned.
    """
    if not s > 0:
        raise ValueError("s must be > 0")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    x = np.asarray(x, dtype=float)
    _check_dim(x, spec)
    b = np.asarray(B.q, dtype=float)
    if np.any(b <= 0):
        raise ValueError("B must have positive entries")
    if zeta2 is None:
        zeta2 = one_sided_constant(d, spec)
    mean = np.exp(-0.5 * s / b) * x
    sd = np.sqrt(b * -np.expm1(-s / b))

    def fd(pts):
        return yosida_drift(d, spec, delta, pts, zeta2=zeta2)

    if quadrature.kind == "gauss_hermite":
        hi = _gh_expect_modes(fd, mean, sd, quadrature.order)
        lo = _gh_expect_modes(fd, mean, sd, max(2, (3 * quadrature.order) // 4))
        return SmoothedValue(hi, np.abs(hi - lo))
    rng = np.random.default_rng(quadrature.seed)
    pts = mean + sd * rng.standard_normal((quadrature.n_mc, x.size))
    vals = fd(pts)
    return SmoothedValue(vals.mean(axis=0), vals.std(axis=0, ddof=1) / np.sqrt(quadrature.n_mc))
