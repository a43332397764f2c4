"""A problem instance: spectrum plus drift, with its certificate."""
from __future__ import annotations

import numpy as np

from .drift import (DissipativityCertificate, DriftSpec, certify_dissipativity,
                    compute_certificate, drift_coefficients, sup_derivative)
from .spectrum import ModeSpectrum


class SPDEModel:
    """Binds a :class:`ModeSpectrum` and a :class:`DriftSpec`.

    Certification runs at construction unless ``certify=False`` (degenerate
    fixtures only); a failing certificate raises ``CertificationFailed``.
    """

    def __init__(self, spec: ModeSpectrum, drift: DriftSpec = None, certify: bool = True):
        self.spec = spec
        self.drift = drift if drift is not None else DriftSpec("zero")
        if certify:
            self.certificate = certify_dissipativity(self.drift, spec)
        else:
            self.certificate = compute_certificate(self.drift, spec)
        p1, p3, ps = drift_coefficients(self.drift, spec)
        self.p1 = np.ascontiguousarray(p1)
        self.p3 = np.ascontiguousarray(p3)
        self.ps = np.ascontiguousarray(ps)
        self.sup_fprime = sup_derivative(self.drift, spec)
        self.zero_drift = not (p1.any() or p3.any() or ps.any())
        self.active_modes = None

    def restrict(self, idx) -> "SPDEModel":
        """The same dynamics on the coordinates ``idx`` only.

        Exact for the shipped models: with a separable drift and diagonal
        noise every coordinate evolves independently.  The drift spec is not
        carried over; the restricted model is for simulation only.
        """
        idx = np.asarray(idx, dtype=int)
        sub = object.__new__(SPDEModel)
        sub.spec = ModeSpectrum(self.spec.a[idx], self.spec.lam[idx], self.spec.alpha,
                                strict=self.spec.strict)
        sub.drift = None
        sub.certificate = self.certificate
        sub.p1 = np.ascontiguousarray(self.p1[idx])
        sub.p3 = np.ascontiguousarray(self.p3[idx])
        sub.ps = np.ascontiguousarray(self.ps[idx])
        sub.sup_fprime = self.sup_fprime[idx]
        sub.zero_drift = self.zero_drift
        sub.active_modes = idx
        return sub

    @property
    def n_modes(self) -> int:
        return self.spec.n_modes

    @property
    def cert(self) -> DissipativityCertificate:
        return self.certificate

    def drift_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.p1 * x + self.p3 * x ** 3 + self.ps * np.sin(x)

    def drift_derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.p1 + 3.0 * self.p3 * x ** 2 + self.ps * np.cos(x)

    def to_dict(self) -> dict:
        return {"spectrum": self.spec.to_dict(), "drift": self.drift.to_dict(),
                "certificate": self.certificate.to_dict()}
