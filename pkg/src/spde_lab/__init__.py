"""Numerical laboratory for dissipative SPDEs on a diagonal spectral model.

Simulates spectral Galerkin truncations, estimates transition and
resolvent semigroups by Monte Carlo, and checks functional inequalities
for the invariant measure against closed-form or quadrature oracles.
"""
__version__ = "0.1.0"

from .cylinder import TrigPolynomial, from_declaration
from .drift import (CertificationFailed, DissipativityCertificate, DriftSpec, PotentialSpec,
                    certify_dissipativity, compute_certificate, eval_drift, yosida_drift,
                    yosida_resolvent)
from .integrator import PathConfig, TrajectorySample, propagate, set_threads, simulate_path
from .model import SPDEModel
from .report import CheckReport
from .semigroup import (InvariantConfig, InvariantEnsemble, ResolventConfig, SimConfig,
                        estimate_gradient_pt, estimate_pt, quadrature_ensemble, resolvent,
                        sample_invariant)
from .spectrum import ModeSpectrum, build_example_dirichlet, q_infinity

__all__ = [
    "CertificationFailed", "CheckReport", "DissipativityCertificate", "DriftSpec",
    "InvariantConfig", "InvariantEnsemble", "ModeSpectrum", "PathConfig", "PotentialSpec",
    "ResolventConfig", "SPDEModel", "SimConfig", "TrajectorySample", "TrigPolynomial",
    "build_example_dirichlet", "certify_dissipativity", "compute_certificate",
    "estimate_gradient_pt", "estimate_pt", "eval_drift", "from_declaration", "propagate",
    "q_infinity", "quadrature_ensemble", "resolvent", "sample_invariant", "set_threads",
    "simulate_path", "yosida_drift", "yosida_resolvent",
]
