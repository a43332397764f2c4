"""Check records and their serialization.

A :class:`CheckReport` stores the numbers behind a verdict; the verdict
itself is recomputed from them, never stored independently.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

N_SIGMA = 3.0

# check name -> (equation tag, statement).  Statements are written as
# formulas in the package's own notation.
ANCHORS: Dict[str, tuple] = {
    "poincare": ("eq. (poin)",
                 "Var_nu(phi) <= (1/(2 zeta_alpha)) E_nu |D_alpha phi|_alpha^2"),
    "logsob": ("eq. (logsob)",
               "Ent_nu(|phi|^p) <= (p^2/(2 zeta_alpha)) E_nu[|phi|^(p-2) |D_alpha phi|_alpha^2]"),
    "hypercontractivity": ("eq. (hyper)",
                           "|P(t)phi|_r <= |phi|_q with r = (q-1) exp(2 zeta_alpha t) + 1"),
    "ergodicity": ("eq. (pro4)",
                   "|P(t)phi - E_nu phi|_L2(nu) <= exp(-zeta_alpha t) |phi|_L2(nu)"),
    "energy_identity": ("eq. (3dinotte)",
                        "E_nu|P(t)phi|^2 + int_0^t E_nu|D_alpha P(s)phi|_alpha^2 ds = E_nu|phi|^2"),
    "integration_by_parts": ("eq. (intparts)",
                             "E_nu[phi N0 phi] = -(1/2) E_nu |D_alpha phi|_alpha^2"),
    "resolvent_bounds": ("eq. (Saiaka)",
                         "u = R(lam, N) f: |u| <= |f|/lam, |D_alpha u| <= sqrt(2/lam) |f|, "
                         "|D_alpha^2 u| <= 2 sqrt(2) |f|"),
    "moment_bound": ("eq. (momemild)",
                     "E|X(t,x)|^k <= gamma (1 + |x|^k exp(-beta t))"),
    "gradient_commutation": ("eq. (Azala)",
                             "|D_alpha P(t)phi|_alpha^2 <= exp(-2 zeta_alpha t) P(t)|D_alpha phi|_alpha^2"),
    "product_rule": ("eq. (N_2quadro)",
                     "N0(phi psi) = phi N0 psi + psi N0 phi + <D_alpha phi, D_alpha psi>_alpha"),
}

# Auxiliary checks used by the build gate but not part of the inequality suite.
AUX_ANCHORS: Dict[str, tuple] = {
    "trace_condition": ("eq. (contconvu)",
                        "int_0^inf s^(-eta) Tr[exp(2sA) Q^(2 alpha)] ds < inf"),
    "stationarity": ("eq. (pro4)", "E_nu[N0 phi] = 0"),
    "yosida": ("eq. (eq-yos)", "Yosida approximant properties (1yy), (2yy), (3yy)"),
    "invariant_law": ("eq. (pro4)", "moments of the sampled ensemble = moments of nu"),
    "pathwise_contraction": ("Prop. (stisti)",
                             "|X(t,x) - X(t,y)| <= exp(-zeta t) |x - y|"),
}

SUITE_CHECKS = tuple(ANCHORS)


def anchor_for(name: str) -> str:
    table = ANCHORS if name in ANCHORS else AUX_ANCHORS
    if name not in table:
        raise KeyError(f"no anchor registered for check {name!r}")
    tag, statement = table[name]
    return f"{tag}: {statement}"


@dataclass
class CheckReport:
    """One numerical verdict.

    Predicates
    ----------
    ``le``
        ``lhs <= rhs * (1 + slack) + tol + n_sigma * combined_err``
    ``two_sided``
        ``|lhs - rhs| <= |rhs| * slack + tol + n_sigma * combined_err``

    ``n_sigma`` defaults to 3.
    """

    check_name: str
    lhs: float
    rhs: float
    lhs_err: float = 0.0
    rhs_err: float = 0.0
    slack: float = 0.0
    tol: float = 0.0
    predicate: str = "le"
    label: str = ""
    oracle: bool = False
    metadata: Dict[str, Any] = field(default_factory=dict)
    anchor: Optional[str] = None
    n_sigma: float = N_SIGMA

    def __post_init__(self):
        if self.anchor is None:
            self.anchor = anchor_for(self.check_name)
        if not self.anchor:
            raise ValueError("anonymous check reports are not allowed")
        if self.predicate not in ("le", "two_sided"):
            raise ValueError(f"unknown predicate {self.predicate!r}")
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.lhs_err = float(self.lhs_err)
        self.rhs_err = float(self.rhs_err)

    @property
    def combined_err(self) -> float:
        return math.hypot(self.lhs_err, self.rhs_err)

    @property
    def margin(self) -> float:
        """Positive when the predicate holds, in the units of lhs."""
        allow = self.tol + self.n_sigma * self.combined_err
        if self.predicate == "le":
            return self.rhs * (1.0 + self.slack) + allow - self.lhs
        return abs(self.rhs) * self.slack + allow - abs(self.lhs - self.rhs)

    @property
    def passed(self) -> bool:
        m = self.margin
        return bool(math.isfinite(m) and m >= 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check_name": self.check_name,
            "label": self.label,
            "anchor": self.anchor,
            "predicate": self.predicate,
            "lhs": _num(self.lhs),
            "rhs": _num(self.rhs),
            "lhs_err": _num(self.lhs_err),
            "rhs_err": _num(self.rhs_err),
            "combined_err": _num(self.combined_err),
            "slack": self.slack,
            "tol": self.tol,
            "n_sigma": self.n_sigma,
            "margin": _num(self.margin),
            "pass": self.passed,
            "oracle": self.oracle,
            "metadata": _plain(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False)

    def summary_line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        name = self.check_name + (f"[{self.label}]" if self.label else "")
        tag = self.anchor.split(":", 1)[0]
        return (f"{verdict}  {name:<48s} {tag:<18s} lhs={self.lhs:.6g} rhs={self.rhs:.6g} "
                f"margin={self.margin:.3g}")


def _num(v: float):
    v = float(v)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


def _plain(obj):
    """Convert numpy scalars/arrays inside metadata to JSON-native values."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
