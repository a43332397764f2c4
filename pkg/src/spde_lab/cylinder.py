"""Test functions: trigonometric polynomials and smooth cylinder functions.

All functions accept a single state ``x`` (shape ``(n,)``) or a stack of
states (shape ``(m, n)``) and return values, gradients ``(m, n)`` and
Hessians ``(m, n, n)`` accordingly.

For ``phi(x) = c sin<x, h>`` the Kolmogorov operator

    N0 phi = (1/2) Tr[Q^{2 alpha} D^2 phi] + <x, A D phi> + <F(x), D phi>

evaluates to ``c [(<x, Ah> + <F(x), h>) cos<x, h> - (1/2)|Q^alpha h|^2 sin<x, h>]``
and analogously for cosines.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels as K
from .spectrum import HAlphaVector, ModeSpectrum

FD_EPS = 1e-5


def _rows(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def _drift_values(d, spec, X):
    from .model import SPDEModel

    if d is None:
        return np.zeros_like(X)
    if isinstance(d, SPDEModel):
        return d.drift_values(X)
    from .drift import eval_drift

    return eval_drift(d, spec, X)


class CylinderFunction:
    """Smooth function of finitely many coordinates with exact derivatives.

    Subclasses implement ``_value``, ``_grad`` and ``_hess`` on 2-D stacks.
    """

    n_modes: int

    def value(self, x):
        X, single = _rows(x)
        v = self._value(X)
        return v[0] if single else v

    __call__ = value

    def gradient(self, x):
        X, single = _rows(x)
        g = self._grad(X)
        return g[0] if single else g

    def hessian(self, x):
        X, single = _rows(x)
        H = self._hess(X)
        return H[0] if single else H

    @property
    def active(self) -> np.ndarray:
        """Indices of coordinates the function depends on."""
        return np.arange(self.n_modes)

    @property
    def is_constant(self) -> bool:
        return self.active.size == 0

    def validate(self, scale: float = 0.5, n_points: int = 3, seed: int = 12345) -> None:
        """Compare analytic derivatives with central differences.

        Accepts if the difference is below ``1e-6 (1 + |ref|)`` or shrinks
        at the second-order rate when the step is halved.
        """
        rng = np.random.default_rng(seed)
        X = scale * rng.standard_normal((n_points, self.n_modes))
        g = self._grad(X)
        H = self._hess(X)
        for j in self.active:
            e = np.zeros(self.n_modes)
            errs_g, errs_h = [], []
            for eps in (FD_EPS, FD_EPS / 2):
                e[:] = 0.0
                e[j] = eps
                fd_g = (self._value(X + e) - self._value(X - e)) / (2 * eps)
                fd_h = (self._grad(X + e) - self._grad(X - e)) / (2 * eps)
                errs_g.append(np.max(np.abs(fd_g - g[:, j]) / (1 + np.abs(g[:, j]))))
                errs_h.append(np.max(np.abs(fd_h - H[:, :, j]) / (1 + np.abs(H[:, :, j]))))
            for name, (e1, e2) in (("gradient", errs_g), ("hessian", errs_h)):
                if e1 > 1e-6 and not e2 <= 0.3 * e1 + 1e-12:
                    raise ValueError(f"{name} of {self!r} disagrees with finite differences "
                                     f"(coordinate {j}, error {e1:.3g})")


def gradient(phi: CylinderFunction, x):
    """``D phi(x)``."""
    return phi.gradient(x)


def halpha_gradient(phi: CylinderFunction, spec: ModeSpectrum, x) -> HAlphaVector:
    """``D_alpha phi(x) = Q^{2 alpha} D phi(x)``."""
    return HAlphaVector(spec.q2a * phi.gradient(x))


def halpha_grad_sq(phi: CylinderFunction, spec: ModeSpectrum, x):
    """``|D_alpha phi(x)|_alpha^2 = sum_k lambda_k^{2 alpha} (d_k phi)^2``."""
    g = phi.gradient(x)
    return np.sum(spec.q2a * g * g, axis=-1)


def hessian_trace_qalpha(phi: CylinderFunction, spec: ModeSpectrum, x):
    """``Tr[Q^{2 alpha} D^2 phi(x)]``."""
    if isinstance(phi, TrigPolynomial):
        return phi.hessian_trace(spec.q2a, x)
    H = phi.hessian(x)
    return np.einsum("...kk,k->...", H, spec.q2a)


def apply_kolmogorov(phi: CylinderFunction, d, spec: ModeSpectrum, x):
    """``N0 phi(x)`` with exact derivatives (closed form for trig polynomials)."""
    X, single = _rows(x)
    F = _drift_values(d, spec, X)
    if isinstance(phi, TrigPolynomial):
        out = phi._kolmogorov(spec, X, F)
    else:
        g = phi._grad(X)
        out = 0.5 * hessian_trace_qalpha(phi, spec, X) + np.sum((F - spec.a * X) * g, axis=1)
    return out[0] if single else out


def eval(phi: CylinderFunction, x):  # noqa: A001 - mirrors the operation name
    return phi.value(x)


class TrigPolynomial(CylinderFunction):
    """``sum_j c_j sin<x, h_j>`` or ``c_j cos<x, h_j>``.

    Terms are canonical: the first nonzero entry of each frequency is
    positive, equal terms are merged, zero terms and ``sin(0)`` are dropped.
    A constant is stored as ``cos<x, 0>``.
    """

    def __init__(self, coefs, kinds, freqs, n_modes: int = None):
        coefs = np.asarray(coefs, dtype=float).ravel()
        freqs = np.asarray(freqs, dtype=float)
        if freqs.ndim == 1:
            freqs = freqs[None, :] if coefs.size == 1 and freqs.size else freqs.reshape(coefs.size, -1)
        if n_modes is None:
            if freqs.size == 0 and coefs.size == 0:
                raise ValueError("n_modes required for an empty polynomial")
            n_modes = freqs.shape[1]
        freqs = freqs.reshape(coefs.size, n_modes)
        is_sin = np.array([_kind(k) for k in kinds], dtype=bool).reshape(coefs.size)
        self.n_modes = int(n_modes)
        self.coefs, self.is_sin, self.freqs = _canonical(coefs, is_sin, freqs)

    @classmethod
    def sin(cls, h, c: float = 1.0):
        h = np.asarray(h, dtype=float)
        return cls([c], ["sin"], h[None, :])

    @classmethod
    def cos(cls, h, c: float = 1.0):
        h = np.asarray(h, dtype=float)
        return cls([c], ["cos"], h[None, :])

    @classmethod
    def const(cls, c: float, n_modes: int):
        return cls([c], ["cos"], np.zeros((1, n_modes)))

    @property
    def n_terms(self) -> int:
        return self.coefs.size

    @property
    def terms(self):
        return [(float(c), "sin" if s else "cos", f.copy())
                for c, s, f in zip(self.coefs, self.is_sin, self.freqs)]

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.freqs != 0, axis=0))

    def __repr__(self):
        parts = [f"{c:+g}*{'sin' if s else 'cos'}<x,{f.tolist()}>"
                 for c, s, f in zip(self.coefs, self.is_sin, self.freqs)]
        return "TrigPolynomial(" + (" ".join(parts) or "0") + ")"

    def __eq__(self, other):
        if not isinstance(other, TrigPolynomial) or other.n_modes != self.n_modes:
            return NotImplemented
        return (self.coefs.shape == other.coefs.shape
                and np.array_equal(self.is_sin, other.is_sin)
                and np.array_equal(self.freqs, other.freqs)
                and np.allclose(self.coefs, other.coefs, rtol=1e-14, atol=0))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = TrigPolynomial.const(other, self.n_modes)
        return TrigPolynomial(np.concatenate([self.coefs, other.coefs]),
                              np.concatenate([self.is_sin, other.is_sin]),
                              np.vstack([self.freqs, other.freqs]), self.n_modes)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return TrigPolynomial(self.coefs * other, self.is_sin, self.freqs, self.n_modes)
        return product(self, other)

    __rmul__ = __mul__

    def _phases(self, X):
        return X @ self.freqs.T

    def _value(self, X):
        out = np.empty(X.shape[0])
        K.trig_eval(np.ascontiguousarray(X), self.coefs, self.is_sin, self.freqs, out)
        return out

    def _first(self, X):
        """Per-term derivative factor: d/du of each term, shape (m, terms)."""
        U = self._phases(X)
        return np.where(self.is_sin, np.cos(U), -np.sin(U)) * self.coefs

    def _second(self, X):
        U = self._phases(X)
        return -np.where(self.is_sin, np.sin(U), np.cos(U)) * self.coefs

    def _grad(self, X):
        return self._first(X) @ self.freqs

    def _hess(self, X):
        S = self._second(X)
        return np.einsum("mt,ti,tj->mij", S, self.freqs, self.freqs)

    def hessian_trace(self, q2a, x):
        X, single = _rows(x)
        w = (self.freqs ** 2) @ np.asarray(q2a)
        out = self._second(X) @ w
        return out[0] if single else out

    def _kolmogorov(self, spec, X, F):
        # first-order part: <x, A h> + <F, h> = <F - a x, h>
        drift_dot = (F - spec.a * X) @ self.freqs.T
        half_norm = 0.5 * (self.freqs ** 2) @ spec.q2a
        return np.sum(self._first(X) * drift_dot + self._second(X) * half_norm, axis=1)


def _kind(k) -> bool:
    if isinstance(k, (bool, np.bool_)):
        return bool(k)
    if k not in ("sin", "cos"):
        raise ValueError(f"term kind must be 'sin' or 'cos', got {k!r}")
    return k == "sin"


def _canonical(coefs, is_sin, freqs):
    merged = {}
    order = []
    for c, s, f in zip(coefs, is_sin, freqs):
        nz = np.flatnonzero(f)
        if nz.size == 0:
            if s:
                continue
        elif f[nz[0]] < 0:
            f = -f
            if s:
                c = -c
        key = (bool(s), tuple((f + 0.0).tolist()))
        if key not in merged:
            merged[key] = 0.0
            order.append(key)
        merged[key] += c
    keys = sorted((k for k in order if merged[k] != 0.0), key=lambda k: (not k[0], k[1]))
    n = freqs.shape[1]
    return (np.array([merged[k] for k in keys], dtype=float),
            np.array([k[0] for k in keys], dtype=bool),
            np.array([k[1] for k in keys], dtype=float).reshape(len(keys), n))


def product(phi: TrigPolynomial, psi: TrigPolynomial) -> TrigPolynomial:
    """Exact product by product-to-sum identities."""
    if phi.n_modes != psi.n_modes:
        raise ValueError("mode counts differ")
    coefs, kinds, freqs = [], [], []
    for c1, s1, f1 in zip(phi.coefs, phi.is_sin, phi.freqs):
        for c2, s2, f2 in zip(psi.coefs, psi.is_sin, psi.freqs):
            c = 0.5 * c1 * c2
            if s1 and s2:      # sin a sin b = (cos(a-b) - cos(a+b)) / 2
                terms = [(c, False, f1 - f2), (-c, False, f1 + f2)]
            elif not s1 and not s2:
                terms = [(c, False, f1 - f2), (c, False, f1 + f2)]
            elif s1:           # sin a cos b = (sin(a+b) + sin(a-b)) / 2
                terms = [(c, True, f1 + f2), (c, True, f1 - f2)]
            else:              # cos a sin b = (sin(a+b) - sin(a-b)) / 2
                terms = [(c, True, f1 + f2), (-c, True, f1 - f2)]
            for t in terms:
                coefs.append(t[0])
                kinds.append(t[1])
                freqs.append(t[2])
    n = phi.n_modes
    return TrigPolynomial(np.array(coefs), np.array(kinds, dtype=bool),
                          np.array(freqs, dtype=float).reshape(len(coefs), n), n)


class Constant(CylinderFunction):
    def __init__(self, c: float, n_modes: int):
        self.c = float(c)
        self.n_modes = int(n_modes)

    @property
    def active(self):
        return np.arange(0)

    def __repr__(self):
        return f"Constant({self.c})"

    def _value(self, X):
        return np.full(X.shape[0], self.c)

    def _grad(self, X):
        return np.zeros_like(X)

    def _hess(self, X):
        return np.zeros((X.shape[0], self.n_modes, self.n_modes))


class Linear(CylinderFunction):
    """``<theta, x> + b``."""

    def __init__(self, theta, b: float = 0.0):
        self.theta = np.asarray(theta, dtype=float)
        self.b = float(b)
        self.n_modes = self.theta.size

    @property
    def active(self):
        return np.flatnonzero(self.theta)

    def __repr__(self):
        return f"Linear({self.theta.tolist()}, {self.b})"

    def _value(self, X):
        return X @ self.theta + self.b

    def _grad(self, X):
        return np.broadcast_to(self.theta, X.shape).copy()

    def _hess(self, X):
        return np.zeros((X.shape[0], self.n_modes, self.n_modes))


class Polynomial(CylinderFunction):
    """``sum_j c_j prod_k x_k^{e_jk}`` with nonnegative integer exponents."""

    def __init__(self, coefs, exponents):
        self.coefs = np.asarray(coefs, dtype=float).ravel()
        E = np.asarray(exponents)
        if E.ndim == 1:
            E = E[None, :]
        if np.any(E < 0) or not np.all(E == np.round(E)):
            raise ValueError("exponents must be nonnegative integers")
        self.exponents = E.astype(int)
        self.n_modes = self.exponents.shape[1]

    @property
    def active(self):
        return np.flatnonzero(np.any(self.exponents[self.coefs != 0] > 0, axis=0))

    def __repr__(self):
        return f"Polynomial({self.coefs.tolist()}, {self.exponents.tolist()})"

    @staticmethod
    def _pow(X, e):
        # x^e with the convention 0^0 = 1 and x^(-1) never formed
        return np.where(e >= 0, X ** np.maximum(e, 0), 0.0)

    def _value(self, X):
        return np.prod(X[:, None, :] ** self.exponents[None], axis=2) @ self.coefs

    def _grad(self, X):
        m, n = X.shape
        out = np.zeros((m, n))
        for k in range(n):
            E = self.exponents.copy()
            fac = E[:, k].astype(float)
            E[:, k] -= 1
            mono = np.prod(self._pow(X[:, None, :], E[None]), axis=2)
            out[:, k] = mono @ (self.coefs * fac)
        return out

    def _hess(self, X):
        m, n = X.shape
        out = np.zeros((m, n, n))
        for i in range(n):
            for j in range(i, n):
                E = self.exponents.copy()
                fac = E[:, i].astype(float)
                E[:, i] -= 1
                fac = fac * E[:, j]
                E[:, j] -= 1
                mono = np.prod(self._pow(X[:, None, :], E[None]), axis=2)
                out[:, i, j] = out[:, j, i] = mono @ (self.coefs * fac)
        return out


class ExpLinear(CylinderFunction):
    """``c exp(<theta, x> + b)``."""

    def __init__(self, theta, b: float = 0.0, c: float = 1.0):
        self.theta = np.asarray(theta, dtype=float)
        self.b = float(b)
        self.c = float(c)
        self.n_modes = self.theta.size

    @property
    def active(self):
        return np.flatnonzero(self.theta)

    def __repr__(self):
        return f"ExpLinear({self.theta.tolist()}, b={self.b}, c={self.c})"

    def _value(self, X):
        return self.c * np.exp(X @ self.theta + self.b)

    def _grad(self, X):
        return self._value(X)[:, None] * self.theta

    def _hess(self, X):
        return self._value(X)[:, None, None] * np.outer(self.theta, self.theta)[None]


_OUTER = ("exp", "clamp", "affine", "square")


class Compose(CylinderFunction):
    """``g(inner(x))`` with ``g`` from a small closed set.

    ``exp``: ``e^z``; ``clamp``: ``L tanh(z / L)`` (bounded by ``L``);
    ``affine``: ``s z + b``; ``square``: ``z^2``.
    """

    def __init__(self, outer: str, inner: CylinderFunction, **params):
        if outer not in _OUTER:
            raise ValueError(f"unknown outer function {outer!r}")
        self.outer = outer
        self.inner = inner
        self.params = {k: float(v) for k, v in params.items()}
        if outer == "clamp" and not self.params.get("L", 0) > 0:
            raise ValueError("clamp needs L > 0")
        self.n_modes = inner.n_modes

    @property
    def active(self):
        return self.inner.active

    def __repr__(self):
        return f"Compose({self.outer}, {self.inner!r}, {self.params})"

    def _g(self, z):
        p = self.params
        if self.outer == "exp":
            e = np.exp(z)
            return e, e, e
        if self.outer == "clamp":
            L = p["L"]
            t = np.tanh(z / L)
            d1 = 1.0 - t * t
            return L * t, d1, -2.0 * t * d1 / L
        if self.outer == "affine":
            s = p.get("scale", 1.0)
            return s * z + p.get("shift", 0.0), np.full_like(z, s), np.zeros_like(z)
        return z * z, 2.0 * z, np.full_like(z, 2.0)

    def _value(self, X):
        return self._g(self.inner._value(X))[0]

    def _grad(self, X):
        _, d1, _ = self._g(self.inner._value(X))
        return d1[:, None] * self.inner._grad(X)

    def _hess(self, X):
        _, d1, d2 = self._g(self.inner._value(X))
        gi = self.inner._grad(X)
        return d2[:, None, None] * np.einsum("mi,mj->mij", gi, gi) + d1[:, None, None] * self.inner._hess(X)


class Sum(CylinderFunction):
    """Finite linear combination of cylinder functions."""

    def __init__(self, parts: Sequence[CylinderFunction], weights=None):
        self.parts = list(parts)
        self.weights = np.ones(len(self.parts)) if weights is None else np.asarray(weights, float)
        self.n_modes = self.parts[0].n_modes

    @property
    def active(self):
        idx = [p.active for p in self.parts]
        return np.unique(np.concatenate(idx)) if idx else np.arange(0)

    def __repr__(self):
        return f"Sum({self.parts!r}, {self.weights.tolist()})"

    def _value(self, X):
        return sum(w * p._value(X) for w, p in zip(self.weights, self.parts))

    def _grad(self, X):
        return sum(w * p._grad(X) for w, p in zip(self.weights, self.parts))

    def _hess(self, X):
        return sum(w * p._hess(X) for w, p in zip(self.weights, self.parts))


def _coord_vector(v, n):
    """Frequency/direction from a dense list or a sparse ``{index: value}`` map (1-based)."""
    out = np.zeros(n)
    if isinstance(v, dict):
        for k, val in v.items():
            j = int(k) - 1
            if not 0 <= j < n:
                raise ValueError(f"coordinate {k} out of range 1..{n}")
            out[j] = float(val)
        return out
    arr = np.asarray(v, dtype=float)
    if arr.size > n:
        raise ValueError(f"vector of length {arr.size} exceeds n_modes={n}")
    out[:arr.size] = arr
    return out


def from_declaration(decl, n_modes: int, validate: bool = True) -> CylinderFunction:
    """Build a test function from its config declaration.

    Forms
    -----
    ``{"trig": [[c, "sin"|"cos", h], ...]}``
        Trig polynomial; ``h`` is a (possibly short) list or ``{"k": v}``.
    ``{"const": c}``
    ``{"linear": theta, "const": b}``
    ``{"poly": [[c, exponents], ...]}``
    ``{"exp_linear": theta, "const": b, "scale": c}``
    ``{"compose": "exp"|"clamp"|"affine"|"square", "inner": {...}, "params": {...}}``
    ``{"sum": [{...}, ...], "weights": [...]}``
    """
    if not isinstance(decl, dict):
        raise ValueError("function declaration must be a table")
    keys = set(decl)
    if "trig" in keys:
        _only(keys, {"trig"})
        terms = decl["trig"]
        if not terms:
            return TrigPolynomial(np.zeros(0), [], np.zeros((0, n_modes)), n_modes)
        return TrigPolynomial([float(t[0]) for t in terms], [t[1] for t in terms],
                              np.array([_coord_vector(t[2], n_modes) for t in terms]), n_modes)
    if "linear" in keys:
        _only(keys, {"linear", "const"})
        phi = Linear(_coord_vector(decl["linear"], n_modes), decl.get("const", 0.0))
    elif "poly" in keys:
        _only(keys, {"poly"})
        terms = decl["poly"]
        phi = Polynomial([t[0] for t in terms],
                         [_coord_vector(t[1], n_modes).astype(int) for t in terms])
    elif "exp_linear" in keys:
        _only(keys, {"exp_linear", "const", "scale"})
        phi = ExpLinear(_coord_vector(decl["exp_linear"], n_modes), decl.get("const", 0.0),
                        decl.get("scale", 1.0))
    elif "compose" in keys:
        _only(keys, {"compose", "inner", "params"})
        phi = Compose(decl["compose"], from_declaration(decl["inner"], n_modes, False),
                      **decl.get("params", {}))
    elif "sum" in keys:
        _only(keys, {"sum", "weights"})
        phi = Sum([from_declaration(p, n_modes, False) for p in decl["sum"]], decl.get("weights"))
    elif keys == {"const"}:
        phi = Constant(decl["const"], n_modes)
    else:
        raise ValueError(f"unrecognized function declaration {decl!r}")
    if validate:
        phi.validate()
    return phi


def _only(keys, allowed):
    extra = keys - allowed
    if extra:
        raise ValueError(f"unexpected keys in function declaration: {sorted(extra)}")
