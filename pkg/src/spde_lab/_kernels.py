"""Compiled per-mode kernels.

Every shipped drift is separable, ``F_k(x) = f_k(x_k)`` with

    f_k(y) = p1_k y + p3_k y^3 + ps_k sin(y),

so the kernels take the three coefficient vectors instead of a drift object.
Kernels never raise; they return a status code that the Python layer turns
into an exception.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .rng import fill_normals

OK = 0
NO_CONVERGENCE = 1

EXP_TAMED = 0
DRIFT_IMPLICIT = 1

NEWTON_MAX_ITER = 200
BISECT_MAX_ITER = 400
TOL_REL = 1e-12


@njit(cache=True, nogil=True)
def f_scalar(y, p1, p3, ps):
    return p1 * y + p3 * y * y * y + ps * np.sin(y)


@njit(cache=True, nogil=True)
def fprime_scalar(y, p1, p3, ps):
    return p1 + 3.0 * p3 * y * y + ps * np.cos(y)


@njit(cache=True, nogil=True)
def resolve_scalar(x, delta, zeta2, p1, p3, ps):
    """Root of ``(1 + delta zeta2) y - delta f(y) = x``.

    Damped Newton from ``y = x``; bisection on a geometrically grown bracket
    if Newton stalls.  Returns ``(y, status)``.
    """
    c = 1.0 + delta * zeta2
    tol = TOL_REL * (1.0 + abs(x))
    y = x
    r = c * y - delta * f_scalar(y, p1, p3, ps) - x
    for _ in range(NEWTON_MAX_ITER):
        if abs(r) <= tol:
            return y, OK
        g = c - delta * fprime_scalar(y, p1, p3, ps)
        if not g > 0.0:
            break
        step = r / g
        t = 1.0
        accepted = False
        for _h in range(60):
            yn = y - t * step
            rn = c * yn - delta * f_scalar(yn, p1, p3, ps) - x
            if abs(rn) < abs(r):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        y = yn
        r = rn
    if abs(r) <= tol:
        return y, OK
    # bisection; the residual is increasing in y for dissipative G
    width = 1.0 + abs(x)
    lo = x - width
    hi = x + width
    for _ in range(200):
        if c * lo - delta * f_scalar(lo, p1, p3, ps) - x <= 0.0:
            break
        width *= 2.0
        lo = x - width
    for _ in range(200):
        if c * hi - delta * f_scalar(hi, p1, p3, ps) - x >= 0.0:
            break
        width *= 2.0
        hi = x + width
    rlo = c * lo - delta * f_scalar(lo, p1, p3, ps) - x
    rhi = c * hi - delta * f_scalar(hi, p1, p3, ps) - x
    if rlo > 0.0 or rhi < 0.0:
        return y, NO_CONVERGENCE
    best = y
    rbest = abs(r)
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        rm = c * mid - delta * f_scalar(mid, p1, p3, ps) - x
        if abs(rm) < rbest:
            best = mid
            rbest = abs(rm)
        if rbest <= tol:
            return best, OK
        if rm > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 0.0 or mid == lo or mid == hi:
            break
    if rbest <= tol:
        return best, OK
    return best, NO_CONVERGENCE


@njit(cache=True, nogil=True)
def resolve_array(X, delta, zeta2, p1, p3, ps, out):
    """Apply :func:`resolve_scalar` to every row of ``X`` (shape ``(m, n)``)."""
    m, n = X.shape
    for i in range(m):
        for k in range(n):
            y, st = resolve_scalar(X[i, k], delta, zeta2, p1[k], p3[k], ps[k])
            if st != OK:
                return st
            out[i, k] = y
    return OK


@njit(cache=True, nogil=True)
def drift_array(X, p1, p3, ps, out):
    m, n = X.shape
    for i in range(m):
        for k in range(n):
            out[i, k] = f_scalar(X[i, k], p1[k], p3[k], ps[k])


@njit(cache=True, nogil=True)
def fprime_array(X, p1, p3, ps, out):
    m, n = X.shape
    for i in range(m):
        for k in range(n):
            out[i, k] = fprime_scalar(X[i, k], p1[k], p3[k], ps[k])


@njit(cache=True, nogil=True)
def advance(X, T, with_tangent, step0, n_steps, dt, decay, sd, p1, p3, ps,
            scheme, zero_drift, seed, stream, paths):
    """Advance every row of ``X`` by ``n_steps`` steps of size ``dt`` in place.

    ``T`` holds per-mode tangent multipliers (the linearized flow is diagonal);
    it is updated when ``with_tangent`` is set.  Step ``j`` of this call uses
    noise counter ``step0 + j``.
    """
    m, n = X.shape
    z = np.empty(n)
    fx = np.empty(n)
    for i in range(m):
        path = paths[i]
        for j in range(n_steps):
            step = step0 + j
            if zero_drift:
                for k in range(n):
                    X[i, k] = decay[k] * X[i, k]
                    if with_tangent:
                        T[i, k] = decay[k] * T[i, k]
            elif scheme == DRIFT_IMPLICIT:
                for k in range(n):
                    y, st = resolve_scalar(X[i, k], dt, 0.0, p1[k], p3[k], ps[k])
                    if st != OK:
                        return st
                    if with_tangent:
                        T[i, k] = decay[k] * T[i, k] / (1.0 - dt * fprime_scalar(y, p1[k], p3[k], ps[k]))
                    X[i, k] = decay[k] * y
            else:
                norm2 = 0.0
                for k in range(n):
                    fx[k] = f_scalar(X[i, k], p1[k], p3[k], ps[k])
                    norm2 += fx[k] * fx[k]
                tame = dt / (1.0 + dt * np.sqrt(norm2))
                for k in range(n):
                    if with_tangent:
                        T[i, k] = decay[k] * T[i, k] * (1.0 + dt * fprime_scalar(X[i, k], p1[k], p3[k], ps[k]))
                    X[i, k] = decay[k] * (X[i, k] + tame * fx[k])
            fill_normals(z, seed, stream, step, path)
            for k in range(n):
                X[i, k] += sd[k] * z[k]
    return OK


@njit(cache=True, nogil=True)
def trig_eval(X, coefs, is_sin, freqs, out):
    """Evaluate ``sum_j c_j {sin|cos}(<x, h_j>)`` at every row of ``X``."""
    m, n = X.shape
    nt = coefs.shape[0]
    for i in range(m):
        acc = 0.0
        for j in range(nt):
            u = 0.0
            for k in range(n):
                u += X[i, k] * freqs[j, k]
            if is_sin[j]:
                acc += coefs[j] * np.sin(u)
            else:
                acc += coefs[j] * np.cos(u)
        out[i] = acc
