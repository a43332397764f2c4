"""Numerical checks of the functional inequalities and identities.

Every ``check_*`` function returns :class:`~spde_lab.report.CheckReport`
objects whose verdict is recomputed from the recorded numbers.  Expectations
under the invariant measure come from an :class:`InvariantEnsemble`; with a
quadrature ensemble they are deterministic and the statistical errors are 0.

Constants entering the right-hand sides are always the certified analytic
ones (``cert.zeta_alpha``, ``cert.zeta``), never fitted values.
"""
from __future__ import annotations

import math
from typing import List, Optional, Sequence

import numpy as np

from . import oracle
from .cylinder import (CylinderFunction, TrigPolynomial, apply_kolmogorov, halpha_grad_sq,
                       product)
from .drift import (DissipativityCertificate, DriftSpec, eval_drift, one_sided_constant,
                    yosida_resolvent)
from .integrator import propagate
from .model import SPDEModel
from .report import CheckReport
from .semigroup import (InvariantEnsemble, ResolventConfig, SimConfig, _direction_obs,
                        _point_stats, gradient_on_points, halpha_directions,
                        laplace_rule, ou_mehler_on_points, pt_on_points, resolvent_paths,
                        run_paths)
from .spectrum import ModeSpectrum

# Indicator threshold for {phi != 0} in the entropy bound.
NONZERO = 1e-30
# Tolerance for identities evaluated by deterministic quadrature.
QUAD_TOL = 1e-6
# Frozen discretization constant of the pathwise contraction check: the
# bounds are asserted as exp(-zeta t)(1 + C_FROZEN dt).
C_FROZEN = 1.0
# Relative excess of gamma tolerated when choosing the envelope decay rate.
ENVELOPE_SLACK = 0.1


def _labels(labels, n, prefix="phi"):
    if labels is None:
        return [f"{prefix}{i}" for i in range(n)]
    labels = list(labels)
    if len(labels) != n:
        raise ValueError("one label per function expected")
    return labels


def _require_cover(ensemble: InvariantEnsemble, phi):
    if not ensemble.covers(phi):
        raise ValueError("quadrature ensemble does not cover the active coordinates of phi")


def _ens_meta(ensemble: InvariantEnsemble) -> dict:
    meta = {"provenance": ensemble.provenance, "n_draws": ensemble.n_draws}
    if not ensemble.deterministic:
        meta["ess"] = ensemble.ess
    return meta


def subsample(ensemble: InvariantEnsemble, n_points: Optional[int]) -> InvariantEnsemble:
    """Evenly spaced sub-ensemble (quadrature ensembles are returned as is)."""
    if n_points is None or ensemble.deterministic or ensemble.n_draws <= n_points:
        return ensemble
    idx = np.linspace(0, ensemble.n_draws - 1, int(n_points)).round().astype(int)
    return InvariantEnsemble(ensemble.draws[idx], ensemble.provenance,
                             dict(ensemble.params, subsample=int(n_points)))


def _variance(ensemble: InvariantEnsemble, v):
    """Variance under the ensemble with the standard error of the estimate."""
    m = ensemble.expect(v).mean
    est = ensemble.expect((v - m) ** 2)
    if ensemble.deterministic:
        return est.mean, 0.0
    n = ensemble.n_draws
    return est.mean * n / (n - 1), est.stderr * n / (n - 1)


def _norm(est_mean, est_err):
    """``sqrt`` of a second-moment estimate with first-order error."""
    val = math.sqrt(max(est_mean, 0.0))
    if val > 0:
        return val, est_err / (2.0 * val)
    return 0.0, math.sqrt(max(est_err, 0.0))


def _power_root(est_mean, est_err, r):
    """``E^{1/r}`` with first-order error."""
    val = max(est_mean, 0.0) ** (1.0 / r)
    if est_mean > 0:
        return val, val / (r * est_mean) * est_err
    return val, max(est_err, 0.0) ** (1.0 / r)


# --------------------------------------------------------------------------
# functional inequalities under the invariant measure


def check_poincare(phis: Sequence[CylinderFunction], ensemble: InvariantEnsemble,
                   cert: DissipativityCertificate, spec: ModeSpectrum, labels=None,
                   sharp: Sequence[str] = ()) -> List[CheckReport]:
    """``Var(phi) <= E|D_alpha phi|_alpha^2 / (2 zeta_alpha)`` for each ``phi``.

    Labels listed in ``sharp`` are asserted as equalities (two-sided).
    """
    za = cert.zeta_alpha
    out = []
    for phi, label in zip(phis, _labels(labels, len(phis))):
        _require_cover(ensemble, phi)
        X = ensemble.draws
        var, var_err = _variance(ensemble, phi.value(X))
        g = ensemble.expect(halpha_grad_sq(phi, spec, X))
        two = label in sharp
        out.append(CheckReport(
            "poincare", var, g.mean / (2 * za), var_err, g.stderr / (2 * za),
            tol=1e-10 * max(1.0, abs(g.mean)) if ensemble.deterministic else 0.0,
            predicate="two_sided" if two else "le", label=label,
            metadata=dict(_ens_meta(ensemble), zeta_alpha=za, phi=repr(phi))))
    return out


def check_logsob(phi: CylinderFunction, p: float, ensemble: InvariantEnsemble,
                 cert: DissipativityCertificate, spec: ModeSpectrum,
                 label: str = "") -> CheckReport:
    """Entropy of ``|phi|^p`` against ``p^2/(2 zeta_alpha) E[|phi|^(p-2) |D_alpha phi|^2]``."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    _require_cover(ensemble, phi)
    za = cert.zeta_alpha
    X = ensemble.draws
    a = np.abs(phi.value(X))
    f = a ** p
    Ef = ensemble.expect(f).mean
    flogf = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
    ent = ensemble.expect(flogf).mean - (Ef * math.log(Ef) if Ef > 0 else 0.0)
    # influence function of the entropy functional gives its standard error
    infl = flogf - ((math.log(Ef) + 1.0) * f if Ef > 0 else 0.0)
    ent_err = ensemble.expect(infl).stderr
    nz = a > NONZERO
    w = np.where(nz, np.where(nz, a, 1.0) ** (p - 2) * halpha_grad_sq(phi, spec, X), 0.0)
    g = ensemble.expect(w)
    scale = p * p / (2 * za)
    return CheckReport(
        "logsob", ent, scale * g.mean, ent_err, scale * g.stderr,
        tol=QUAD_TOL if ensemble.deterministic else 0.0, label=label or f"p={p:g}",
        metadata=dict(_ens_meta(ensemble), p=p, zeta_alpha=za, phi=repr(phi)))


def _inner_pt(phi, X, times, cfg: SimConfig, n_paths: Optional[int], inner: str):
    """``P(t) phi`` at the rows of ``X`` for each time: (means, variances, method)."""
    model = cfg.model
    if inner == "auto":
        inner = "mehler" if model.zero_drift else "nested"
    if inner == "mehler":
        if not model.zero_drift:
            raise ValueError("the Mehler inner expectation needs F = 0")
        P = [ou_mehler_on_points(phi, X, t, model.spec) for t in times]
        return P, [np.zeros(X.shape[0]) for _ in times], "mehler", 0
    if inner != "nested":
        raise ValueError(f"unknown inner method {inner!r}")
    M = int(n_paths) if n_paths else int(math.ceil(math.sqrt(X.shape[0])))
    M = max(M, 2)
    est = pt_on_points([phi], X, list(times), M, cfg)
    return [e[0].mean for e in est], [e[0].var_of_mean for e in est], "nested", M


def check_hypercontractivity(phi: CylinderFunction, q: float, t: float,
                             ensemble: InvariantEnsemble, cert: DissipativityCertificate,
                             cfg: SimConfig, n_paths: Optional[int] = None,
                             inner: str = "auto", label: str = "") -> CheckReport:
    """``|P(t) phi|_r <= |phi|_q`` with ``r = (q - 1) exp(2 zeta_alpha t) + 1``.

    The inner expectation is exact (Mehler) for ``F = 0`` and nested Monte
    Carlo otherwise, with ``ceil(sqrt(N))`` inner paths by default.  Nested
    estimates bias ``E|P|^r`` upwards for ``r >= 2``; the second-order size
    of that bias is recorded as ``bias_budget``.
    """
    if not q > 1:
        raise ValueError("q must be > 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    _require_cover(ensemble, phi)
    za = cert.zeta_alpha
    r = (q - 1.0) * math.exp(2.0 * za * t) + 1.0
    X = ensemble.draws
    v = phi.value(X)
    if t == 0:
        P, s2, method, M = v, np.zeros_like(v), "identity", 0
    else:
        Ps, s2s, method, M = _inner_pt(phi, X, [t], cfg, n_paths, inner)
        P, s2 = Ps[0], s2s[0]
    A = ensemble.expect(np.abs(P) ** r)
    B = ensemble.expect(np.abs(v) ** q)
    lhs, lhs_err = _power_root(A.mean, A.stderr, r)
    rhs, rhs_err = _power_root(B.mean, B.stderr, q)
    bias = 0.5 * r * (r - 1.0) * ensemble.expect(np.abs(P) ** (r - 2.0) * s2).mean
    bias_lhs = lhs / (r * A.mean) * bias if A.mean > 0 else 0.0
    tol = 1e-12 * max(1.0, rhs) if (t == 0 or ensemble.deterministic) else 0.0
    return CheckReport(
        "hypercontractivity", lhs, rhs, lhs_err, rhs_err, tol=tol,
        label=label or f"q={q:g},t={t:.4g}",
        metadata=dict(_ens_meta(ensemble), q=q, t=t, r=r, inner=method, inner_paths=M,
                      bias_budget=bias_lhs, zeta_alpha=za, phi=repr(phi)))


def check_ergodicity(phi: CylinderFunction, times: Sequence[float], ensemble: InvariantEnsemble,
                     cert: DissipativityCertificate, cfg: SimConfig,
                     n_paths: Optional[int] = None, inner: str = "auto",
                     slack: float = 0.1, rate_slack: Optional[float] = None,
                     sharp: bool = False, label: str = "") -> List[CheckReport]:
    """Exponential decay of ``d(t) = |P(t) phi - E phi|_L2(nu)``.

    Returns one report for the fitted decay rate followed by one pointwise
    report per time.  The rate report asserts ``rate >= zeta_alpha (1 -
    rate_slack)``, or ``|rate - zeta_alpha| <= rate_slack zeta_alpha`` when
    ``sharp``.  ``d(t)^2`` is estimated as the ensemble variance of the
    inner estimates minus their mean inner variance.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 4:
        raise ValueError("need at least 4 time points")
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    _require_cover(ensemble, phi)
    za = cert.zeta_alpha
    rate_slack = slack if rate_slack is None else rate_slack
    X = ensemble.draws
    v = phi.value(X)
    m2 = ensemble.expect(v * v)
    norm, norm_err = _norm(m2.mean, m2.stderr)
    Ps, s2s, method, M = _inner_pt(phi, X, times, cfg, n_paths, inner)
    n = ensemble.n_draws
    corr = 1.0 if ensemble.deterministic else n / (n - 1)
    d, d_err = np.zeros(times.size), np.zeros(times.size)
    for i, (P, s2) in enumerate(zip(Ps, s2s)):
        mt = ensemble.expect(P).mean
        est = ensemble.expect(corr * (P - mt) ** 2 - s2)
        d[i], d_err[i] = _norm(est.mean, est.stderr)
    meta = dict(_ens_meta(ensemble), inner=method, inner_paths=M, zeta_alpha=za, phi=repr(phi))
    base = label or "phi"
    reports = [_rate_report(times, d, d_err, za, rate_slack, sharp, base, meta)]
    for t, di, ei in zip(times, d, d_err):
        reports.append(CheckReport(
            "ergodicity", di, math.exp(-za * t) * norm, ei, math.exp(-za * t) * norm_err,
            slack=slack, tol=1e-12, label=f"{base}:t={t:.4g}", metadata=dict(meta, t=t)))
    return reports


def _rate_report(times, d, d_err, za, rate_slack, sharp, base, meta):
    ok = (d > 0) & (d > 3.0 * d_err) & (d > 1e-12 * max(d.max(), 1e-300))
    label = f"{base}:rate"
    if ok.sum() < 2:
        # nothing decays above the noise (e.g. constant phi): fit skipped
        return CheckReport("ergodicity", 0.0, 0.0, label=label,
                           metadata=dict(meta, rate=None, fit="skipped"))
    t, y = times[ok], np.log(d[ok])
    sig = d_err[ok] / d[ok]
    if np.all(sig > 0):
        w = 1.0 / sig ** 2
    else:
        w = np.ones_like(y)
    Xd = np.column_stack([np.ones_like(t), t])
    G = Xd.T @ (w[:, None] * Xd)
    coef = np.linalg.solve(G, Xd.T @ (w * y))
    rate = -coef[1]
    if np.all(sig > 0):
        rate_err = math.sqrt(np.linalg.inv(G)[1, 1])
    else:
        rate_err = 0.0
    meta = dict(meta, rate=rate, rate_err=rate_err, fit_points=int(ok.sum()))
    if sharp:
        return CheckReport("ergodicity", rate, za, rate_err, 0.0, slack=rate_slack,
                           predicate="two_sided", label=label, metadata=meta)
    return CheckReport("ergodicity", za * (1.0 - rate_slack), rate, 0.0, rate_err,
                       label=label, metadata=meta)


def check_energy_identity(phi: TrigPolynomial, t: float, ensemble: InvariantEnsemble,
                          cfg: SimConfig, n_paths: Optional[int] = None,
                          n_time_nodes: int = 8, method: str = "auto",
                          label: str = "") -> CheckReport:
    """``E|P(t)phi|^2 + int_0^t E|D_alpha P(s)phi|_alpha^2 ds = E|phi|^2``.

    ``method="oracle"`` (default when ``F = 0``) evaluates ``P(s) phi`` and
    its gradient in closed form; ``"mc"`` uses nested estimates with
    bias-corrected squares.  The time integral uses composite Gauss-Legendre
    on geometrically graded panels; its error estimate (difference to a
    lower-order rule) enters the tolerance.  The reported ``lhs_err`` is the
    standard error of the per-draw difference.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    _require_cover(ensemble, phi)
    model = cfg.model
    spec = model.spec
    if method == "auto":
        method = "oracle" if (model.zero_drift and isinstance(phi, TrigPolynomial)) else "mc"
    X = ensemble.draws
    v = phi.value(X)
    rhs = ensemble.expect(v * v)
    meta = dict(_ens_meta(ensemble), t=t, method=method, phi=repr(phi))
    if t == 0 or phi.is_constant:
        return CheckReport("energy_identity", rhs.mean, rhs.mean, 0.0, 0.0,
                           predicate="two_sided", tol=1e-12, label=label or f"t={t:g}",
                           metadata=meta)
    sh, wh = laplace_rule(0.0, t, n_time_nodes, first_panel=1e-3)
    sl, wl = laplace_rule(0.0, t, max(2, n_time_nodes - 3), first_panel=1e-3)
    nodes = np.unique(np.concatenate([sh, sl]))
    ih, il = np.searchsorted(nodes, sh), np.searchsorted(nodes, sl)
    q2a = spec.q2a
    if method == "oracle":
        if not model.zero_drift:
            raise ValueError("the oracle route needs F = 0")
        P = oracle.ou_exact(phi, X, t, spec)
        Pt2 = P * P
        G = np.stack([np.sum(q2a * oracle.ou_exact_gradient(phi, X, s, spec) ** 2, axis=1)
                      for s in nodes])
        M = 0
    elif method == "mc":
        M = int(n_paths) if n_paths else int(math.ceil(math.sqrt(X.shape[0])))
        dirs = halpha_directions(spec, phi.active)
        obs = [_direction_obs(phi, h) for h in dirs] + [lambda Z, T: phi.value(Z)]
        vals = run_paths(cfg, X, np.concatenate([nodes, [t]]), obs, M=M, tangent=True,
                         active=phi.active)
        G = np.zeros((nodes.size, X.shape[0]))
        for j in range(len(dirs)):
            for k in range(nodes.size):
                st = _point_stats(vals[k, j])
                G[k] += st.mean ** 2 - st.var_of_mean
        st = _point_stats(vals[-1, -1])
        Pt2 = st.mean ** 2 - st.var_of_mean
    else:
        raise ValueError(f"unknown method {method!r}")
    integ_h = np.tensordot(wh, G[ih], axes=(0, 0))
    integ_l = np.tensordot(wl, G[il], axes=(0, 0))
    lhs_vals = Pt2 + integ_h
    lhs = ensemble.expect(lhs_vals)
    diff = ensemble.expect(lhs_vals - v * v)
    qerr = float(np.max(np.abs(integ_h - integ_l)))
    tol = qerr + (1e-10 * max(1.0, rhs.mean) if ensemble.deterministic else 0.0)
    return CheckReport(
        "energy_identity", lhs.mean, rhs.mean, diff.stderr, 0.0, tol=tol,
        predicate="two_sided", oracle=method == "oracle", label=label or f"t={t:g}",
        metadata=dict(meta, quad_err=qerr, inner_paths=M,
                      integral=ensemble.expect(integ_h).mean))


def check_integration_by_parts(phi: CylinderFunction, d, spec: ModeSpectrum,
                               ensemble: InvariantEnsemble, label: str = "") -> CheckReport:
    """``E[phi N0 phi] = -(1/2) E|D_alpha phi|_alpha^2``.

    ``lhs_err`` is the standard error of the per-draw difference of the two
    integrands (they are evaluated on the same draws).
    """
    _require_cover(ensemble, phi)
    X = ensemble.draws
    v = phi.value(X)
    Nphi = apply_kolmogorov(phi, d, spec, X)
    g = halpha_grad_sq(phi, spec, X)
    lhs = ensemble.expect(v * Nphi)
    rhs = ensemble.expect(-0.5 * g)
    diff = ensemble.expect(v * Nphi + 0.5 * g)
    return CheckReport(
        "integration_by_parts", lhs.mean, rhs.mean, diff.stderr, 0.0,
        tol=QUAD_TOL if ensemble.deterministic else 0.0, predicate="two_sided",
        oracle=ensemble.deterministic, label=label,
        metadata=dict(_ens_meta(ensemble), phi=repr(phi), lhs_stderr=lhs.stderr,
                      rhs_stderr=rhs.stderr))


def check_stationarity(phi: CylinderFunction, d, spec: ModeSpectrum,
                       ensemble: InvariantEnsemble, label: str = "") -> CheckReport:
    """``E_nu[N0 phi] = 0``."""
    _require_cover(ensemble, phi)
    est = ensemble.expect(apply_kolmogorov(phi, d, spec, ensemble.draws))
    return CheckReport("stationarity", est.mean, 0.0, est.stderr, 0.0,
                       tol=QUAD_TOL if ensemble.deterministic else 0.0,
                       predicate="two_sided", oracle=ensemble.deterministic, label=label,
                       metadata=dict(_ens_meta(ensemble), phi=repr(phi)))


# --------------------------------------------------------------------------
# resolvent


def _is_symmetric(model: SPDEModel) -> bool:
    if model.zero_drift:
        return True
    return model.drift is not None and model.drift.variant == "gradient"


def _coord_std(ensemble: InvariantEnsemble, k: int) -> float:
    x = ensemble.draws[:, k]
    if ensemble.deterministic:
        m = ensemble.weights @ x
        return float(math.sqrt(max(ensemble.weights @ (x - m) ** 2, 0.0)))
    return float(x.std())


def check_resolvent_bounds(fs: Sequence[CylinderFunction], lams: Sequence[float],
                           ensemble: InvariantEnsemble, cfg: SimConfig,
                           rcfg: ResolventConfig = ResolventConfig(n_paths=256),
                           n_points: Optional[int] = 64, second_order: str = "auto",
                           second_order_slack: float = 0.5, fd_step: float = 1e-3,
                           labels=None) -> List[CheckReport]:
    """Bounds on ``u = R(lam, N) f`` in ``L^2(nu)``.

    ``|u| <= |f|/lam`` and ``|D_alpha u| <= sqrt(2/lam) |f|`` always; in the
    symmetric case (``F = 0`` or gradient drift, or ``second_order="on"``)
    also ``|D_alpha^2 u|_HS <= 2 sqrt(2) |f|``.  The second derivatives are
    central differences (step ``fd_step`` times the coordinate's standard
    deviation under the ensemble) of the pathwise gradient estimator, with
    both shifted start points driven by the same noise.

    Squares of per-point Monte-Carlo means are bias-corrected by subtracting
    the variance of the mean.  Time-quadrature error bounds are added to the
    left-hand error.
    """
    lams = [float(l) for l in lams]
    if any(not l > 0 for l in lams):
        raise ValueError("lam must be > 0")
    model = cfg.model
    spec = model.spec
    if second_order == "auto":
        do_second = _is_symmetric(model)
    elif second_order in ("on", "off"):
        do_second = second_order == "on"
    else:
        raise ValueError("second_order must be 'auto', 'on' or 'off'")
    ens = subsample(ensemble, n_points)
    X = ens.draws
    N = X.shape[0]
    out = []
    for f, flabel in zip(fs, _labels(labels, len(fs), "f")):
        _require_cover(ens, f)
        fv = f.value(X)
        f2 = ens.expect(fv * fv)
        fn, fn_err = _norm(f2.mean, f2.stderr)
        active = np.asarray(f.active, dtype=int)
        dirs = halpha_directions(spec, active)
        res = resolvent_paths(f, lams, X, cfg, rcfg, dirs)
        second = None
        if do_second and active.size:
            eps = np.array([fd_step * max(_coord_std(ens, k), 1e-8) for k in active])
            stacks = []
            for i, k in enumerate(active):
                for sgn in (1.0, -1.0):
                    Xs = X.copy()
                    Xs[:, k] += sgn * eps[i]
                    stacks.append(Xs)
            ids = np.tile(np.arange(N), len(stacks))
            second = resolvent_paths(f, lams, np.concatenate(stacks), cfg, rcfg, dirs,
                                     point_ids=ids)
        for li, lam in enumerate(lams):
            lp = res[li]
            V = lp.V
            qu = lp.quad_error(V[:1], lp.V_low[:1], lp.end[:1])
            meta = dict(_ens_meta(ens), lam=lam, f=repr(f), paths_per_point=rcfg.n_paths,
                        quad_err=qu)
            st = _point_stats(V[0])
            u2 = ens.expect(st.mean ** 2 - st.var_of_mean)
            un, un_err = _norm(u2.mean, u2.stderr)
            out.append(CheckReport(
                "resolvent_bounds", un, fn / lam, un_err + qu, fn_err / lam,
                tol=1e-12 * max(1.0, fn / lam), label=f"{flabel}:lam={lam:g}:u",
                metadata=meta))
            g = np.zeros(N)
            for j in range(len(dirs)):
                stj = _point_stats(V[1 + j])
                g += stj.mean ** 2 - stj.var_of_mean
            g2 = ens.expect(g)
            gn, gn_err = _norm(g2.mean, g2.stderr)
            gq = math.sqrt(sum(lp.quad_error(V[1 + j], lp.V_low[1 + j], lp.end[1 + j]) ** 2
                               for j in range(len(dirs))))
            c = math.sqrt(2.0 / lam)
            out.append(CheckReport(
                "resolvent_bounds", gn, c * fn, gn_err + gq, c * fn_err,
                label=f"{flabel}:lam={lam:g}:Du", metadata=dict(meta, quad_err=gq)))
            if do_second:
                if second is None:
                    hn, hn_err, hq = 0.0, 0.0, 0.0
                else:
                    hn, hn_err, hq = _hessian_norm(second[li], active, eps, spec, ens, N)
                out.append(CheckReport(
                    "resolvent_bounds", hn, 2.0 * math.sqrt(2.0) * fn, hn_err + hq,
                    2.0 * math.sqrt(2.0) * fn_err, slack=second_order_slack,
                    label=f"{flabel}:lam={lam:g}:D2u",
                    metadata=dict(meta, quad_err=hq, fd_step=fd_step)))
    return out


def _hessian_norm(lp, active, eps, spec, ens, N):
    """``E sum_ij (D_{h_i} D_{h_j} u)^2`` from CRN central differences."""
    lam_a = spec.lam_alpha[active]
    hs = np.zeros(N)
    q2 = 0.0
    for i in range(active.size):
        sl_p = slice(2 * i * N, (2 * i + 1) * N)
        sl_m = slice((2 * i + 1) * N, (2 * i + 2) * N)
        c = lam_a[i] / (2.0 * eps[i])
        for j in range(active.size):
            fd = [c * (A[1 + j, sl_p] - A[1 + j, sl_m]) for A in (lp.V, lp.V_low, lp.end)]
            st = _point_stats(fd[0])
            hs += st.mean ** 2 - st.var_of_mean
            q2 += lp.quad_error(*fd) ** 2
    est = ens.expect(hs)
    hn, hn_err = _norm(est.mean, est.stderr)
    return hn, hn_err, math.sqrt(q2)


# --------------------------------------------------------------------------
# moments, gradients, calculus


def check_moment_bound(x0s: Sequence, ks: Sequence[float], times: Sequence[float],
                       cfg: SimConfig, n_paths: int = 2000, forget_slack: float = 0.1,
                       label: str = "") -> List[CheckReport]:
    """Envelope ``E|X(t,x0)|^k <= gamma (1 + |x0|^k exp(-beta t))``.

    For each ``k``: one envelope report and, when several start points are
    given, one report comparing the moment at the last time from the
    largest start point with the one from the smallest (uniformity in
    ``t``: the dependence on ``x0`` must be forgotten).

    ``gamma`` and ``beta`` are fitted: for each ``beta`` on a log grid the
    smallest ``gamma`` covering every estimate plus 3 standard errors is
    taken, and the largest ``beta`` whose ``gamma`` is within
    ``ENVELOPE_SLACK`` of the smallest one is kept.  The envelope report
    records ``lhs = max (E - 3 se) / envelope`` against ``rhs = 1``.
    """
    ks = [float(k) for k in ks]
    if any(k < 2 for k in ks):
        raise ValueError("k must be >= 2")
    times = np.asarray(times, dtype=float)
    X0 = np.atleast_2d(np.asarray(x0s, dtype=float))
    model = cfg.model
    zeta = model.certificate.zeta
    obs = [(lambda k: (lambda X, T: np.sum(X * X, axis=1) ** (k / 2)))(k) for k in ks]
    vals = run_paths(cfg, X0, times, obs, M=n_paths)  # (t, k, x0, M)
    mean = vals.mean(axis=3)
    se = vals.std(axis=3, ddof=1) / math.sqrt(n_paths)
    nx = np.linalg.norm(X0, axis=1)
    betas = zeta * np.logspace(-3, 2, 101)
    out = []
    for j, k in enumerate(ks):
        upper = mean[:, j, :] + 3.0 * se[:, j, :]
        gams = np.array([np.max(upper / (1.0 + nx[None, :] ** k * np.exp(-b * times[:, None])))
                         for b in betas])
        # gamma grows with beta: keep the fastest decay within ENVELOPE_SLACK of the best gamma
        ok = np.nonzero(gams <= (1.0 + ENVELOPE_SLACK) * gams.min())[0]
        beta = float(betas[ok[-1]])
        gam = float(gams[ok[-1]])
        env = gam * (1.0 + nx[None, :] ** k * np.exp(-beta * times[:, None]))
        ratio = float(np.max((mean[:, j, :] - 3.0 * se[:, j, :]) / env))
        feasible = math.isfinite(gam) and gam > 0 and beta > 0
        out.append(CheckReport(
            "moment_bound", ratio if feasible else math.inf, 1.0, tol=1e-12,
            label=f"{label + ':' if label else ''}k={k:g}:envelope",
            metadata={"k": k, "gamma": gam, "beta": beta, "zeta": zeta,
                      "times": times, "x0_norms": nx, "mean": mean[:, j, :],
                      "stderr": se[:, j, :], "n_paths": n_paths, "dt": cfg.dt,
                      "scheme": cfg.scheme}))
        if X0.shape[0] > 1:
            hi, lo = int(np.argmax(nx)), int(np.argmin(nx))
            out.append(CheckReport(
                "moment_bound", mean[-1, j, hi], mean[-1, j, lo], se[-1, j, hi], se[-1, j, lo],
                slack=forget_slack, predicate="two_sided",
                label=f"{label + ':' if label else ''}k={k:g}:uniform",
                metadata={"k": k, "t": times[-1], "x0_high": nx[hi], "x0_low": nx[lo],
                          "sup_over_t": float(np.max(mean[:, j, :]))}))
    return out


def check_gradient_commutation(phi: CylinderFunction, t: float, xs, cert: DissipativityCertificate,
                               cfg: SimConfig, n_paths: int = 2000, form: str = "halpha",
                               slack: float = 0.0, label: str = "") -> List[CheckReport]:
    """``|D_alpha P(t) phi(x)|_alpha^2 <= exp(-2 zeta_alpha t) P(t) g(x)`` per point.

    ``form="halpha"`` takes ``g = |D_alpha phi|_alpha^2 = sum_k lambda_k^{2 alpha}
    (d_k phi)^2``; ``form="literal"`` takes ``g = |Q^{2 alpha} D phi|^2`` in
    the norm of X, which is smaller when ``lambda_k < 1`` and is violated
    for such spectra (kept for the record).
    """
    if form not in ("halpha", "literal"):
        raise ValueError("form must be 'halpha' or 'literal'")
    if t < 0:
        raise ValueError("t must be >= 0")
    model = cfg.model
    spec = model.spec
    za = cert.zeta_alpha
    X = np.atleast_2d(np.asarray(xs, dtype=float))
    w = spec.q2a if form == "halpha" else spec.q2a ** 2

    def gsq(Z, T=None):
        g = phi.gradient(Z)
        return np.sum(w * g * g, axis=1)

    dirs = halpha_directions(spec, phi.active)
    if t == 0:
        G = phi.gradient(X)
        lhs = np.sum(spec.q2a * G * G, axis=1)
        lhs_err = np.zeros(X.shape[0])
        rhs, rhs_err = gsq(X), np.zeros(X.shape[0])
    else:
        obs = [_direction_obs(phi, h) for h in dirs] + [gsq]
        vals = run_paths(cfg, X, [t], obs, M=n_paths, tangent=True, active=phi.active)
        lhs = np.zeros(X.shape[0])
        lhs_var = np.zeros(X.shape[0])
        for j in range(len(dirs)):
            st = _point_stats(vals[0, j])
            lhs += st.mean ** 2 - st.var_of_mean
            lhs_var += 4.0 * st.mean ** 2 * st.var_of_mean
        lhs_err = np.sqrt(lhs_var)
        st = _point_stats(vals[0, -1])
        rhs = math.exp(-2.0 * za * t) * st.mean
        rhs_err = math.exp(-2.0 * za * t) * np.sqrt(st.var_of_mean)
    out = []
    for i in range(X.shape[0]):
        out.append(CheckReport(
            "gradient_commutation", lhs[i], rhs[i], lhs_err[i], rhs_err[i], slack=slack,
            tol=1e-12 * max(1.0, abs(rhs[i])),
            label=f"{label + ':' if label else ''}{form}:x{i}:t={t:g}",
            metadata={"form": form, "t": t, "x": X[i], "zeta_alpha": za,
                      "n_paths": n_paths if t > 0 else 0, "phi": repr(phi)}))
    return out


def check_product_rule(phi: TrigPolynomial, psi: TrigPolynomial, d, spec: ModeSpectrum, xs,
                       tol: float = 1e-10, label: str = "") -> CheckReport:
    """Max residual of ``N0(phi psi) - phi N0 psi - psi N0 phi - <D_alpha phi, D_alpha psi>_alpha``."""
    X = np.atleast_2d(np.asarray(xs, dtype=float))
    pp = product(phi, psi)
    res = (apply_kolmogorov(pp, d, spec, X) - phi.value(X) * apply_kolmogorov(psi, d, spec, X)
           - psi.value(X) * apply_kolmogorov(phi, d, spec, X)
           - np.sum(spec.q2a * phi.gradient(X) * psi.gradient(X), axis=1))
    return CheckReport("product_rule", float(np.max(np.abs(res))), 0.0, tol=tol, label=label,
                       oracle=True, metadata={"n_points": X.shape[0], "phi": repr(phi),
                                              "psi": repr(psi)})


# --------------------------------------------------------------------------
# auxiliary checks


def check_yosida(d: DriftSpec, spec: ModeSpectrum, delta: float, n_pairs: int = 1000,
                 scale: float = 3.0, seed: int = 0) -> List[CheckReport]:
    """Properties of ``G = F - zeta2 I`` at the Yosida points ``x_delta``.

    Reports: solver residual (relative to ``1 + |x|``), the ``2/delta``
    Lipschitz bound, monotonicity and ``|G(x_delta)| <= |G(x)|`` over
    ``n_pairs`` random pairs.
    """
    rng = np.random.default_rng(seed)
    n = spec.n_modes
    x = scale * rng.standard_normal((n_pairs, n))
    z = scale * rng.standard_normal((n_pairs, n))
    zeta2 = one_sided_constant(d, spec)
    xd = yosida_resolvent(d, spec, zeta2, delta, x)
    zd = yosida_resolvent(d, spec, zeta2, delta, z)

    def G(y):
        return eval_drift(d, spec, y) - zeta2 * y

    resid = np.linalg.norm(xd - delta * G(xd) - x, axis=1) / (1.0 + np.linalg.norm(x, axis=1))
    dG = G(xd) - G(zd)
    lip = np.linalg.norm(dG, axis=1) - (2.0 / delta) * np.linalg.norm(x - z, axis=1)
    mono = np.sum(dG * (x - z), axis=1)
    contr = np.linalg.norm(G(xd), axis=1) - np.linalg.norm(G(x), axis=1)
    meta = {"delta": delta, "n_pairs": n_pairs, "zeta2": zeta2, "drift": d.variant}
    return [
        CheckReport("yosida", float(resid.max()), 0.0, tol=1e-10, label="residual", metadata=meta),
        CheckReport("yosida", float(lip.max()), 0.0, tol=1e-8, label="1yy:lipschitz",
                    metadata=meta),
        CheckReport("yosida", float(mono.max()), 0.0, tol=1e-8, label="2yy:monotone",
                    metadata=meta),
        CheckReport("yosida", float(contr.max()), 0.0, tol=1e-8, label="3yy:contraction",
                    metadata=meta),
    ]


def contraction_ratios(model: SPDEModel, x, y, h, times, dt: float, n_paths: int = 100,
                       seed: int = 0, stream: int = 0):
    """Worst ratios ``|X(t,x) - X(t,y)| / (e^{-zeta t}|x - y|)`` and
    ``|D^G X(t,x) h| / (e^{-zeta t}|h|)`` over paths and times.

    Both trajectories of a pair share their noise.  The scheme is
    drift-implicit.
    """
    zeta = model.certificate.zeta
    x, y, h = (np.asarray(v, dtype=float) for v in (x, y, h))
    times = np.asarray(times, dtype=float)
    nodes = np.concatenate([[0.0], times]) if times[0] != 0 else times
    P = int(n_paths)
    start = np.concatenate([np.tile(x, (P, 1)), np.tile(y, (P, 1))])
    ids = np.concatenate([np.arange(P), np.arange(P)]).astype(np.int64)
    Xs = np.empty((nodes.size, 2 * P, x.size))
    Ts = np.empty((nodes.size, 2 * P, x.size))

    def keep(node, rows, Xc, Tc):
        Xs[node, rows] = Xc
        Ts[node, rows] = Tc

    propagate(model, start, nodes, dt, scheme="drift_implicit", seed=seed, stream=stream,
              path_ids=ids, tangent=True, observe=keep)
    env = np.exp(-zeta * nodes)
    diff = np.linalg.norm(Xs[:, :P] - Xs[:, P:], axis=2) / (env[:, None] * np.linalg.norm(x - y))
    tang = np.linalg.norm(Ts[:, :P] * h, axis=2) / (env[:, None] * np.linalg.norm(h))
    return float(diff.max()), float(tang.max())


def contraction_study(model: SPDEModel, x, y, h, t_final: float,
                      dts: Sequence[float] = (1e-1, 1e-2, 1e-3), n_paths: int = 100,
                      n_times: int = 20, seed: int = 0) -> dict:
    """Discretization constant ``C`` each ``dt`` needs: ``(ratio - 1)/dt``."""
    times = np.linspace(0.0, t_final, n_times + 1)[1:]
    out = {}
    for dt in dts:
        rd, rt = contraction_ratios(model, x, y, h, times, dt, n_paths, seed)
        out[float(dt)] = {"difference": (rd - 1.0) / dt, "tangent": (rt - 1.0) / dt}
    return out


def check_pathwise_contraction(model: SPDEModel, x, y, h, t_final: float, dt: float,
                               n_paths: int = 100, C: float = C_FROZEN, n_times: int = 20,
                               seed: int = 0) -> List[CheckReport]:
    """``|X(t,x)-X(t,y)| <= e^{-zeta t}|x-y|(1 + C dt)`` and the same for ``D^G X h``."""
    times = np.linspace(0.0, t_final, n_times + 1)[1:]
    rd, rt = contraction_ratios(model, x, y, h, times, dt, n_paths, seed)
    meta = {"dt": dt, "C": C, "n_paths": n_paths, "t_final": t_final,
            "zeta": model.certificate.zeta}
    return [CheckReport("pathwise_contraction", rd, 1.0 + C * dt, tol=1e-12,
                        label=f"difference:dt={dt:g}", metadata=meta),
            CheckReport("pathwise_contraction", rt, 1.0 + C * dt, tol=1e-12,
                        label=f"tangent:dt={dt:g}", metadata=meta)]
