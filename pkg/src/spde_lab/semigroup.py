"""Monte-Carlo estimators for the transition semigroup and related objects.

Paths are identified by ``(seed, stream, path id)``.  Estimators that start
paths from several points use path id ``i * M + j`` for replica ``j`` of
point ``i``, so estimates at different points (or for different functions at
the same point) share their noise, which is what finite differences and
paired comparisons need.

When every function of interest depends only on a subset of coordinates and
the dynamics is separable (every shipped model), only that subset is
simulated.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import oracle
from .cylinder import CylinderFunction, TrigPolynomial
from .integrator import propagate
from .model import SPDEModel
from .rng import normals
from .spectrum import HAlphaVector, ModeSpectrum, q_infinity, stochastic_convolution_covariance


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_samples: int

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "stderr", float(self.stderr))
        object.__setattr__(self, "n_samples", int(self.n_samples))

    @classmethod
    def from_samples(cls, values) -> "MCEstimate":
        v = np.asarray(values, dtype=float).ravel()
        if v.size < 2:
            raise ValueError("need at least two samples")
        if np.all(v == v[0]):
            return cls(v[0], 0.0, v.size)
        return cls(v.mean(), v.std(ddof=1) / math.sqrt(v.size), v.size)

    def record(self, name: str, config_hash: str = "", seed: int = 0) -> dict:
        return {"name": name, "value": self.mean, "stderr": self.stderr, "n": self.n_samples,
                "config_hash": config_hash, "seed": seed}

    def to_json(self, name: str, config_hash: str = "", seed: int = 0) -> str:
        return json.dumps(self.record(name, config_hash, seed), sort_keys=True)


@dataclass(frozen=True)
class SimConfig:
    """Discretization and noise identity shared by the estimators."""

    model: SPDEModel
    dt: float = 0.01
    scheme: str = "drift_implicit"
    seed: int = 0
    stream: int = 0
    restrict: bool = True

    def with_stream(self, stream: int) -> "SimConfig":
        return SimConfig(self.model, self.dt, self.scheme, self.seed, stream, self.restrict)


def _union_active(funcs) -> np.ndarray:
    idx = [np.asarray(f.active, dtype=int) for f in funcs]
    return np.unique(np.concatenate(idx)) if idx else np.arange(0)


def run_paths(cfg: SimConfig, X0, times, observers: Sequence[Callable], M: int = 1,
              tangent: bool = False, active=None, point_ids=None) -> np.ndarray:
    """Simulate ``M`` replicas from each row of ``X0`` and record observations.

    Parameters
    ----------
    observers : sequence of callables
        ``obs(X, T)`` maps full states (rows) and tangent multipliers (or
        None) to one value per row.
    active : int array, optional
        Coordinates the observers depend on; the rest are not simulated (and
        keep their start values in ``X``) when ``cfg.restrict`` allows it.
    point_ids : int array, optional
        Noise identity of each start point (default ``arange(n_points)``);
        replica ``j`` of point ``i`` uses path id ``point_ids[i] * M + j``.
        Equal ids give common random numbers.

    Returns
    -------
    ndarray, shape (len(times), len(observers), n_points, M)
    """
    model = cfg.model
    n = model.n_modes
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    N = X0.shape[0]
    times = np.asarray(times, dtype=float)
    lead = times.size == 0 or times[0] != 0.0
    nodes = np.concatenate([[0.0], times]) if lead else times
    separable = cfg.scheme == "drift_implicit" or model.zero_drift
    if active is None or not cfg.restrict or not separable:
        idx = np.arange(n)
    else:
        idx = np.asarray(active, dtype=int)
    out = np.empty((nodes.size, len(observers), N * M))
    if idx.size == 0:
        # nothing random is observed: evaluate at the start points
        full = np.repeat(X0, M, axis=0)
        T = np.ones_like(full) if tangent else None
        for j, ob in enumerate(observers):
            out[:, j, :] = ob(full, T)[None, :]
    else:
        sub = model if idx.size == n else model.restrict(idx)
        start = np.repeat(X0[:, idx], M, axis=0)
        base = np.repeat(X0, M, axis=0) if idx.size < n else None
        pid = np.arange(N) if point_ids is None else np.asarray(point_ids, dtype=np.int64)
        ids = (np.repeat(pid, M) * M + np.tile(np.arange(M), N)).astype(np.int64)

        def observe(node, rows, Xc, Tc):
            if idx.size == n:
                full = Xc
                Tf = Tc
            else:
                full = base[rows].copy()
                full[:, idx] = Xc
                Tf = None
                if Tc is not None:
                    Tf = np.ones_like(full)
                    Tf[:, idx] = Tc
            for j, ob in enumerate(observers):
                out[node, j, rows] = ob(full, Tf)

        propagate(sub, start, nodes, cfg.dt, scheme=cfg.scheme, seed=cfg.seed,
                  stream=cfg.stream, path_ids=ids, tangent=tangent, observe=observe)
    out = out.reshape(nodes.size, len(observers), N, M)
    return out[1:] if lead else out


def _value_obs(phi):
    return lambda X, T: phi.value(X)


def _direction_obs(phi, h):
    h = np.asarray(getattr(h, "coords", h), dtype=float)
    return lambda X, T: np.sum(phi.gradient(X) * (T * h), axis=1)


def estimate_pt(phi: CylinderFunction, x, t: float, n_paths: int, cfg: SimConfig) -> MCEstimate:
    """``P(t) phi(x) = E[phi(X(t, x))]`` from ``n_paths`` paths."""
    if t < 0:
        raise ValueError("t must be >= 0")
    vals = run_paths(cfg, x, [t], [_value_obs(phi)], M=n_paths, active=phi.active)
    return MCEstimate.from_samples(vals[0, 0, 0])


def estimate_pt_grid(phis: Sequence[CylinderFunction], x, times, n_paths: int,
                     cfg: SimConfig) -> List[List[MCEstimate]]:
    """Estimates for every ``(t, phi)`` pair from one shared set of paths."""
    vals = run_paths(cfg, x, times, [_value_obs(p) for p in phis], M=n_paths,
                     active=_union_active(phis))
    return [[MCEstimate.from_samples(vals[i, j, 0]) for j in range(len(phis))]
            for i in range(len(times))]


def estimate_gradient_pt(phi: CylinderFunction, x, t: float, n_paths: int,
                         directions: Sequence, cfg: SimConfig) -> List[MCEstimate]:
    """``<D_alpha P(t) phi(x), h>_alpha`` for each direction ``h``.

    Pathwise estimator ``E[<D_alpha phi(X(t)), S_h(t)>_alpha] = E[<D phi(X(t)), S_h(t)>]``
    with ``S_h`` the linearized flow along the same path.
    """
    obs = [_direction_obs(phi, h) for h in directions]
    vals = run_paths(cfg, x, [t], obs, M=n_paths, tangent=True, active=phi.active)
    return [MCEstimate.from_samples(vals[0, j, 0]) for j in range(len(obs))]


def halpha_directions(spec: ModeSpectrum, active) -> List[HAlphaVector]:
    """H_alpha-orthonormal directions ``lambda_j^alpha e_j`` for ``j`` in ``active``."""
    out = []
    for j in np.asarray(active, dtype=int):
        h = np.zeros(spec.n_modes)
        h[j] = spec.lam_alpha[j]
        out.append(HAlphaVector(h))
    return out


# --------------------------------------------------------------------------
# invariant ensembles


def geyer_ess(values) -> float:
    """Effective sample size by the initial positive sequence estimator."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 4:
        return float(n)
    d = v - v.mean()
    g0 = float(d @ d) / n
    if g0 == 0.0:
        return float(n)
    m = 1 << int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(d, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    pairs = acov[:-1:2] + acov[1::2]
    total = 0.0
    prev = np.inf
    for p in pairs:
        if p <= 0:
            break
        p = min(p, prev)  # monotone sequence
        total += p
        prev = p
    sigma2 = -g0 + 2.0 * total
    sigma2 = max(sigma2, g0 / n)
    return float(min(n, n * g0 / sigma2))


@dataclass
class InvariantEnsemble:
    """Draws approximating the invariant measure.

    ``provenance`` is ``"long_path"`` (one trajectory after burn-in, thinned),
    ``"ensemble"`` (independent paths at a large time) or ``"quadrature"``
    (weighted deterministic nodes on the coordinates in ``params["active"]``).
    """

    draws: np.ndarray
    provenance: str
    params: dict = field(default_factory=dict)
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.draws.shape[0] == 0:
            raise ValueError("ensemble must be nonempty")
        if self.provenance not in ("long_path", "ensemble", "quadrature"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "quadrature" and self.weights is None:
            raise ValueError("quadrature ensembles need weights")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def deterministic(self) -> bool:
        return self.provenance == "quadrature"

    @property
    def ess(self) -> float:
        if self.provenance == "quadrature":
            return float("inf")
        if self.provenance == "ensemble":
            return float(self.n_draws)
        return min(geyer_ess(self.draws[:, k] ** 2) for k in range(self.draws.shape[1]))

    def covers(self, phi) -> bool:
        if self.provenance != "quadrature":
            return True
        return set(np.asarray(phi.active).tolist()) <= set(self.params.get("active", []))

    def expect(self, values) -> MCEstimate:
        """Mean of per-draw ``values`` with an honest standard error."""
        v = np.asarray(values, dtype=float).ravel()
        if v.size != self.n_draws:
            raise ValueError("one value per draw expected")
        if self.provenance == "quadrature":
            return MCEstimate(float(self.weights @ v), 0.0, v.size)
        mean = v.mean()
        var = v.var(ddof=1)
        if self.provenance == "ensemble":
            return MCEstimate(mean, math.sqrt(var / v.size), v.size)
        ess = geyer_ess(v)
        return MCEstimate(mean, math.sqrt(var / ess), v.size)

    def summary(self) -> dict:
        out = {"provenance": self.provenance, "n_draws": self.n_draws}
        out.update({k: v for k, v in self.params.items()})
        if self.provenance != "quadrature":
            out["ess"] = self.ess
        return out


@dataclass(frozen=True)
class InvariantConfig:
    n_draws: int = 10_000
    burn_in: Optional[float] = None
    thinning: Optional[float] = None
    dt: float = 0.01
    scheme: str = "drift_implicit"
    seed: int = 0
    stream: int = 1
    provenance: str = "long_path"


def sample_invariant(d, spec: ModeSpectrum = None, cfg: InvariantConfig = InvariantConfig()) -> InvariantEnsemble:
    """Draws from the invariant measure.

    ``long_path``: one trajectory from 0, states kept every ``thinning``
    after ``burn_in`` (defaults ``10/zeta`` and ``1/zeta``).  ``ensemble``:
    ``n_draws`` independent paths from 0 observed at time ``burn_in``.
    """
    model = d if isinstance(d, SPDEModel) else SPDEModel(spec, d)
    zeta = model.certificate.zeta
    burn = 10.0 / zeta if cfg.burn_in is None else float(cfg.burn_in)
    thin = 1.0 / zeta if cfg.thinning is None else float(cfg.thinning)
    n = model.n_modes
    sim = SimConfig(model, cfg.dt, cfg.scheme, cfg.seed, cfg.stream, restrict=False)
    params = {"burn_in": burn, "dt": cfg.dt, "scheme": cfg.scheme}
    if cfg.provenance == "long_path":
        times = burn + thin * np.arange(cfg.n_draws)
        draws = np.empty((cfg.n_draws, n))

        def keep(node, rows, X, T):
            if node > 0:
                draws[node - 1] = X[0]

        propagate(model, np.zeros(n), np.concatenate([[0.0], times]), cfg.dt,
                  scheme=cfg.scheme, seed=cfg.seed, stream=cfg.stream,
                  path_ids=np.zeros(1, dtype=np.int64), observe=keep)
        params["thinning"] = thin
        return InvariantEnsemble(draws, "long_path", params)
    if cfg.provenance == "ensemble":
        X, _ = propagate(model, np.zeros(n), [0.0, burn], cfg.dt, scheme=cfg.scheme,
                         seed=cfg.seed, stream=cfg.stream,
                         path_ids=np.arange(cfg.n_draws, dtype=np.int64))
        return InvariantEnsemble(X, "ensemble", params)
    raise ValueError("use quadrature_ensemble for quadrature provenance")


def quadrature_ensemble(model: SPDEModel, active, order: int = 64) -> InvariantEnsemble:
    """Weighted nodes for the invariant law restricted to ``active`` coordinates.

    Gaussian case (``F = 0``): Gauss-Hermite on ``N(0, Q_inf)``.  Gradient
    case: composite Gauss-Legendre against the 1-D Gibbs densities.  The
    invariant law is a product over coordinates in both cases, so the rule
    is exact in law for functions of the active coordinates.
    """
    active = np.asarray(active, dtype=int)
    if model.zero_drift:
        q = q_infinity(model.spec).q
        z, w = np.polynomial.hermite_e.hermegauss(order)
        w = w / w.sum()
        grids = [np.sqrt(q[k]) * z for k in active]
        wts = [w] * active.size
        pts, weights = _tensor_nodes(model.n_modes, active, grids, wts)
    elif model.drift is not None and model.drift.variant == "gradient":
        dens = oracle.gibbs_densities(model.spec, model.drift.potential)
        pts, weights = oracle.gibbs_nodes(dens, active)
    else:
        raise ValueError("quadrature ensembles need F = 0 or a gradient drift")
    return InvariantEnsemble(pts, "quadrature", {"active": active.tolist(), "order": order},
                             weights)


def _tensor_nodes(n, active, grids, wts):
    if active.size == 0:
        return np.zeros((1, n)), np.ones(1)
    mesh = np.meshgrid(*grids, indexing="ij")
    wmesh = np.meshgrid(*wts, indexing="ij")
    pts = np.zeros((mesh[0].size, n))
    for j, k in enumerate(active):
        pts[:, k] = mesh[j].ravel()
    return pts, np.prod([m.ravel() for m in wmesh], axis=0)


# --------------------------------------------------------------------------
# nested estimates over ensembles


@dataclass
class PointEstimates:
    """Per-point Monte-Carlo means and the variance of each mean."""

    mean: np.ndarray
    var_of_mean: np.ndarray


def pt_on_points(phis, X0, times, M: int, cfg: SimConfig) -> List[List[PointEstimates]]:
    """``P(t) phi(x_i)`` for every node time, function and start point.

    Returns ``out[t][phi]`` with arrays over points.
    """
    vals = run_paths(cfg, X0, times, [_value_obs(p) for p in phis], M=M,
                     active=_union_active(phis))
    return [[_point_stats(vals[i, j]) for j in range(len(phis))] for i in range(vals.shape[0])]


def gradient_on_points(phi, X0, times, M: int, directions, cfg: SimConfig):
    """``D_h P(t) phi(x_i)`` for every node time and direction (``out[t][h]``)."""
    obs = [_direction_obs(phi, h) for h in directions]
    vals = run_paths(cfg, X0, times, obs, M=M, tangent=True, active=phi.active)
    return [[_point_stats(vals[i, j]) for j in range(len(obs))] for i in range(vals.shape[0])]


def _point_stats(v):
    M = v.shape[1]
    var = v.var(axis=1, ddof=1) / M if M > 1 else np.zeros(v.shape[0])
    return PointEstimates(v.mean(axis=1), var)


# --------------------------------------------------------------------------
# Ornstein-Uhlenbeck semigroup


def ou_mehler(phi, x, t: float, spec: ModeSpectrum, method: str = "exact_trig",
              order: int = 40, n_mc: int = 100_000, seed: int = 0) -> MCEstimate:
    """``T(t) phi(x) = int phi(e^{tA} x + y) N(0, Q_t)(dy)``.

    ``exact_trig`` uses the closed form (trig polynomials only),
    ``quadrature`` tensor Gauss-Hermite on the active coordinates and ``mc``
    plain Gaussian sampling.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    x = np.asarray(x, dtype=float)
    if method == "exact_trig":
        if not isinstance(phi, TrigPolynomial):
            raise TypeError("exact_trig requires a trigonometric polynomial")
        return MCEstimate(float(oracle.ou_exact(phi, x, t, spec)), 0.0, 1)
    mean = np.exp(-spec.a * t) * x
    q = stochastic_convolution_covariance(spec, t).q
    if method == "quadrature":
        active = np.asarray(phi.active, dtype=int)
        z, w = np.polynomial.hermite_e.hermegauss(order)
        w = w / w.sum()
        pts, weights = _tensor_nodes(spec.n_modes, active, [np.sqrt(q[k]) * z for k in active],
                                     [w] * active.size)
        pts = pts + mean
        pts[:, np.setdiff1d(np.arange(spec.n_modes), active)] = mean[
            np.setdiff1d(np.arange(spec.n_modes), active)]
        return MCEstimate(float(weights @ phi.value(pts)), 0.0, weights.size)
    if method == "mc":
        z = normals(seed, 0, [0], np.arange(n_mc), spec.n_modes)[0]
        return MCEstimate.from_samples(phi.value(mean + np.sqrt(q) * z))
    raise ValueError(f"unknown method {method!r}")


def ou_mehler_on_points(phi, X0, t: float, spec: ModeSpectrum, order: int = 40) -> np.ndarray:
    """Vectorized :func:`ou_mehler` (exact for trig, quadrature otherwise)."""
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if isinstance(phi, TrigPolynomial):
        return oracle.ou_exact(phi, X0, t, spec)
    active = np.asarray(phi.active, dtype=int)
    q = stochastic_convolution_covariance(spec, t).q
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    offs, weights = _tensor_nodes(spec.n_modes, active, [np.sqrt(q[k]) * z for k in active],
                                  [w] * active.size)
    mean = np.exp(-spec.a * t) * X0
    vals = phi.value((mean[:, None, :] + offs[None, :, :]).reshape(-1, spec.n_modes))
    return vals.reshape(X0.shape[0], -1) @ weights


# --------------------------------------------------------------------------
# resolvent


@dataclass(frozen=True)
class ResolventConfig:
    """Time quadrature of ``int_0^inf e^{-lam t} P(t) f dt``.

    Composite Gauss-Legendre on panels ``[0, t0], [t0, 2 t0], [2 t0, 4 t0], ...``
    up to ``t_max`` (default ``20 / lam``) with ``t0 = t_max * first_panel``.
    """

    t_max: Optional[float] = None
    n_time_nodes: int = 8
    n_paths: int = 1000
    first_panel: float = 1e-4
    ratio: float = 2.0


def laplace_rule(lam: float, t_max: float, order: int, first_panel: float = 1e-4,
                 ratio: float = 2.0):
    """Nodes and weights (including ``e^{-lam t}``) on ``[0, t_max]``."""
    edges = [0.0, t_max * first_panel]
    while edges[-1] < t_max * (1 - 1e-12):
        edges.append(min(edges[-1] * ratio, t_max))
    z, w = np.polynomial.legendre.leggauss(order)
    T, W = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        T.append(0.5 * (b - a) * z + 0.5 * (a + b))
        W.append(0.5 * (b - a) * w)
    T = np.concatenate(T)
    return T, np.concatenate(W) * np.exp(-lam * T)


@dataclass
class _LaplacePlan:
    times: np.ndarray
    rules: list  # per lam: (node indices, weights, low-order indices, weights, t_max index)
    lams: list
    t_max: list


def _plan(lams, rcfg: ResolventConfig) -> _LaplacePlan:
    all_t, rules, tmaxes = [], [], []
    for lam in lams:
        if not lam > 0:
            raise ValueError("lam must be > 0")
        t_max = rcfg.t_max if rcfg.t_max is not None else 20.0 / lam
        hi = laplace_rule(lam, t_max, rcfg.n_time_nodes, rcfg.first_panel, rcfg.ratio)
        lo = laplace_rule(lam, t_max, max(2, rcfg.n_time_nodes - 3), rcfg.first_panel, rcfg.ratio)
        rules.append((hi, lo))
        all_t.extend([hi[0], lo[0]])
        tmaxes.append(t_max)
    times = np.unique(np.concatenate(all_t + [np.asarray(tmaxes)]))
    idx_rules = []
    for (hi, lo), t_max in zip(rules, tmaxes):
        idx_rules.append((np.searchsorted(times, hi[0]), hi[1], np.searchsorted(times, lo[0]), lo[1],
                          int(np.searchsorted(times, t_max))))
    return _LaplacePlan(times, idx_rules, list(lams), tmaxes)


@dataclass
class ResolventPoints:
    """Per-lam arrays over start points: value, its variance, quadrature error."""

    lam: float
    mean: np.ndarray
    var_of_mean: np.ndarray
    quad_err: np.ndarray


def _laplace_pathwise(vals, plan: _LaplacePlan, sup_f: float):
    """Apply every lam's rule pathwise. ``vals`` has shape (times, ...).

    Beyond ``t_max`` the integrand is replaced by its value at ``t_max``
    (exact for constants); the truncation bound stays in the error.
    Returns per lam ``(V, V_low, tail_bound)``.
    """
    out = []
    for lam, t_max, (ih, wh, il, wl, iend) in zip(plan.lams, plan.t_max, plan.rules):
        tail_w = math.exp(-lam * t_max) / lam
        V = np.tensordot(wh, vals[ih], axes=(0, 0)) + tail_w * vals[iend]
        Vlo = np.tensordot(wl, vals[il], axes=(0, 0)) + tail_w * vals[iend]
        out.append((V, Vlo, sup_f * tail_w))
    return out


def _laplace_reduce(vals, plan: _LaplacePlan, sup_f: float):
    """Per-point means of the pathwise Laplace sums (``vals``: times, points, M)."""
    out = []
    for lam, (V, Vlo, tail) in zip(plan.lams, _laplace_pathwise(vals, plan, sup_f)):
        M = V.shape[1]
        mean = V.mean(axis=1)
        var = V.var(axis=1, ddof=1) / M if M > 1 else np.zeros(V.shape[0])
        qerr = np.abs(mean - Vlo.mean(axis=1)) + tail
        out.append(ResolventPoints(lam, mean, var, qerr))
    return out


@dataclass
class LaplacePaths:
    """Pathwise Laplace sums for one lam.

    ``V`` and ``V_low`` (high- and low-order time rules) and ``end`` (the
    integrand at ``t_max``) have shape ``(n_observables, n_points, M)``.
    """

    lam: float
    V: np.ndarray
    V_low: np.ndarray
    end: np.ndarray
    tail_weight: float

    def quad_error(self, V=None, V_low=None, end=None) -> float:
        """Rule difference plus tail bound (``sup |end| e^{-lam t_max}/lam``)."""
        V = self.V if V is None else V
        V_low = self.V_low if V_low is None else V_low
        end = self.end if end is None else end
        return float(np.max(np.abs(V.mean(axis=-1) - V_low.mean(axis=-1)))
                     + np.max(np.abs(end)) * self.tail_weight)


def resolvent_paths(f, lams, X0, cfg: SimConfig, rcfg: ResolventConfig, directions=None,
                    point_ids=None) -> List[LaplacePaths]:
    """Pathwise Laplace sums for ``u`` and ``D_h u`` before averaging.

    Observable 0 is ``u``, observable ``1 + j`` is ``D_{h_j} u``.  With
    ``point_ids`` repeated across start points the paths share noise, so
    differences across points are common-random-number differences.
    """
    plan = _plan(lams, rcfg)
    directions = list(directions or [])
    obs = [_value_obs(f)] + [_direction_obs(f, h) for h in directions]
    vals = run_paths(cfg, X0, plan.times, obs, M=rcfg.n_paths, tangent=bool(directions),
                     active=f.active, point_ids=point_ids)
    vals = np.moveaxis(vals, 1, 0)  # (obs, times, points, M)
    out = []
    for lam, t_max, (ih, wh, il, wl, iend) in zip(plan.lams, plan.t_max, plan.rules):
        tail_w = math.exp(-lam * t_max) / lam
        end = vals[:, iend]
        V = np.einsum("t,otpm->opm", wh, vals[:, ih]) + tail_w * end
        Vlo = np.einsum("t,otpm->opm", wl, vals[:, il]) + tail_w * end
        out.append(LaplacePaths(lam, V, Vlo, end, tail_w))
    return out


def resolvent_on_points(f, lams, X0, cfg: SimConfig, rcfg: ResolventConfig,
                        directions=None):
    """``u = R(lam, N) f`` (and ``D_h u``) at the rows of ``X0`` for each lam.

    One set of paths serves all lams and all time nodes.

    Returns
    -------
    values : list of ResolventPoints (one per lam)
    grads : list (per lam) of lists (per direction) of ResolventPoints, or None
    """
    plan = _plan(lams, rcfg)
    obs = [_value_obs(f)]
    directions = list(directions or [])
    obs += [_direction_obs(f, h) for h in directions]
    vals = run_paths(cfg, X0, plan.times, obs, M=rcfg.n_paths, tangent=bool(directions),
                     active=f.active)
    sup_f = float(np.max(np.abs(vals[:, 0])))
    values = _laplace_reduce(vals[:, 0], plan, sup_f)
    if not directions:
        return values, None
    sup_g = [float(np.max(np.abs(vals[:, 1 + j]))) for j in range(len(directions))]
    per_dir = [_laplace_reduce(vals[:, 1 + j], plan, sup_g[j]) for j in range(len(directions))]
    grads = [[per_dir[j][i] for j in range(len(directions))] for i in range(len(lams))]
    return values, grads


def resolvent(f, lam: float, x, cfg: SimConfig, rcfg: ResolventConfig = ResolventConfig()) -> MCEstimate:
    """``u(x) = int_0^inf e^{-lam t} P(t) f(x) dt``.

    The standard error combines the Monte-Carlo error with the time
    quadrature error estimate (difference to a lower-order rule plus the
    truncation tail bound).
    """
    if not lam > 0:
        raise ValueError("lam must be > 0")
    values, _ = resolvent_on_points(f, [lam], x, cfg, rcfg)
    r = values[0]
    return MCEstimate(r.mean[0], math.sqrt(r.var_of_mean[0]) + r.quad_err[0], rcfg.n_paths)
