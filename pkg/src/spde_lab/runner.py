"""Execute the checks declared in a resolved configuration.

Each check gets its own noise stream, derived from its position and name,
so adding or removing a check does not change the others' random numbers
(apart from the shared invariant ensemble).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import inequality as ineq
from . import oracle
from .config import ConfigError, build_drift, build_spectrum, config_hash
from .cylinder import TrigPolynomial, _coord_vector, from_declaration
from .model import SPDEModel
from .report import CheckReport
from .rng import derive_stream
from .semigroup import (InvariantConfig, InvariantEnsemble, ResolventConfig, SimConfig,
                        quadrature_ensemble, sample_invariant)
from .spectrum import check_trace_condition, q_infinity


@dataclass
class RunContext:
    cfg: dict
    model: SPDEModel
    seed: int
    hash: str
    _ensemble: Optional[InvariantEnsemble] = None
    ensemble_summary: Dict = field(default_factory=dict)

    @property
    def spec(self):
        return self.model.spec

    @property
    def cert(self):
        return self.model.certificate

    def sim(self, stream: int, dt: Optional[float] = None) -> SimConfig:
        s = self.cfg["simulation"]
        return SimConfig(self.model, dt or s["dt"], s["scheme"], self.seed, stream)

    def ensemble(self) -> InvariantEnsemble:
        if self._ensemble is None:
            s = self.cfg["simulation"]
            icfg = InvariantConfig(n_draws=s["n_draws"], burn_in=s.get("burn_in"),
                                   thinning=s.get("thinning"),
                                   dt=s.get("invariant_dt", s["dt"]), scheme=s["scheme"],
                                   seed=self.seed, stream=derive_stream("invariant"),
                                   provenance=s["provenance"])
            self._ensemble = sample_invariant(self.model, cfg=icfg)
            self.ensemble_summary = self._ensemble.summary()
        return self._ensemble

    def ensemble_for(self, chk: dict, funcs) -> InvariantEnsemble:
        if chk.get("ensemble", "sample") == "quadrature":
            active = np.unique(np.concatenate([np.asarray(f.active, int) for f in funcs]
                                              + [np.zeros(0, int)]))
            try:
                return quadrature_ensemble(self.model, active)
            except ValueError as exc:
                raise ConfigError(f"check {chk['name']}: {exc}") from exc
        return self.ensemble()


def make_model(cfg: dict) -> SPDEModel:
    """Spectrum, drift and certification (raises ``CertificationFailed``)."""
    return SPDEModel(build_spectrum(cfg), build_drift(cfg))


def _func(decl, n, where):
    try:
        return from_declaration(decl, n)
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise ConfigError(f"{where}: invalid function declaration: {exc}") from exc


def _list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _times(ctx: RunContext, chk: dict, default_over_za) -> List[float]:
    if "t" in chk and "t_over_zeta_alpha" in chk:
        raise ConfigError(f"check {chk['name']}: give either 't' or 't_over_zeta_alpha'")
    if "t" in chk:
        return [float(t) for t in _list(chk["t"])]
    scale = 1.0 / ctx.cert.zeta_alpha
    return [float(t) * scale for t in _list(chk.get("t_over_zeta_alpha", default_over_za))]


def _run_poincare(ctx, chk, stream):
    n = ctx.spec.n_modes
    funcs = [_func(d, n, "poincare") for d in chk["functions"]]
    ens = ctx.ensemble_for(chk, funcs)
    return ineq.check_poincare(funcs, ens, ctx.cert, ctx.spec, labels=chk.get("labels"),
                               sharp=chk.get("sharp", ()))


def _run_logsob(ctx, chk, stream):
    phi = _func(chk["function"], ctx.spec.n_modes, "logsob")
    ens = ctx.ensemble_for(chk, [phi])
    return [ineq.check_logsob(phi, float(p), ens, ctx.cert, ctx.spec) for p in _list(chk["p"])]


def _run_hyper(ctx, chk, stream):
    phi = _func(chk["function"], ctx.spec.n_modes, "hypercontractivity")
    ens = ineq.subsample(ctx.ensemble_for(chk, [phi]), chk.get("n_points", 1024))
    sim = ctx.sim(stream)
    out = []
    for q in _list(chk["q"]):
        for t in _times(ctx, chk, [0.2, 1.0]):
            out.append(ineq.check_hypercontractivity(phi, float(q), t, ens, ctx.cert, sim,
                                                     n_paths=chk.get("n_paths")))
    return out


def _run_ergodicity(ctx, chk, stream):
    phi = _func(chk["function"], ctx.spec.n_modes, "ergodicity")
    ens = ineq.subsample(ctx.ensemble_for(chk, [phi]), chk.get("n_points", 1024))
    times = _times(ctx, chk, [0.25, 0.5, 1.0, 1.5, 2.0])
    return ineq.check_ergodicity(phi, times, ens, ctx.cert, ctx.sim(stream),
                                 n_paths=chk.get("n_paths"), slack=chk.get("slack", 0.1),
                                 rate_slack=chk.get("rate_slack"),
                                 sharp=chk.get("sharp", False), label=chk.get("label", ""))


def _run_energy(ctx, chk, stream):
    phi = _func(chk["function"], ctx.spec.n_modes, "energy_identity")
    if not isinstance(phi, TrigPolynomial):
        raise ConfigError("energy_identity needs a trig function")
    ens = ineq.subsample(ctx.ensemble_for(chk, [phi]), chk.get("n_points", 1024))
    return [ineq.check_energy_identity(phi, t, ens, ctx.sim(stream), n_paths=chk.get("n_paths"),
                                       n_time_nodes=chk.get("n_time_nodes", 8))
            for t in _times(ctx, chk, [0.5, 1.0])]


def _run_ibp(ctx, chk, stream):
    n = ctx.spec.n_modes
    funcs = [_func(d, n, "integration_by_parts") for d in chk["functions"]]
    ens = ctx.ensemble_for(chk, funcs)
    return [ineq.check_integration_by_parts(f, ctx.model, ctx.spec, ens, label=f"phi{i}")
            for i, f in enumerate(funcs)]


def _run_stationarity(ctx, chk, stream):
    n = ctx.spec.n_modes
    funcs = [_func(d, n, "stationarity") for d in chk["functions"]]
    ens = ctx.ensemble_for(chk, funcs)
    return [ineq.check_stationarity(f, ctx.model, ctx.spec, ens, label=f"phi{i}")
            for i, f in enumerate(funcs)]


def _run_resolvent(ctx, chk, stream):
    n = ctx.spec.n_modes
    funcs = [_func(d, n, "resolvent_bounds") for d in chk["functions"]]
    lams = [float(v) for v in _list(chk["lams"])]
    if any(not l > 0 for l in lams):
        raise ConfigError("resolvent_bounds: lams must be > 0")
    ens = ctx.ensemble_for(chk, funcs)
    rcfg = ResolventConfig(t_max=chk.get("t_max"), n_paths=chk.get("n_paths", 256))
    return ineq.check_resolvent_bounds(funcs, lams, ens, ctx.sim(stream), rcfg,
                                       n_points=chk.get("n_points", 64),
                                       second_order=chk.get("second_order", "auto"),
                                       second_order_slack=chk.get("second_order_slack", 0.5),
                                       fd_step=chk.get("fd_step", 1e-3))


def _run_moment(ctx, chk, stream):
    n = ctx.spec.n_modes
    x0s = [_coord_vector(v, n) for v in chk["x0"]]
    t_final = chk.get("t_final_over_zeta", 10.0) / ctx.cert.zeta
    times = np.linspace(0.0, t_final, chk.get("n_times", 20) + 1)
    sim = ctx.sim(stream, chk.get("dt"))
    return ineq.check_moment_bound(x0s, [float(k) for k in _list(chk["k"])], times, sim,
                                   n_paths=chk.get("n_paths", 2000),
                                   forget_slack=chk.get("forget_slack", 0.1))


def _run_commutation(ctx, chk, stream):
    n = ctx.spec.n_modes
    phi = _func(chk["function"], n, "gradient_commutation")
    pts = np.array([_coord_vector(v, n) for v in chk["points"]])
    out = []
    for t in _times(ctx, chk, [0.0, 0.5, 1.0]):
        out += ineq.check_gradient_commutation(phi, t, pts, ctx.cert, ctx.sim(stream),
                                               n_paths=chk.get("n_paths", 2000),
                                               form=chk.get("form", "halpha"),
                                               slack=chk.get("slack", 0.0))
    return out


def random_trig(rng: np.random.Generator, n: int, max_terms: int = 3, max_freq: int = 3,
                n_active: int = 3) -> TrigPolynomial:
    """Random trig polynomial with integer frequencies on the first modes."""
    k = int(rng.integers(1, max_terms + 1))
    m = min(n, n_active)
    H = np.zeros((k, n))
    H[:, :m] = rng.integers(-max_freq, max_freq + 1, size=(k, m))
    return TrigPolynomial(rng.uniform(-1, 1, k), list(rng.choice(["sin", "cos"], k)), H, n)


def _run_product(ctx, chk, stream):
    n = ctx.spec.n_modes
    rng = np.random.default_rng(chk.get("seed", ctx.seed))
    pts = rng.standard_normal((chk.get("n_points", 10), n))
    tol = chk.get("tol", 1e-10)
    out = []
    for i, (a, b) in enumerate(chk.get("pairs", [])):
        out.append(ineq.check_product_rule(_func(a, n, "product_rule"), _func(b, n, "product_rule"),
                                           ctx.model, ctx.spec, pts, tol=tol, label=f"pair{i}"))
    n_rand = chk.get("random_pairs", 0 if chk.get("pairs") else 100)
    if n_rand:
        worst = None
        for _ in range(n_rand):
            phi = random_trig(rng, n, chk.get("max_terms", 3), chk.get("max_freq", 3))
            psi = random_trig(rng, n, chk.get("max_terms", 3), chk.get("max_freq", 3))
            r = ineq.check_product_rule(phi, psi, ctx.model, ctx.spec, pts, tol=tol)
            if worst is None or r.lhs > worst.lhs:
                worst = r
        worst.label = f"random[{n_rand}]:max"
        worst.metadata["n_pairs"] = n_rand
        out.append(worst)
    return out


def _run_yosida(ctx, chk, stream):
    out = []
    for delta in _list(chk.get("delta", [0.1, 1.0])):
        reps = ineq.check_yosida(ctx.model.drift, ctx.spec, float(delta),
                                 n_pairs=chk.get("n_pairs", 1000), scale=chk.get("scale", 3.0),
                                 seed=chk.get("seed", ctx.seed))
        for r in reps:
            r.label = f"delta={float(delta):g}:{r.label}"
        out += reps
    return out


def _run_contraction(ctx, chk, stream):
    n = ctx.spec.n_modes
    x, y, h = np.ones(n), -np.ones(n), np.ones(n)
    t_final = chk.get("t_final_over_zeta", 2.0) / ctx.cert.zeta
    C = chk.get("C", ineq.C_FROZEN)
    dts = [float(v) for v in _list(chk.get("dt", [1e-1, 1e-2, 1e-3]))]
    n_paths = chk.get("n_paths", 100)
    # refinement study: the constant each dt actually needs, next to the frozen one
    study = ineq.contraction_study(ctx.model, x, y, h, t_final, dts, n_paths=n_paths,
                                   seed=ctx.seed)
    required = {kind: max(max(v[kind], 0.0) for v in study.values())
                for kind in ("difference", "tangent")}
    out = []
    for dt in dts:
        reps = ineq.check_pathwise_contraction(ctx.model, x, y, h, t_final, dt,
                                               n_paths=n_paths, C=C, seed=ctx.seed)
        for r in reps:
            kind = r.label.split(":", 1)[0]
            r.metadata.update(C_required=required.get(kind, 0.0),
                              C_study={f"{k:g}": v[kind] for k, v in study.items()})
        out += reps
    return out


def _run_trace(ctx, chk, stream):
    return [check_trace_condition(ctx.spec, float(eta)) for eta in _list(chk.get("eta", [0.5]))]


def _run_invariant_law(ctx, chk, stream):
    model = ctx.model
    spec = ctx.spec
    ens = ctx.ensemble()
    modes = [m - 1 for m in chk.get("modes", [1, 2, 3]) if m <= spec.n_modes]
    orders = chk.get("orders", [1, 2, 3, 4])
    n_sigma = chk.get("n_sigma", 4.0)
    variant = model.drift.variant
    if variant in ("zero", "linear_diagonal"):
        m = np.asarray(model.p1, float)
        q = spec.q2a / (2.0 * (spec.a - m))
        exact = lambda k, p: oracle.gaussian_moment(q[k], p)
    elif variant == "gradient":
        dens = oracle.gibbs_densities(spec, model.drift.potential)
        exact = lambda k, p: dens[k].moment(p)
    else:
        raise ConfigError("invariant_law needs a drift with a known invariant law")
    out = []
    for k in modes:
        for p in orders:
            est = ens.expect(ens.draws[:, k] ** p)
            out.append(CheckReport("invariant_law", est.mean, exact(k, p), est.stderr, 0.0,
                                   predicate="two_sided", n_sigma=n_sigma, oracle=True,
                                   label=f"x{k + 1}^{p}",
                                   metadata={"mode": k + 1, "order": p, "ess": ens.ess}))
    return out


RUNNERS: Dict[str, Callable] = {
    "poincare": _run_poincare,
    "logsob": _run_logsob,
    "hypercontractivity": _run_hyper,
    "ergodicity": _run_ergodicity,
    "energy_identity": _run_energy,
    "integration_by_parts": _run_ibp,
    "resolvent_bounds": _run_resolvent,
    "moment_bound": _run_moment,
    "gradient_commutation": _run_commutation,
    "product_rule": _run_product,
    "stationarity": _run_stationarity,
    "yosida": _run_yosida,
    "pathwise_contraction": _run_contraction,
    "trace_condition": _run_trace,
    "invariant_law": _run_invariant_law,
}


def run_checks(cfg: dict, seed: Optional[int] = None, progress: Callable = None):
    """Build, certify and run every declared check.

    Returns ``(context, reports)``.  Raises ``ConfigError`` or
    ``CertificationFailed`` before any simulation if the problem is invalid.
    """
    seed = cfg["simulation"]["seed"] if seed is None else int(seed)
    model = make_model(cfg)
    ctx = RunContext(cfg, model, seed, config_hash(cfg))
    reports: List[CheckReport] = []
    for i, chk in enumerate(cfg["checks"]):
        name = chk["name"]
        stream = derive_stream(f"{i}:{name}")
        try:
            reps = RUNNERS[name](ctx, chk, stream)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"check {i} ({name}): {exc}") from exc
        for r in reps:
            if chk.get("label"):
                r.label = f"{chk['label']}:{r.label}" if r.label else chk["label"]
            r.metadata.update({"config_hash": ctx.hash, "seed": seed, "stream": stream,
                               "check_index": i})
        reports.extend(reps)
        if progress is not None:
            progress(name, reps)
    return ctx, reports
