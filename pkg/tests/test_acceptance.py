"""The fourteen acceptance criteria, each at its stated tolerance.

The shipped configurations under ``configs/`` are run once per session and
their reports shared between criteria.  Every test prints one
``PASS/FAIL criterion N`` line; the lines are repeated in the terminal
summary.
"""
import json
import math

import numpy as np
import pytest

from conftest import config_path
from spde_lab import cli, oracle
from spde_lab.config import load, validate
from spde_lab.cylinder import TrigPolynomial
from spde_lab.drift import DriftSpec, yosida_drift
from spde_lab.model import SPDEModel
from spde_lab.runner import run_checks
from spde_lab.semigroup import InvariantConfig, SimConfig, estimate_pt_grid, sample_invariant
from spde_lab.spectrum import ModeSpectrum, build_example_dirichlet, q_infinity

pytestmark = pytest.mark.slow


def _run(name):
    ctx, reports = run_checks(validate(load(config_path(name))))
    return ctx, reports


@pytest.fixture(scope="module")
def ou_run():
    return _run("ou.toml")


@pytest.fixture(scope="module")
def gibbs_run():
    return _run("gibbs.toml")


@pytest.fixture(scope="module")
def cubic_cli(tmp_path_factory):
    """``run configs/cubic.toml`` through the CLI: threads 1, 1 and 3."""
    base = tmp_path_factory.mktemp("cubic")
    outs = []
    for i, threads in enumerate(["1", "1", "3"]):
        d = base / f"run{i}"
        code = cli.main(["run", config_path("cubic.toml"), "--seed", "7", "--threads",
                         threads, "-o", str(d), "-q"])
        outs.append((code, (d / "report.jsonl").read_bytes()))
    return outs


def _select(reports, name, label=None):
    out = [r for r in reports if r.check_name == name]
    if label is not None:
        out = [r for r in out if label(r.label)]
    assert out, f"no {name} reports"
    return out


def _all_pass(reps):
    return all(r.passed for r in reps)


def test_criterion_01_ou_oracle(criterion):
    spec = build_example_dirichlet(8, 1.0, 1.0)
    model = SPDEModel(spec)
    x = np.array([0.5, -0.3, 0.2, 0.0, 0.1, 0.0, -0.1, 0.05])
    h = lambda *v: list(v) + [0.0] * (8 - len(v))
    phis = [TrigPolynomial.sin(h(1)),
            TrigPolynomial.cos(h(1, 1)),
            TrigPolynomial([1.0, 0.5], ["sin", "cos"], [h(0, 2), h(1, 0, 1)], 8),
            TrigPolynomial([0.7], ["cos"], [h(2, 0, 0, 1)], 8),
            TrigPolynomial([1.0, -1.0], ["sin", "sin"], [h(1, -1), h(0, 0, 3)], 8)]
    worst_z, worst_se = 0.0, 0.0
    for t in (0.1, 1.0, 5.0):
        # F = 0: the step is the exact Gaussian transition, one step per path
        cfg = SimConfig(model, dt=t, seed=2024, stream=int(t * 10))
        ests = estimate_pt_grid(phis, x, [t], 100_000, cfg)[0]
        for phi, e in zip(phis, ests):
            exact = float(oracle.ou_exact(phi, x, t, spec))
            worst_se = max(worst_se, e.stderr)
            worst_z = max(worst_z, abs(e.mean - exact) / e.stderr)
    criterion(1, worst_z <= 3.0 and worst_se <= 1e-2,
              f"OU oracle, max |z| = {worst_z:.2f} (<= 3), max stderr = {worst_se:.2e} (<= 1e-2)")


def test_criterion_02_invariant_law_linear(criterion):
    spec = build_example_dirichlet(8, 1.0, 1.0)
    model = SPDEModel(spec, DriftSpec("linear_diagonal", m=-0.5))
    ens = sample_invariant(model, cfg=InvariantConfig(n_draws=20_000, seed=31))
    q = q_infinity(spec).q * spec.a / (spec.a + 0.5)
    worst = 0.0
    for k in range(8):
        x = ens.draws[:, k]
        est = ens.expect((x - x.mean()) ** 2)
        worst = max(worst, abs(est.mean - q[k]) / est.stderr)
    criterion(2, worst <= 4.0,
              f"linear invariant law, max |z| over 8 variances = {worst:.2f} (<= 4)")


def test_criterion_03_gibbs_moments(criterion, gibbs_run):
    reps = _select(gibbs_run[1], "invariant_law")
    orders = {r.label for r in reps}
    need = {f"x{m}^{p}" for m in (1, 2, 3) for p in (1, 2, 3, 4)}
    ok = need <= orders and _all_pass(reps) and all(r.n_sigma == 4 for r in reps)
    z = max(abs(r.lhs - r.rhs) / r.combined_err for r in reps)
    criterion(3, ok, f"Gibbs moments, 12 (mode, order) pairs, max |z| = {z:.2f} (<= 4)")


def test_criterion_04_poincare(criterion, ou_run, gibbs_run):
    ou = _select(ou_run[1], "poincare", lambda l: l.startswith("mc:"))
    gb = _select(gibbs_run[1], "poincare")
    wit = [r for r in ou if r.label == "mc:x1"][0]
    eq = abs(wit.lhs - wit.rhs) <= 3 * wit.combined_err
    ok = len(ou) == 6 and len(gb) == 6 and _all_pass(ou) and _all_pass(gb) and eq
    criterion(4, ok, f"Poincare 6+6 functions; witness |lhs - rhs| = "
                     f"{abs(wit.lhs - wit.rhs):.2e} <= 3 se = {3 * wit.combined_err:.2e}")


def test_criterion_05_logsob(criterion, ou_run, gibbs_run):
    ou = _select(ou_run[1], "logsob")
    gb = _select(gibbs_run[1], "logsob")
    ps = lambda reps: sorted(r.metadata["p"] for r in reps)
    ok = (ps(ou) == [1, 2, 4] and ps(gb) == [1, 2, 4] and _all_pass(ou + gb)
          and all(r.metadata["provenance"] == "quadrature" and r.tol <= 1e-6 for r in ou)
          and all(r.n_sigma == 3 for r in gb))
    criterion(5, ok, "log-Sobolev p in {1, 2, 4}: OU quadrature (1e-6), Gibbs MC (3 sigma)")


def test_criterion_06_hypercontractivity(criterion, ou_run, gibbs_run):
    ou = _select(ou_run[1], "hypercontractivity")
    gb = _select(gibbs_run[1], "hypercontractivity")
    ok = (len(ou) == 2 and len(gb) == 2 and _all_pass(ou + gb)
          and all(r.metadata["inner"] == "mehler" for r in ou)
          and all(r.metadata["inner"] == "nested" and "bias_budget" in r.metadata for r in gb))
    budget = max(r.metadata["bias_budget"] for r in gb)
    criterion(6, ok, f"hypercontractivity q=2, t in {{0.2, 1}}/zeta_alpha; Gibbs bias budget "
                     f"{budget:.1e}")


def test_criterion_07_ergodicity(criterion, ou_run, gibbs_run):
    ctx = ou_run[0]
    rate = _select(ou_run[1], "ergodicity", lambda l: l.endswith(":rate"))[0]
    fitted = rate.metadata["rate"]
    za = ctx.cert.zeta_alpha
    sharp = abs(fitted - za) <= 0.02 * za
    gb = _select(gibbs_run[1], "ergodicity", lambda l: ":t=" in l)
    ok = sharp and _all_pass(gb) and all(r.slack == 0.1 for r in gb)
    criterion(7, ok, f"ergodic rate {fitted:.5f} vs zeta_alpha {za:.5f} "
                     f"({abs(fitted / za - 1):.2%} <= 2%); Gibbs pointwise slack 0.1")


def test_criterion_08_resolvent(criterion, ou_run, gibbs_run):
    first = lambda l: l.endswith(":u") or l.endswith(":Du")
    ou = _select(ou_run[1], "resolvent_bounds", first)
    gb = _select(gibbs_run[1], "resolvent_bounds", first)
    second = _select(gibbs_run[1], "resolvent_bounds", lambda l: l.endswith(":D2u"))
    lams = {r.metadata["lam"] for r in ou + gb}
    ok = (lams == {0.5, 1.0, 2.0} and _all_pass(ou + gb + second)
          and all(r.slack == 0.5 for r in second))
    criterion(8, ok, f"resolvent bounds: {len(ou) + len(gb)} first-order, "
                     f"{len(second)} second-order (slack 0.5) reports")


def test_criterion_09_yosida(criterion, cubic_cli):
    recs = [json.loads(l) for l in cubic_cli[0][1].decode().splitlines()]
    yos = [r for r in recs if r["check_name"] == "yosida"]
    resid = [r for r in yos if r["label"].endswith(":residual")]
    fixture = float(yosida_drift(DriftSpec("cubic_diagonal", c=1.0),
                                 ModeSpectrum([1.0], [1.0], 0.0), 1.0, [2.0])[0])
    ok = (all(r["pass"] for r in yos) and {r["tol"] for r in resid} == {1e-10}
          and all(r["metadata"].get("n_pairs", 1000) >= 1000 for r in yos)
          and abs(fixture + 1.0) <= 1e-9)
    criterion(9, ok, f"Yosida (1yy)/(2yy)/(3yy) on 1000 pairs; scalar fixture {fixture:.12f}")


def test_criterion_10_kolmogorov_calculus(criterion, ou_run, gibbs_run):
    prod = _select(ou_run[1], "product_rule") + _select(gibbs_run[1], "product_rule")
    ibp_ou = _select(ou_run[1], "integration_by_parts")
    ibp_gb = _select(gibbs_run[1], "integration_by_parts", lambda l: not l.startswith("quad"))
    stat = _select(gibbs_run[1], "stationarity")
    ok = (all(r.label == "random[100]:max" and r.lhs <= 1e-10 for r in prod)
          and _all_pass(prod + ibp_ou + ibp_gb + stat)
          and all(r.metadata["provenance"] == "quadrature" and r.tol == 1e-6
                  for r in ibp_ou + stat)
          and all(r.n_sigma == 3 for r in ibp_gb))
    worst = max(r.lhs for r in prod)
    criterion(10, ok, f"product rule max residual {worst:.1e}; IBP OU 1e-6, Gibbs 3 sigma; "
                      f"stationarity 1e-6")


def test_criterion_11_pathwise_contraction(criterion, cubic_cli):
    recs = [json.loads(l) for l in cubic_cli[0][1].decode().splitlines()]
    con = [r for r in recs if r["check_name"] == "pathwise_contraction"]
    dts = sorted({r["metadata"]["dt"] for r in con})
    ok = (dts == [1e-3, 1e-2, 1e-1] and all(r["pass"] for r in con)
          and all(r["metadata"]["n_paths"] == 100 for r in con))
    req = max(r["metadata"]["C_required"] for r in con)
    criterion(11, ok, f"contraction with frozen C = {con[0]['metadata']['C']:g} "
                      f"(study requires C = {req:.2g}), 100 paths")


def test_criterion_12_moment_envelope(criterion, cubic_cli):
    recs = [json.loads(l) for l in cubic_cli[0][1].decode().splitlines()]
    env = [r for r in recs if r["check_name"] == "moment_bound" and "envelope" in r["label"]]
    ks = sorted(r["metadata"]["k"] for r in env)
    zeta = env[0]["metadata"]["zeta"]
    t_end = max(env[0]["metadata"]["times"])
    ok = (ks == [2.0, 4.0] and all(r["pass"] for r in env)
          and sorted(env[0]["metadata"]["x0_norms"]) == [0.0, 10.0]
          and t_end == pytest.approx(10.0 / zeta))
    desc = ", ".join(f"k={r['metadata']['k']:g}: gamma={r['metadata']['gamma']:.3g} "
                     f"beta={r['metadata']['beta']:.3g}" for r in env)
    criterion(12, ok, f"moment envelope feasible ({desc})")


def test_criterion_13_certification_gate(criterion, tmp_path, capsys):
    code = cli.main(["run", config_path("violation.toml"), "-o", str(tmp_path / "v")])
    err = capsys.readouterr().err
    ok = code == 2 and "zeta_alpha" in err and not (tmp_path / "v" / "report.jsonl").exists()
    criterion(13, ok, f"violation config exit {code}: {err.strip()}")


def test_criterion_14_determinism(criterion, cubic_cli):
    codes = [c for c, _ in cubic_cli]
    same = cubic_cli[0][1] == cubic_cli[1][1]
    threads = cubic_cli[0][1] == cubic_cli[2][1]
    criterion(14, codes == [0, 0, 0] and same and threads,
              f"report.jsonl identical across repeats ({same}) and thread counts 1/3 "
              f"({threads})")
