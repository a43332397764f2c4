import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spde_lab.drift import (CertificationFailed, DriftSpec, PotentialSpec, QuadratureSpec,
                            certify_dissipativity, compute_certificate, eval_drift,
                            eval_drift_derivative, eval_drift_jacobian_action,
                            mehler_smoothed_drift, one_sided_constant, yosida_drift,
                            yosida_resolvent)
from spde_lab.spectrum import (CovarianceDiagonal, ModeSpectrum, build_example_dirichlet,
                               halpha_inner, q_infinity)

SCALAR = ModeSpectrum([1.0], [1.0], 0.0)
CUBIC = DriftSpec("cubic_diagonal", c=1.0)


def drifts():
    return st.one_of(
        st.just(DriftSpec("zero")),
        st.floats(-2.0, 0.3).map(lambda m: DriftSpec("linear_diagonal", m=m)),
        st.floats(0.0, 3.0).map(lambda c: DriftSpec("cubic_diagonal", c=c)),
        st.builds(lambda w, c, e: DriftSpec("gradient", potential=PotentialSpec(w, c, e)),
                  st.floats(-0.2, 2.0), st.floats(0.0, 2.0), st.floats(-0.3, 0.3)),
    )


def spec4(alpha=0.5):
    return ModeSpectrum([0.5, 1.0, 1.5, 2.0], [1.0, 0.5, 1 / 3, 0.25], alpha)


def test_eval_drift_examples():
    spec = spec4()
    assert np.all(eval_drift(DriftSpec("zero"), spec, np.ones(4)) == 0)
    assert eval_drift(CUBIC, SCALAR, [2.0])[0] == pytest.approx(-8.0)
    quad = DriftSpec("gradient", potential=PotentialSpec(w=3.0))
    s = ModeSpectrum([1.0], [0.25], 0.5)  # lambda^{2 alpha} = 1/4
    assert eval_drift(quad, s, [2.0])[0] == pytest.approx(-1.5)
    with pytest.raises(ValueError):
        eval_drift(CUBIC, spec, np.ones(3))


def test_jacobian_examples():
    assert np.all(eval_drift_jacobian_action(DriftSpec("zero"), SCALAR, [1.0], [1.0]) == 0)
    assert eval_drift_jacobian_action(CUBIC, SCALAR, [1.0], [1.0])[0] == pytest.approx(-3.0)


@given(drifts(), st.integers(0, 2 ** 32 - 1))
def test_jacobian_finite_differences(d, seed):
    spec = spec4()
    r = np.random.default_rng(seed)
    x, h = r.uniform(-3, 3, 4), r.standard_normal(4)
    eps = 1e-5
    fd = (eval_drift(d, spec, x + eps * h) - eval_drift(d, spec, x - eps * h)) / (2 * eps)
    err = np.linalg.norm(eval_drift_jacobian_action(d, spec, x, h) - fd)
    assert err <= 1e-6 * (1 + np.linalg.norm(x) ** d.growth_degree)


def test_certificate_examples():
    c = certify_dissipativity(DriftSpec("zero"), build_example_dirichlet(6, 0.7, 0.0))
    assert c.zeta1 == c.zeta == c.zeta_alpha == pytest.approx(0.5)
    convex = DriftSpec("gradient", potential=PotentialSpec(w=0.3, c=1.0))
    c = certify_dissipativity(convex, spec4())
    assert c.zeta2 == 0.0 and c.zeta == c.zeta1


@pytest.mark.parametrize("alpha,beta", [(0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.25, 2.0)])
def test_lipschitz_regime(alpha, beta):
    spec = build_example_dirichlet(8, alpha, beta)

    def certifies(L):
        d = DriftSpec("gradient", potential=PotentialSpec(eps=L))
        try:
            certify_dissipativity(d, spec)
            return True
        except CertificationFailed as exc:
            assert "zeta_alpha" in exc.constants
            return False

    # the stated bound is sufficient ...
    bound = 0.5 * math.pi ** (2 * alpha + beta)
    assert certifies(0.999 * bound)
    # ... and the diagonal certificate is exact: F = Q^{2 alpha} G with
    # |G'| <= L gives zeta_alpha = pi^{2 beta}/2 - pi^{-4 alpha} L
    exact = 0.5 * math.pi ** (2 * beta + 4 * alpha)
    assert certifies(0.999 * exact)
    assert not certifies(1.001 * exact)
    if alpha == beta == 0.0:
        assert bound == exact


def test_certification_failure_names_constants():
    d = DriftSpec("linear_diagonal", m=1.0)
    with pytest.raises(CertificationFailed) as info:
        certify_dissipativity(d, SCALAR)
    assert info.value.constants == ["zeta", "zeta_alpha"]
    assert "zeta_alpha" in str(info.value)


def test_yosida_resolvent_examples():
    x = np.array([0.3, -1.2, 2.0, 5.0])
    lin = DriftSpec("linear_diagonal", m=0.4)
    assert np.allclose(yosida_resolvent(lin, spec4(), 0.4, 0.7, x), x, atol=1e-14)
    assert yosida_resolvent(CUBIC, SCALAR, 0.0, 1.0, [2.0])[0] == pytest.approx(1.0, abs=1e-12)
    # G(y) = -c y: x_delta = x / (1 + delta c)
    c, delta = 0.8, 0.5
    damp = DriftSpec("linear_diagonal", m=-c)
    assert np.allclose(yosida_resolvent(damp, spec4(), 0.0, delta, x), x / (1 + delta * c))


def test_yosida_drift_examples():
    assert yosida_drift(CUBIC, SCALAR, 1.0, [2.0])[0] == pytest.approx(-1.0, abs=1e-9)
    lin = DriftSpec("linear_diagonal", m=0.3)
    x = np.array([1.0, -2.0, 0.5, 3.0])
    assert np.allclose(yosida_drift(lin, spec4(), 0.2, x), eval_drift(lin, spec4(), x))


@pytest.mark.parametrize("d", [CUBIC, DriftSpec("gradient", potential=PotentialSpec(0.5, 1.0, 0.3))])
def test_yosida_envelope_as_delta_shrinks(d):
    spec = spec4()
    z2 = one_sided_constant(d, spec)
    x = np.random.default_rng(3).uniform(-3, 3, (200, 4))
    G = np.linalg.norm(eval_drift(d, spec, x) - z2 * x, axis=1)
    prev = np.inf
    for delta in [1.0, 0.1, 0.01, 0.001]:
        err = np.linalg.norm(yosida_drift(d, spec, delta, x) - eval_drift(d, spec, x), axis=1)
        assert np.all(err <= (2 + z2 * delta) * G + 1e-10)
        assert err.max() < prev
        prev = err.max()


@given(drifts(), st.floats(1e-3, 10.0), st.integers(0, 2 ** 32 - 1))
def test_yosida_properties(d, delta, seed):
    spec = spec4()
    z2 = one_sided_constant(d, spec)
    r = np.random.default_rng(seed)
    x, z = r.uniform(-4, 4, (2, 50, 4))
    xd = yosida_resolvent(d, spec, z2, delta, x)
    zd = yosida_resolvent(d, spec, z2, delta, z)

    def G(y):
        return eval_drift(d, spec, y) - z2 * y

    res = np.linalg.norm(xd - delta * G(xd) - x, axis=1)
    assert np.all(res <= 1e-10 * (1 + np.linalg.norm(x, axis=1)))
    dG = G(xd) - G(zd)
    dx = x - z
    assert np.all(np.linalg.norm(dG, axis=1) <= 2 / delta * np.linalg.norm(dx, axis=1) + 1e-8)
    assert np.all(np.sum(dG * dx, axis=1) <= 1e-8)
    assert np.all(np.linalg.norm(G(xd), axis=1) <= np.linalg.norm(G(x), axis=1) + 1e-8)
    # one-sided constant is inherited by F_delta
    dF = yosida_drift(d, spec, delta, x, z2) - yosida_drift(d, spec, delta, z, z2)
    assert np.all(np.sum(dF * dx, axis=1) <= z2 * np.sum(dx * dx, axis=1) + 1e-8)


@given(drifts(), st.integers(0, 2 ** 32 - 1))
def test_growth_and_one_sided_bounds(d, seed):
    spec = spec4()
    r = np.random.default_rng(seed)
    x, y = r.uniform(-5, 5, (2, 1000, 4))
    C, m = d.growth_constant(spec), d.growth_degree
    F = eval_drift(d, spec, x)
    assert np.all(np.linalg.norm(F, axis=1) <= C * (1 + np.linalg.norm(x, axis=1) ** m) + 1e-12)
    z2 = one_sided_constant(d, spec)
    dF = F - eval_drift(d, spec, y)
    dx = x - y
    assert np.all(np.sum(dF * dx, axis=1) <= z2 * np.sum(dx * dx, axis=1) + 1e-10)


@given(drifts(), st.floats(0.0, 1.5), st.integers(0, 2 ** 32 - 1))
def test_certificate_bounds_halpha_form(d, alpha, seed):
    spec = spec4(alpha)
    cert = compute_certificate(d, spec)
    r = np.random.default_rng(seed)
    for _ in range(1000 // 50):
        x, h = r.uniform(-4, 4, 4), r.standard_normal(4)
        Ah = -spec.a * h + eval_drift_derivative(d, spec, x) * h
        lhs = halpha_inner(spec, Ah, h)
        assert lhs <= -cert.zeta_alpha * halpha_inner(spec, h, h) + 1e-10 * (1 + abs(lhs))


def test_mehler_smoothing_examples():
    spec = spec4()
    B = CovarianceDiagonal(np.ones(4))
    x = np.array([0.3, -1.0, 2.0, 0.5])
    zero = mehler_smoothed_drift(DriftSpec("zero"), spec, 0.1, 0.2, B, x)
    assert np.all(zero.value == 0)
    s = 0.3
    lin = DriftSpec("linear_diagonal", m=1.0)
    v = mehler_smoothed_drift(lin, SCALAR, 0.5, s, CovarianceDiagonal(np.ones(1)), [0.7],
                              zeta2=1.0)
    assert v.value[0] == pytest.approx(math.exp(-s / 2) * 0.7, rel=1e-12)
    mc = mehler_smoothed_drift(CUBIC, spec, 0.1, 0.2, B, x, QuadratureSpec("mc", n_mc=20000))
    gh = mehler_smoothed_drift(CUBIC, spec, 0.1, 0.2, B, x)
    assert np.all(np.abs(mc.value - gh.value) <= 4 * mc.error + gh.error)
    with pytest.raises(ValueError):
        QuadratureSpec("simpson")


def test_mehler_smoothing_keeps_one_sided_constant():
    d = DriftSpec("gradient", potential=PotentialSpec(0.5, 1.0, 0.4))
    spec = spec4()
    B = q_infinity(spec)
    z2 = one_sided_constant(d, spec)
    r = np.random.default_rng(1)
    for _ in range(30):
        x, z = r.uniform(-3, 3, (2, 4))
        fx = mehler_smoothed_drift(d, spec, 0.1, 0.05, B, x).value
        fz = mehler_smoothed_drift(d, spec, 0.1, 0.05, B, z).value
        assert (fx - fz) @ (x - z) <= z2 * (x - z) @ (x - z) + 1e-8


def test_regularization_converges_on_ensemble(cubic_model):
    from spde_lab.semigroup import InvariantConfig, sample_invariant

    spec = cubic_model.spec
    ens = sample_invariant(cubic_model, cfg=InvariantConfig(n_draws=300, dt=2e-3, seed=4))
    X = ens.draws
    F = eval_drift(CUBIC, spec, X)
    B = CovarianceDiagonal(np.ones(spec.n_modes))
    dists = []
    for level in [0.1, 0.01, 0.001]:
        Fs = np.array([mehler_smoothed_drift(CUBIC, spec, level, level, B, x).value for x in X])
        dists.append(math.sqrt(np.mean(np.sum((Fs - F) ** 2, axis=1))))
    assert dists[0] > dists[1] > dists[2]
    assert dists[2] < 1e-2
