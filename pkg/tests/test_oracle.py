import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from spde_lab import oracle
from spde_lab.cylinder import Linear, Polynomial, TrigPolynomial, apply_kolmogorov
from spde_lab.drift import DriftSpec, PotentialSpec
from spde_lab.spectrum import CovarianceDiagonal, ModeSpectrum, q_infinity

SPEC3 = ModeSpectrum([0.7, 1.3, 2.1], [1.0, 0.6, 0.3], 0.5)


def test_ou_exact_examples():
    phi = TrigPolynomial([1.0, -0.3], ["sin", "cos"], [[1, 2, 0], [0, 1, 1]], 3)
    x = np.array([0.4, -1.0, 0.3])
    assert float(oracle.ou_exact(phi, x, 0.0, SPEC3)) == pytest.approx(float(phi.value(x)))
    assert float(oracle.ou_exact(TrigPolynomial.sin([1.0, 1.0, 1.0]), np.zeros(3), 0.8,
                                 SPEC3)) == 0.0
    unit = ModeSpectrum([1.0], [1.0], 0.0)
    v = float(oracle.ou_exact(TrigPolynomial.sin([1.0]), [math.pi], math.log(2), unit))
    assert v == pytest.approx(math.exp(-3 / 16), rel=1e-13)
    assert v == pytest.approx(0.829029, abs=1e-6)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.integers(0, 2 ** 32 - 1))
def test_ou_exact_semigroup_law(t, s, seed):
    r = np.random.default_rng(seed)
    spec = ModeSpectrum(r.uniform(0.2, 3, 3), r.uniform(0.1, 2, 3), float(r.uniform(0, 1)))
    h = r.integers(-3, 4, 3).astype(float)
    x = r.uniform(-2, 2, 3)
    for kind in ("sin", "cos"):
        phi = TrigPolynomial([1.0], [kind], [h], 3)
        # T(s) maps a single term to damp_s * term with frequency e^{sA} h
        damp_s = float(oracle.ou_exact(TrigPolynomial.cos(h), np.zeros(3), s, spec))
        inner = TrigPolynomial([damp_s], [kind], [np.exp(-spec.a * s) * h], 3)
        two = float(oracle.ou_exact(inner, x, t, spec))
        one = float(oracle.ou_exact(phi, x, t + s, spec))
        assert two == pytest.approx(one, abs=1e-12)


def test_ou_exact_gradient_matches_finite_differences():
    phi = TrigPolynomial([1.0, -0.3], ["sin", "cos"], [[1, 2, 0], [0, 1, 1]], 3)
    x = np.array([0.4, -1.0, 0.3])
    g = oracle.ou_exact_gradient(phi, x, 0.5, SPEC3)
    eps = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = eps
        fd = (oracle.ou_exact(phi, x + e, 0.5, SPEC3) - oracle.ou_exact(phi, x - e, 0.5, SPEC3))
        assert g[k] == pytest.approx(float(fd) / (2 * eps), abs=1e-8)


def test_ou_exact_resolvent_constant_and_sine():
    x = np.array([[0.4, -1.0, 0.3]])
    c = TrigPolynomial.const(2.0, 3)
    assert oracle.ou_exact_resolvent(c, 0.5, x, SPEC3)[0] == pytest.approx(4.0, rel=1e-10)
    phi = TrigPolynomial.sin([1.0, 0.0, 0.0])
    # single active mode and zero start: T(t) sin(x_1) = 0
    assert oracle.ou_exact_resolvent(phi, 1.0, np.zeros((1, 3)), SPEC3)[0] == pytest.approx(0.0)


def test_gibbs_reduces_to_gaussian():
    spec = ModeSpectrum([0.8, 1.5], [0.7, 0.2], 0.5)
    dens = oracle.gibbs_densities(spec, PotentialSpec())
    q = q_infinity(spec).q
    assert oracle.gibbs_moments(dens, [2, 0]) == pytest.approx(q[0], rel=1e-9)
    assert oracle.gibbs_moments(dens, [0, 4]) == pytest.approx(3 * q[1] ** 2, rel=1e-9)
    assert oracle.gibbs_moments(dens, [3, 0]) == 0.0
    assert oracle.gibbs_moments(dens, [1, 2]) == 0.0
    assert oracle.gibbs_moments(dens, []) == 1.0


def test_gibbs_quartic_dual_rule():
    d = oracle.GibbsDensity1D(a=1.0, q2a=1.0, c=1.0)  # u = x^4/4, a / lambda^{2 alpha} = 1
    v1 = d._quad(lambda x: x ** 2) / d.norm
    v2 = d._legendre(lambda x: x ** 2) / d._legendre(lambda x: np.ones_like(x))
    assert abs(v1 - v2) <= 1e-8
    # independent check on the whole line
    f = lambda x, p: x ** p * math.exp(-x * x - 0.5 * x ** 4)
    ref = integrate.quad(f, -np.inf, np.inf, args=(2,))[0] / integrate.quad(f, -np.inf, np.inf,
                                                                             args=(0,))[0]
    assert d.moment(2) == pytest.approx(ref, rel=1e-9)


def test_gibbs_fixture_moments(gibbs_spec, gibbs_drift):
    dens = oracle.gibbs_densities(gibbs_spec, gibbs_drift.potential)
    # mode 1: a = 1/2, lambda^{2 alpha} = 1, w = 1/2, c = 1 -> exp(-x^2 - x^4/2)
    f = lambda x, p: x ** p * math.exp(-x * x - 0.5 * x ** 4)
    z = integrate.quad(f, -np.inf, np.inf, args=(0,))[0]
    for p in (2, 4):
        ref = integrate.quad(f, -np.inf, np.inf, args=(p,))[0] / z
        assert dens[0].moment(p) == pytest.approx(ref, rel=1e-9)
    assert dens[0].moment(2) == pytest.approx(0.28960, abs=5e-6)
    assert dens[0].moment(4) == pytest.approx(0.21040, abs=5e-6)


def test_gibbs_density_validation():
    with pytest.raises(ValueError):
        oracle.GibbsDensity1D(a=-1.0, q2a=1.0)
    with pytest.raises(ValueError):
        oracle.GibbsDensity1D(a=1.0, q2a=1.0, c=-1.0)
    with pytest.raises(ValueError):
        oracle.GibbsDensity1D(a=1.0, q2a=1.0, w=-2.0)
    d = oracle.GibbsDensity1D(a=1.0, q2a=1.0)
    with pytest.raises(ValueError):
        d.moment(-1)


@pytest.mark.parametrize("eps", [0.0, 0.3])
def test_gibbs_stationarity_identity(gibbs_spec, eps):
    pot = PotentialSpec(0.5, 1.0, eps)
    d = DriftSpec("gradient", potential=pot)
    dens = oracle.gibbs_densities(gibbs_spec, pot)
    pts, w = oracle.gibbs_nodes(dens, [0, 1])
    for phi in [TrigPolynomial.cos([1.0, 1.0, 0, 0]), TrigPolynomial.sin([2.0, -1.0, 0, 0]),
                TrigPolynomial([1.0, 0.5], ["cos", "sin"], [[1, 0, 0, 0], [1, 2, 0, 0]], 4)]:
        assert abs(w @ apply_kolmogorov(phi, d, gibbs_spec, pts)) <= 1e-6


def test_gaussian_functional_examples():
    cov = CovarianceDiagonal(np.array([0.7, 0.2, 1.5]))
    assert oracle.gaussian_functional(cov, Polynomial([1.0], [[2, 0, 0]])) == pytest.approx(0.7)
    assert oracle.gaussian_functional(cov, TrigPolynomial.const(1.0, 3)) == pytest.approx(1.0)
    assert oracle.gaussian_functional(cov, Polynomial([1.0], [[0, 0, 4]])) == pytest.approx(
        3 * 1.5 ** 2)
    assert oracle.gaussian_moment(2.0, 6) == pytest.approx(15 * 8)
    assert oracle.gaussian_moment(2.0, 3) == 0.0


def test_gaussian_functional_against_sampling():
    r = np.random.default_rng(77)
    for _ in range(20):
        q = r.uniform(0.05, 2.0, 3)
        theta = r.uniform(-1, 1, 3)
        phi = [TrigPolynomial([1.0], ["cos"], [r.integers(-2, 3, 3)], 3),
               Linear(theta), Polynomial([1.0, 0.5], [[2, 1, 0], [0, 0, 2]])][r.integers(3)]
        exact = oracle.gaussian_functional(CovarianceDiagonal(q), phi)
        v = phi.value(np.sqrt(q) * r.standard_normal((20000, 3)))
        assert abs(v.mean() - exact) <= 4 * v.std() / math.sqrt(v.size) + 1e-12


def test_ou_invariant_expect_trig():
    phi = TrigPolynomial([1.0, 2.0], ["cos", "cos"], [[1, 0, 0], [0, 0, 0]], 3)
    q = q_infinity(SPEC3).q
    assert oracle.ou_invariant_expect_trig(phi, SPEC3) == pytest.approx(math.exp(-q[0] / 2) + 2)
