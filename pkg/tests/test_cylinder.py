import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spde_lab import cylinder as cyl
from spde_lab.cylinder import (Compose, Constant, ExpLinear, Linear, Polynomial, Sum,
                               TrigPolynomial, apply_kolmogorov, from_declaration, gradient,
                               halpha_grad_sq, halpha_gradient, hessian_trace_qalpha, product)
from spde_lab.drift import DriftSpec, PotentialSpec
from spde_lab.oracle import ou_exact
from spde_lab.spectrum import ModeSpectrum

N = 3
SPEC = ModeSpectrum([0.7, 1.3, 2.1], [1.0, 0.6, 0.3], 0.5)
UNIT = ModeSpectrum([1.0], [1.0], 0.0)


def e(k, n=N):
    v = np.zeros(n)
    v[k] = 1.0
    return v


@st.composite
def trig_polys(draw, n=N, max_terms=3, max_freq=3):
    k = draw(st.integers(1, max_terms))
    coefs = draw(st.lists(st.floats(-2, 2), min_size=k, max_size=k))
    kinds = draw(st.lists(st.sampled_from(["sin", "cos"]), min_size=k, max_size=k))
    freqs = draw(st.lists(st.lists(st.integers(-max_freq, max_freq), min_size=n, max_size=n),
                          min_size=k, max_size=k))
    return TrigPolynomial(coefs, kinds, np.array(freqs, float), n)


@st.composite
def cylinder_functions(draw, n=N):
    theta = np.array(draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n)))
    kind = draw(st.sampled_from(["trig", "linear", "poly", "exp", "clamp", "square", "sum"]))
    if kind == "trig":
        return draw(trig_polys(n))
    if kind == "linear":
        return Linear(theta, draw(st.floats(-1, 1)))
    if kind == "poly":
        exps = [draw(st.lists(st.integers(0, 3), min_size=n, max_size=n)) for _ in range(2)]
        return Polynomial(draw(st.lists(st.floats(-1, 1), min_size=2, max_size=2)), exps)
    if kind == "exp":
        return ExpLinear(theta, draw(st.floats(-1, 1)), draw(st.floats(0.1, 2)))
    if kind == "clamp":
        return Compose("clamp", Linear(theta), L=draw(st.floats(0.2, 3)))
    if kind == "square":
        return Compose("square", draw(trig_polys(n)))
    return Sum([Linear(theta), draw(trig_polys(n))], [0.5, 2.0])


def test_eval_examples():
    h = np.array([1.0, -2.0, 0.5])
    assert cyl.eval(TrigPolynomial.sin(h), np.zeros(N)) == 0.0
    assert cyl.eval(TrigPolynomial.cos(h), np.zeros(N)) == 1.0
    x = np.array([math.pi / 2, 0.3, -1.0])
    assert cyl.eval(TrigPolynomial.sin(e(0)), x) == pytest.approx(1.0)


def test_gradient_examples():
    x = np.array([0.4, -0.2, 1.1])
    c = TrigPolynomial.const(2.5, N)
    assert np.all(gradient(c, x) == 0)
    assert np.all(halpha_gradient(c, SPEC, x).coords == 0)
    h = np.array([1.0, 2.0, -1.0])
    assert np.allclose(gradient(TrigPolynomial.sin(h), x), math.cos(x @ h) * h)
    s = ModeSpectrum([1.0], [0.25], 0.5)
    lin = Linear([1.0])
    assert np.allclose(halpha_gradient(lin, s, [0.3]).coords, [0.25])
    assert halpha_grad_sq(lin, s, [0.3]) == pytest.approx(0.25)


def test_kolmogorov_examples():
    x = np.array([0.4, -0.2, 1.1])
    d = DriftSpec("gradient", potential=PotentialSpec(0.5, 1.0))
    assert apply_kolmogorov(TrigPolynomial.const(3.0, N), d, SPEC, x) == 0.0
    assert apply_kolmogorov(TrigPolynomial.sin([1.0]), None, UNIT, [0.0]) == pytest.approx(0.0)
    assert apply_kolmogorov(TrigPolynomial.cos([1.0]), None, UNIT, [0.0]) == pytest.approx(-0.5)


def test_hessian_trace_examples():
    assert hessian_trace_qalpha(Linear([1.0, 2.0, 3.0]), SPEC, np.ones(3)) == 0.0
    s = ModeSpectrum([1.0], [3.0], 0.5)
    assert hessian_trace_qalpha(Polynomial([1.0], [[2]]), s, [0.7]) == pytest.approx(6.0)
    assert hessian_trace_qalpha(TrigPolynomial.sin([1.0]), UNIT, [math.pi / 2]) == pytest.approx(-1.0)


def test_product_examples():
    phi = TrigPolynomial([1.0, -0.5], ["sin", "cos"], [[1, 2, 0], [0, 1, 1]], N)
    assert product(phi, TrigPolynomial.const(1.0, N)) == phi
    u = np.array([1.0, 0.0, 2.0])
    sc = product(TrigPolynomial.sin(u), TrigPolynomial.cos(u))
    assert sc == TrigPolynomial([0.5], ["sin"], [2 * u], N)


def test_canonical_form():
    a = TrigPolynomial([1.0, 2.0], ["cos", "cos"], [[1, -1, 0], [-1, 1, 0]], N)
    assert a.n_terms == 1 and a == TrigPolynomial([3.0], ["cos"], [[1, -1, 0]], N)
    b = TrigPolynomial([1.0], ["sin"], [[-1, 0, 0]], N)
    assert b == TrigPolynomial([-1.0], ["sin"], [[1, 0, 0]], N)
    assert TrigPolynomial([1.0], ["sin"], [[0, 0, 0]], N).n_terms == 0
    with pytest.raises(ValueError):
        TrigPolynomial([1.0], ["tan"], [[1, 0, 0]], N)


@given(trig_polys(), trig_polys(), st.integers(0, 2 ** 32 - 1))
def test_product_pointwise(phi, psi, seed):
    X = np.random.default_rng(seed).uniform(-3, 3, (100, N))
    assert np.allclose(product(phi, psi).value(X), phi.value(X) * psi.value(X), atol=1e-12,
                       rtol=0)


@given(cylinder_functions(), st.integers(0, 2 ** 32 - 1))
def test_derivatives_match_finite_differences(phi, seed):
    x = np.random.default_rng(seed).uniform(-1.5, 1.5, N)
    eps = 1e-5
    g, H = phi.gradient(x), phi.hessian(x)
    for i in range(N):
        xp, xm = x + eps * e(i), x - eps * e(i)
        fd = (phi.value(xp) - phi.value(xm)) / (2 * eps)
        assert abs(g[i] - fd) <= 1e-6 * (1 + abs(phi.value(x)))
        fdH = (phi.gradient(xp) - phi.gradient(xm)) / (2 * eps)
        assert np.all(np.abs(H[i] - fdH) <= 1e-6 * (1 + abs(phi.value(x))))


@given(trig_polys(), trig_polys(), st.sampled_from(["zero", "cubic", "gradient"]),
       st.integers(0, 2 ** 32 - 1))
def test_product_rule_identity(phi, psi, variant, seed):
    d = {"zero": DriftSpec("zero"), "cubic": DriftSpec("cubic_diagonal", c=1.0),
         "gradient": DriftSpec("gradient", potential=PotentialSpec(0.5, 1.0, 0.2))}[variant]
    X = np.random.default_rng(seed).uniform(-2, 2, (100, N))
    lhs = apply_kolmogorov(product(phi, psi), d, SPEC, X)
    rhs = (phi.value(X) * apply_kolmogorov(psi, d, SPEC, X)
           + psi.value(X) * apply_kolmogorov(phi, d, SPEC, X)
           + np.sum(SPEC.q2a * phi.gradient(X) * psi.gradient(X), axis=1))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


@given(trig_polys(max_freq=2), st.integers(0, 2 ** 32 - 1))
def test_generator_matches_ou_time_derivative(phi, seed):
    x = np.random.default_rng(seed).uniform(-2, 2, N)
    h = 2.5e-4  # O(h^4) truncation stays well below the tolerance
    f = [float(ou_exact(phi, x, k * h, SPEC)) for k in range(5)]
    deriv = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    assert apply_kolmogorov(phi, None, SPEC, x) == pytest.approx(deriv, abs=1e-8)


@given(cylinder_functions(), st.integers(0, 2 ** 32 - 1))
def test_halpha_chain(phi, seed):
    x = np.random.default_rng(seed).uniform(-2, 2, N)
    assert np.array_equal(halpha_gradient(phi, SPEC, x).coords, SPEC.q2a * phi.gradient(x))


def test_from_declaration_forms():
    n = 4
    phi = from_declaration({"trig": [[1.0, "sin", [1, 0]], [2.0, "cos", {"3": 1}]]}, n)
    assert phi == TrigPolynomial([1.0, 2.0], ["sin", "cos"], [[1, 0, 0, 0], [0, 0, 1, 0]], n)
    assert isinstance(from_declaration({"const": 2.0}, n), Constant)
    lin = from_declaration({"linear": [1.0, 2.0], "const": 1.0}, n)
    assert lin.value(np.ones(n)) == pytest.approx(4.0)
    assert list(lin.active) == [0, 1]
    comp = from_declaration({"compose": "clamp", "inner": {"linear": [1.0]},
                             "params": {"L": 0.5}}, n)
    assert abs(comp.value(np.full(n, 100.0))) <= 0.5
    s = from_declaration({"sum": [{"const": 1.0}, {"linear": [0, 1]}], "weights": [2, 3]}, n)
    assert s.value(np.ones(n)) == pytest.approx(5.0)
    for bad in [{"trig": [[1.0, "sin", [1]]], "const": 1.0}, {"spline": 1}, [1, 2],
                {"linear": [1, 2, 3, 4, 5]}]:
        with pytest.raises(ValueError):
            from_declaration(bad, n)
