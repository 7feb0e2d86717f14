import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from tempered.errors import AliasingError, CapacityError, InvalidArgumentError
from tempered.hermite import (
    MAX_RULE_ORDER, basis_gram, default_rule_order, gauss_hermite_rule, hermite_eval,
    hermite_eval_multi, hermite_reconstruct, hermite_transform, quadrature_nodes,
)
from tempered.seqspace import TruncatedSeq, multi_indices

mpmath.mp.dps = 40


def h_oracle(n, x):
    """Rodrigues-normalized physicists' polynomial, evaluated in high precision."""
    x = mpmath.mpf(x)
    norm = mpmath.sqrt(mpmath.power(2, n) * mpmath.factorial(n) * mpmath.sqrt(mpmath.pi))
    return mpmath.hermite(n, x) * mpmath.exp(-x * x / 2) / norm


@pytest.mark.parametrize("n", [0, 1, 2, 5, 10, 17, 30])
def test_hermite_eval_matches_mpmath(n):
    xs = np.linspace(-5, 5, 41)
    got = hermite_eval(n, xs)
    want = np.array([float(h_oracle(n, x)) for x in xs])
    assert np.allclose(got, want, rtol=1e-11, atol=1e-14)


def test_hermite_eval_scalar_and_known_values():
    assert hermite_eval(0, 0.0) == pytest.approx(math.pi ** -0.25, rel=1e-15)
    assert hermite_eval(1, 1.0) == pytest.approx(math.sqrt(2) * math.pi ** -0.25 * math.exp(-0.5), rel=1e-14)
    assert isinstance(hermite_eval(3, 0.2), float)


@pytest.mark.parametrize("n,x", [(200, 3.0), (400, 25.0), (500, 0.7), (300, 40.0)])
def test_large_order_is_stable(n, x):
    got = hermite_eval(n, x)
    want = float(h_oracle(n, x))
    assert math.isfinite(got)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-300)


def test_hermite_eval_rejects_negative_order():
    with pytest.raises(InvalidArgumentError):
        hermite_eval(-1, 0.0)


def test_eval_multi_is_tensor_product():
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    got = hermite_eval_multi((2, 3), x)
    want = hermite_eval(2, x[:, 0]) * hermite_eval(3, x[:, 1])
    assert np.allclose(got, want, rtol=1e-14)
    assert hermite_eval_multi((1, 1, 0), np.array([0.1, 0.2, 0.3])) == pytest.approx(
        hermite_eval(1, 0.1) * hermite_eval(1, 0.2) * hermite_eval(0, 0.3))


@pytest.mark.parametrize("order", [1, 2, 5, 20, 40])
def test_rule_matches_numpy_hermgauss(order):
    x_ref, w_ref = np.polynomial.hermite.hermgauss(order)
    rule = gauss_hermite_rule(order)
    assert np.allclose(rule.nodes, x_ref, atol=1e-13)
    assert np.allclose(rule.weights, w_ref, rtol=1e-11, atol=1e-300)


@pytest.mark.parametrize("order", [16, 64, 200, 512])
def test_rule_invariants(order):
    rule = gauss_hermite_rule(order)
    assert np.all(np.diff(rule.nodes) > 0)
    assert np.allclose(rule.nodes, -rule.nodes[::-1], atol=0)
    assert math.fsum(rule.weights) / math.sqrt(math.pi) == pytest.approx(1.0, rel=1e-13)
    assert np.all(rule.scaled_weights > 0)
    assert np.all(rule.weights >= 0)


@pytest.mark.parametrize("k", [0, 1, 5, 15])
def test_rule_exact_on_even_moments(k):
    rule = gauss_hermite_rule(16)
    assert rule.integrate(lambda x: x ** (2 * k)) == pytest.approx(math.gamma(k + 0.5), rel=1e-12)


def test_rule_caps():
    with pytest.raises(CapacityError):
        gauss_hermite_rule(MAX_RULE_ORDER + 1)
    with pytest.raises(InvalidArgumentError):
        gauss_hermite_rule(0)


@pytest.mark.parametrize("order,nmax,tol", [(64, 20, 1e-12), (128, 100, 1e-12), (512, 400, 1e-12)])
def test_basis_orthonormality(order, nmax, tol):
    g = basis_gram(gauss_hermite_rule(order), nmax)
    assert np.max(np.abs(g - np.eye(nmax + 1))) < tol


def test_transform_of_basis_functions_is_unit_vector():
    for n in (0, 3, 7):
        a = hermite_transform(lambda x: hermite_eval(n, x[:, 0]), 10)
        assert np.allclose(a.values, TruncatedSeq.unit(n, 10).values, atol=1e-13)


def test_transform_matches_quadrature_oracle():
    f = lambda t: mpmath.cos(t) * mpmath.exp(-t * t / 2)
    a = hermite_transform(lambda x: np.cos(x[:, 0]) * np.exp(-x[:, 0] ** 2 / 2), 12,
                          gauss_hermite_rule(80))
    for n in (0, 2, 4, 9, 12):
        want = mpmath.quad(lambda t: f(t) * h_oracle(n, t), [-mpmath.inf, 0, mpmath.inf])
        assert a[n] == pytest.approx(float(want), abs=1e-12)


def test_gaussian_coefficient_closed_form():
    a = hermite_transform(lambda x: np.exp(-0.5 * np.sum(x ** 2, axis=1)), 4, dim=2)
    # e^{-|x|^2/2} = pi^{d/4} h_0 (x)
    assert a[(0, 0)] == pytest.approx(math.pi ** 0.5, rel=1e-14)
    assert np.allclose(a.values[1:], 0, atol=1e-14)


def test_aliasing_and_capacity_errors():
    with pytest.raises(AliasingError):
        hermite_transform(lambda x: x[:, 0], 10, gauss_hermite_rule(10))
    with pytest.raises(CapacityError):
        hermite_transform(lambda x: x[:, 0], 2, dim=4)
    with pytest.raises(InvalidArgumentError):
        hermite_transform(lambda x: np.full(x.shape[0], np.nan), 2)


def test_quadrature_grid_layout_first_axis_slowest():
    rule = gauss_hermite_rule(3)
    grid = quadrature_nodes(rule, 2)
    assert grid.shape == (9, 2)
    assert np.all(grid[:3, 0] == rule.nodes[0])
    assert np.all(grid[:3, 1] == rule.nodes)


def test_default_rule_order():
    assert default_rule_order(10) == 36


@given(st.integers(1, 3), st.integers(0, 5), st.integers(0, 2 ** 32 - 1))
def test_reconstruct_then_transform_is_identity(dim, m, seed):
    if dim == 3:
        m = min(m, 3)
    rng = np.random.default_rng(seed)
    a = TruncatedSeq(dim, m, rng.standard_normal((m + 1) ** dim))
    back = hermite_transform(lambda x: hermite_reconstruct(a, x), m, dim=dim)
    assert np.max(np.abs(back.values - a.values)) < 1e-10


def test_reconstruct_single_point_returns_float():
    a = TruncatedSeq(2, 1, [1.0, 0.0, 0.0, 2.0])
    v = hermite_reconstruct(a, [0.4, -0.3])
    assert isinstance(v, float)
    want = hermite_eval(0, 0.4) * hermite_eval(0, -0.3) + 2 * hermite_eval(1, 0.4) * hermite_eval(1, -0.3)
    assert v == pytest.approx(want, rel=1e-14)


def test_reconstruct_layout_matches_multi_indices():
    a = TruncatedSeq(2, 2, np.arange(9.0))
    x = np.array([[0.1, 0.7]])
    want = sum(v * hermite_eval_multi(tuple(n), x[0]) for v, n in zip(a.values, multi_indices(2, 2)))
    assert hermite_reconstruct(a, x)[0] == pytest.approx(want, rel=1e-13)
