import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from trispline import bernstein
from trispline.exceptions import MeshError, ValidationError

TRI = np.array([[0.1, -0.2], [1.3, 0.15], [0.4, 0.9]])


def _area(V):
    return 0.5 * abs((V[1, 0] - V[0, 0]) * (V[2, 1] - V[0, 1]) - (V[1, 1] - V[0, 1]) * (V[2, 0] - V[0, 0]))


def _to_cart(V, b):
    return b @ V


def _bary(V, pts):
    M = np.vstack([V.T, np.ones(3)])
    return np.linalg.solve(M, np.vstack([np.atleast_2d(pts).T, np.ones(len(np.atleast_2d(pts)))])).T


bary_st = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)).filter(lambda t: sum(t) > 1e-3).map(
    lambda t: np.array(t) / sum(t)
)


def test_ordering_and_index_of():
    idx = bernstein.indices(2)
    assert idx.tolist() == [[2, 0, 0], [1, 1, 0], [1, 0, 1], [0, 2, 0], [0, 1, 1], [0, 0, 2]]
    for d in range(7):
        for m, (i, j, k) in enumerate(bernstein.indices(d)):
            assert bernstein.index_of(d, i, j, k) == m
        assert len(bernstein.indices(d)) == bernstein.n_basis(d)
    with pytest.raises(ValidationError):
        bernstein.index_of(2, 1, 1, 1)


def test_vertex_values_and_hand_value():
    for d in range(6):
        v = bernstein.eval_basis(d, [1.0, 0.0, 0.0])
        assert v[0] == 1.0 and np.all(v[1:] == 0.0)
    v = bernstein.eval_basis(2, [1 / 3, 1 / 3, 1 / 3])
    assert v[bernstein.index_of(2, 1, 1, 0)] == pytest.approx(2 / 9, abs=1e-15)
    b = np.array([0.2, 0.3, 0.5])
    assert np.allclose(bernstein.eval_basis(1, b), b)


@settings(max_examples=60, deadline=None)
@given(d=st.integers(0, 8), b=bary_st)
def test_partition_of_unity_property(d, b):
    v = bernstein.eval_basis(d, b)
    assert abs(v.sum() - 1.0) < 1e-12
    assert np.all(v >= 0) and np.all(v <= 1)


def test_invalid_barycentric():
    with pytest.raises(ValidationError):
        bernstein.eval_basis(2, [0.5, 0.5, 0.5])
    with pytest.raises(ValidationError):
        bernstein.eval_basis(2, [1.1, -0.1, 0.0])
    with pytest.raises(ValidationError):
        bernstein.eval_derivatives(3, TRI, [1, 0, 0], (2, 1))


def test_linear_derivative_by_hand():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    # basis (b1, b2, b3) = (1 - z1 - z2, z1, z2)
    assert np.allclose(bernstein.eval_derivatives(1, V, [0.2, 0.3, 0.5], (1, 0)), [-1, 1, 0])
    assert np.allclose(bernstein.eval_derivatives(1, V, [0.2, 0.3, 0.5], (0, 1)), [-1, 0, 1])
    assert np.all(bernstein.eval_derivatives(0, V, [0.2, 0.3, 0.5], (1, 0)) == 0)
    assert np.all(bernstein.eval_derivatives(1, V, [0.2, 0.3, 0.5], (1, 1)) == 0)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_second_derivatives_of_partition_vanish(d):
    b = np.random.default_rng(d).dirichlet(np.ones(3), size=20)
    for order in [(2, 0), (1, 1), (0, 2), (1, 0)]:
        assert np.abs(bernstein.eval_derivatives(d, TRI, b, order).sum(axis=1)).max() < 1e-10


@pytest.mark.parametrize("d", [1, 3, 5, 7])
def test_derivatives_match_finite_differences(d):
    rng = np.random.default_rng(d)
    b = rng.dirichlet(np.ones(3) * 3, size=25)
    z = _to_cart(TRI, b)
    h = 1e-5
    for axis, order in ((0, (1, 0)), (1, (0, 1))):
        e = np.zeros(2)
        e[axis] = h
        fd = (bernstein.eval_basis(d, _bary(TRI, z + e)) - bernstein.eval_basis(d, _bary(TRI, z - e))) / (2 * h)
        assert np.abs(fd - bernstein.eval_derivatives(d, TRI, b, order)).max() < 1e-6
        # second derivatives from differences of the analytic first derivatives
        for order2, first in (((2, 0), (1, 0)), ((1, 1), (0, 1))):
            if axis != 0:
                continue
            fd2 = (
                bernstein.eval_derivatives(d, TRI, _bary(TRI, z + e), first)
                - bernstein.eval_derivatives(d, TRI, _bary(TRI, z - e), first)
            ) / (2 * h)
            assert np.abs(fd2 - bernstein.eval_derivatives(d, TRI, b, order2)).max() < 1e-5 * max(1, d**2)


@pytest.mark.parametrize("deg", range(0, 13))
def test_quadrature_exact_for_monomials(deg):
    nodes, w = bernstein.triangle_quadrature(deg)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # exact moments on the reference triangle: int x^a y^b = a! b! / (a+b+2)!
    from math import factorial

    x, y = nodes[:, 1], nodes[:, 2]
    for a in range(deg + 1):
        bexp = deg - a
        exact = factorial(a) * factorial(bexp) / factorial(a + bexp + 2)
        assert 0.5 * w @ (x**a * y**bexp) == pytest.approx(exact, rel=1e-12, abs=1e-16)


@pytest.mark.parametrize("d", range(0, 7))
def test_mass_matrix_closed_form_and_integrals(d):
    A = _area(TRI)
    M, E = bernstein.gram_and_energy(d, TRI)
    assert np.abs(M - bernstein.mass_matrix_exact(d, A)).max() < 1e-12 * max(1.0, np.abs(M).max())
    assert np.allclose(M.sum(axis=1), 2 * A / ((d + 1) * (d + 2)), rtol=0, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(M) > 0)
    assert np.allclose(E, E.T)
    ev = np.linalg.eigvalsh(E)
    assert ev.min() > -1e-9 * max(1.0, ev.max())
    if d >= 1:
        assert np.sum(np.abs(ev) < 1e-9 * max(1.0, ev.max())) >= 3


def test_integral_against_symbolic_oracle():
    # exact rational triangle and symbolic integration of one basis polynomial
    V = np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]])
    x, y = sympy.symbols("x y")
    Vs = [[sympy.Rational(0), sympy.Rational(0)], [sympy.Rational(2), sympy.Rational(0)],
          [sympy.Rational(1, 2), sympy.Rational(3, 2)]]
    M = sympy.Matrix([[Vs[0][0], Vs[1][0], Vs[2][0]], [Vs[0][1], Vs[1][1], Vs[2][1]], [1, 1, 1]])
    lam = M.inv() @ sympy.Matrix([x, y, 1])
    d, (i, j, k) = 3, (1, 2, 0)
    B = sympy.factorial(d) / (sympy.factorial(i) * sympy.factorial(j) * sympy.factorial(k)) * lam[0] ** i * lam[1] ** j * lam[2] ** k
    # integrate over the triangle split at x = 1/2
    e1 = sympy.integrate(sympy.integrate(B, (y, 0, 3 * x)), (x, 0, sympy.Rational(1, 2)))
    e2 = sympy.integrate(sympy.integrate(B, (y, 0, (2 - x))), (x, sympy.Rational(1, 2), 2))
    exact = float(e1 + e2)
    Mq, _ = bernstein.gram_and_energy(d, V)
    assert Mq.sum(axis=1)[bernstein.index_of(d, i, j, k)] == pytest.approx(exact, abs=1e-12)
    assert exact == pytest.approx(2 * _area(V) / ((d + 1) * (d + 2)), abs=1e-14)


def _poly_coeffs(d, V, f):
    """Bernstein coefficients of a polynomial of degree <= d by interpolation at domain points."""
    idx = bernstein.indices(d)
    b = idx / d
    return np.linalg.solve(bernstein.eval_basis(d, b), f(b @ V))


@pytest.mark.parametrize("d", [1, 2, 4, 5])
def test_energy_of_linear_function_is_zero(d):
    _, E = bernstein.gram_and_energy(d, TRI)
    c = _poly_coeffs(d, TRI, lambda z: 0.3 - 1.7 * z[:, 0] + 2.2 * z[:, 1])
    assert abs(c @ E @ c) < 1e-12


def test_energy_of_square():
    _, E = bernstein.gram_and_energy(2, TRI)
    c = _poly_coeffs(2, TRI, lambda z: z[:, 0] ** 2)
    assert c @ E @ c == pytest.approx(4 * _area(TRI), rel=1e-12)


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshError):
        bernstein.barycentric_gradients([[0, 0], [1, 1], [2, 2]])
