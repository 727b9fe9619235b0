"""Tests for the monomial basis and polynomial arithmetic (sympy oracle)."""

import io
import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from conecg.polynomials import (
    MonomialBasis,
    Poly,
    dump_poly,
    load_poly,
    monomials,
    sphere_multiplier,
)


def to_sympy(p, xs):
    expr = sympy.Integer(0)
    for e, c in p.terms():
        t = sympy.Rational(c) if float(c).is_integer() else sympy.Float(c)
        for x, k in zip(xs, e):
            t *= x**int(k)
        expr += t
    return sympy.expand(expr)


def test_basis_order_matches_documented_example():
    b = monomials(2, 2)
    assert [tuple(e) for e in b.exps] == [(2, 0), (1, 1), (0, 2)]


def test_basis_sizes_and_index():
    b = monomials(3, 4)
    assert len(b.exps) == math.comb(3 + 4 - 1, 4)
    for r, e in enumerate(b.exps):
        assert b.index_of(tuple(e)) == r
    with pytest.raises(ValueError):
        b.index_of((4, 1, 0))


def test_basis_interned():
    assert monomials(3, 4) is monomials(3, 4)


def test_from_terms_and_accessors():
    p = Poly.from_terms(2, 4, [((4, 0), 1.0), ((2, 2), 2.0), ((0, 4), 1.0)])
    assert p.n == 2 and p.degree == 4
    assert dict((tuple(e), c) for e, c in p.terms()) == {
        (4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0}
    with pytest.raises(ValueError):
        Poly.from_terms(2, 4, [((3, 0), 1.0)])  # degree mismatch


def test_add_sub_neg():
    p = Poly.from_terms(2, 2, [((2, 0), 1.0)])
    q = Poly.from_terms(2, 2, [((2, 0), 2.0), ((0, 2), -1.0)])
    s = p + q
    assert dict((tuple(e), c) for e, c in s.terms()) == {(2, 0): 3.0, (0, 2): -1.0}
    d = p - q
    assert dict((tuple(e), c) for e, c in d.terms()) == {(2, 0): -1.0, (0, 2): 1.0}
    assert dict((tuple(e), c) for e, c in (-p).terms()) == {(2, 0): -1.0}


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
       st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_product_matches_sympy(n, d1, d2, seed):
    rng = np.random.default_rng(seed)
    b1, b2 = monomials(n, d1), monomials(n, d2)
    # integer coefficients keep the sympy reference exact
    p = Poly(b1, rng.integers(-9, 10, len(b1.exps)).astype(float))
    q = Poly(b2, rng.integers(-9, 10, len(b2.exps)).astype(float))
    xs = sympy.symbols(f"x0:{n}")
    want = sympy.expand(to_sympy(p, xs) * to_sympy(q, xs))
    got = to_sympy(p * q, xs)
    assert sympy.simplify(want - got) == 0


def test_scalar_product():
    p = Poly.from_terms(2, 2, [((2, 0), 1.0), ((0, 2), 3.0)])
    q = p * 2.0
    assert dict((tuple(e), c) for e, c in q.terms()) == {(2, 0): 2.0, (0, 2): 6.0}


def test_eval_single_and_batch():
    p = Poly.from_terms(2, 4, [((4, 0), 1.0), ((2, 2), 2.0), ((0, 4), 1.0)])
    pts = np.array([[1.0, 0.0], [1.0, 1.0], [0.5, -0.5]])
    want = (pts[:, 0] ** 2 + pts[:, 1] ** 2) ** 2
    assert np.allclose(p.eval(pts), want)
    assert p.eval(np.array([2.0, 0.0])) == pytest.approx(16.0)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(3)
    b = monomials(3, 4)
    p = Poly(b, rng.standard_normal(len(b.exps)))
    x = rng.standard_normal(3)
    g = p.grad(x)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (p.eval(x + e) - p.eval(x - e)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-4, abs=1e-4)


def test_sphere_multiplier_is_power_of_norm():
    for n, r in [(2, 1), (3, 2), (4, 1)]:
        m = sphere_multiplier(n, r)
        xs = sympy.symbols(f"x0:{n}")
        want = sympy.expand(sum(x**2 for x in xs) ** r)
        assert sympy.simplify(to_sympy(m, xs) - want) == 0


def test_poly_io_roundtrip():
    p = Poly.from_terms(3, 6, [((4, 2, 0), 1.0), ((2, 4, 0), 1.0),
                               ((2, 2, 2), -3.0), ((0, 0, 6), 1.0)])
    buf = io.StringIO()
    dump_poly(p, buf)
    buf.seek(0)
    q = load_poly(buf)
    assert q.n == 3 and q.degree == 6
    assert np.allclose(p.coef, q.coef)


def test_poly_io_rejects_degree_mismatch():
    with pytest.raises(ValueError):
        load_poly(io.StringIO("2 4\n1 1 1\n"))


def test_poly_io_comments():
    p = load_poly(io.StringIO("# quartic\n2 4\n4 0 1\n0 4 1\n"))
    assert p.eval(np.array([1.0, 1.0])) == pytest.approx(2.0)
