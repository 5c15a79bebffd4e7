from fractions import Fraction as F
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosonic.coeff import Exact
from bosonic.polyham import (
    NormalPoly, NotHermitianError, anticommutator_monomial, binomial_power_xp,
    binomial_power_xp2, commute_xp, fock_expectation, fock_ladder_expectation,
    from_anticommutator, hermite_he, kravchuk, ladder_to_xp, poly_from_json,
    poly_to_json, to_anticommutator, vacuum_moment, xp_to_ladder,
)
from conftest import ladder_ops, quadratures

X, P = NormalPoly.X(), NormalPoly.P()
I_ = Exact.i()


def mono(mu, nu, c=1):
    return NormalPoly.monomial((mu,), (nu,), c)


def poly_matrix(p, cutoff):
    """Dense matrix of an XP or ladder poly from truncated operators."""
    n = p.modes
    assert n == 1
    if p.basis == "xp":
        left, right = quadratures(cutoff)
    else:
        a = ladder_ops(cutoff)
        left, right = a.T, a
    out = np.zeros((cutoff + 1, cutoff + 1), complex)
    for (mu, nu), c in p.terms.items():
        if p.basis == "xp":
            m = np.linalg.matrix_power(left, mu[0]) @ np.linalg.matrix_power(right, nu[0])
        else:
            m = np.linalg.matrix_power(left, nu[0]) @ np.linalg.matrix_power(right, mu[0])
        out += complex(c) * m
    return out


# exact oracle: X = x*, P = -i d/dx acting on polynomials with Gaussian-rational coefficients
def _apply_x(poly, e):
    return {k + e: v for k, v in poly.items()}


def _apply_p(poly, e):
    for _ in range(e):
        poly = {k - 1: v * k * (-I_) for k, v in poly.items() if k}
    return poly


def apply_xp_word(word, poly):
    for letter, e in reversed(word):
        poly = _apply_x(poly, e) if letter == "X" else _apply_p(poly, e)
    return poly


def apply_normal(p, poly):
    out = {}
    for (mu, nu), c in p.terms.items():
        for k, v in apply_xp_word([("X", mu[0]), ("P", nu[0])], poly).items():
            out[k] = out.get(k, Exact(0)) + c * v
    return {k: v for k, v in out.items() if v}


class TestCommutators:
    def test_canonical(self):
        assert commute_xp(1, 1) == NormalPoly.constant(I_)

    def test_examples(self):
        assert commute_xp(2, 2) == mono(1, 1, 4 * I_) + 2
        assert commute_xp(3, 3) == mono(2, 2, 9 * I_) + mono(1, 1, 18) + (-6 * I_)

    def test_px_ordering(self):
        assert P * X == X * P + (-I_)
        assert NormalPoly.constant(1) * (X * X) == X * X
        assert (X * X) * (P * P) == mono(2, 2)

    @pytest.mark.parametrize("mu", range(6))
    @pytest.mark.parametrize("nu", range(6))
    def test_matches_product_difference(self, mu, nu):
        assert commute_xp(mu, nu) == mono(mu, 0) * mono(0, nu) - mono(0, nu) * mono(mu, 0)

    @pytest.mark.parametrize("mu,nu", [(2, 3), (3, 3), (5, 4), (5, 5)])
    def test_exact_polynomial_representation(self, mu, nu):
        # [X^mu, P^nu] acting on x^0..x^8, computed letter by letter
        for deg in range(9):
            base = {deg: Exact(1)}
            lhs = apply_xp_word([("X", mu), ("P", nu)], base)
            rhs_part = apply_xp_word([("P", nu), ("X", mu)], base)
            direct = {k: lhs.get(k, Exact(0)) - rhs_part.get(k, Exact(0))
                      for k in set(lhs) | set(rhs_part)}
            direct = {k: v for k, v in direct.items() if v}
            assert apply_normal(commute_xp(mu, nu), base) == direct


class TestBinomialPowers:
    def test_examples(self):
        assert binomial_power_xp(1, 0, 5) == mono(5, 0)
        assert binomial_power_xp(1, 1, 2) == mono(2, 0) + mono(1, 1, 2) + mono(0, 2) + (-I_)
        assert binomial_power_xp2(0, 1, 2) == mono(0, 4)
        assert binomial_power_xp2(1, 1, 2) == mono(2, 0) + mono(1, 2, 2) + mono(0, 4) + mono(0, 1, -2 * I_)

    def test_constant_of_fourth_power(self):
        # (X+P)^4: constant term from two contractions, n!/(2! 0! 0!) (-i/2)^2 = -3
        assert binomial_power_xp(1, 1, 4).constant_term() == Exact(-3)

    @given(st.fractions(-5, 5, max_denominator=7), st.fractions(-5, 5, max_denominator=7),
           st.integers(0, 8))
    @settings(max_examples=40, deadline=None)
    def test_equal_iterated_products(self, al, be, n):
        assert binomial_power_xp(al, be, n) == (X * al + P * be) ** n
        assert binomial_power_xp2(al, be, n) == (X * al + P * P * be) ** n


class TestConversions:
    def test_x_to_ladder(self):
        lad = xp_to_ladder(X)
        half_sqrt2 = Exact(0, 0, F(1, 2))
        assert lad == NormalPoly.a().scale(half_sqrt2) + NormalPoly.adag().scale(half_sqrt2)

    def test_number_operator(self):
        assert ladder_to_xp(NormalPoly.number()) == (mono(2, 0) + mono(0, 2) - 1).scale(F(1, 2))

    def test_creation_left_matches_dense(self):
        p = X * X * P + P * X * (3 * I_)
        dense = poly_matrix(p, 30)[:10, :10]
        lad = poly_matrix(xp_to_ladder(p), 30)[:10, :10]
        assert np.allclose(dense, lad, atol=1e-10)

    def test_multimode_round_trip(self):
        x0, p1 = NormalPoly.X(0, 2), NormalPoly.P(1, 2)
        p = x0 * x0 * p1 + p1 * x0 * F(1, 3) + NormalPoly.P(0, 2) * x0
        assert ladder_to_xp(xp_to_ladder(p)) == p

    def test_float_kind(self):
        p = (X * X + P).to_float(80)
        back = ladder_to_xp(xp_to_ladder(p))
        diff = back - p
        assert all(abs(c) < 1e-20 for c in diff.terms.values())


class TestAnticommutator:
    def test_examples(self):
        assert to_anticommutator(X * X).terms == {((2,), (0,)): Exact(1)}
        assert to_anticommutator(X * P + P * X).terms == {((1,), (1,)): Exact(2)}
        h = anticommutator_monomial((2,), (2,))
        assert h == mono(2, 2) + mono(1, 1, -2 * I_) - 1
        assert to_anticommutator(mono(2, 2) + mono(0, 2) * mono(2, 0)).terms == {((2,), (2,)): Exact(2)}

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitianError):
            to_anticommutator(X * P)

    def test_round_trip_random(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            p = NormalPoly.constant(0)
            for _ in range(4):
                mu, nu = rng.integers(0, 4, size=2)
                c = F(int(rng.integers(-5, 6)), int(rng.integers(1, 4)))
                m = mono(int(mu), int(nu), c)
                p = p + m + m.adjoint()
            h = to_anticommutator(p)
            assert all(c.is_real() for c in h.terms.values())
            assert from_anticommutator(h) == p


class TestMoments:
    def test_examples(self):
        assert vacuum_moment(2, 0) == Exact(F(1, 2))
        assert vacuum_moment(4, 0) == Exact(F(3, 4))
        assert vacuum_moment(1, 1) == Exact(0, F(1, 2))
        assert vacuum_moment(3, 0) == 0

    def test_pure_position_closed_form(self):
        from bosonic.polyham import double_factorial
        for k in range(0, 17, 2):
            assert vacuum_moment(k, 0) == Exact(F(double_factorial(k - 1), 2 ** (k // 2)))

    def test_dense_oracle(self):
        x, p = quadratures(80)
        for k in range(17):
            xk = np.linalg.matrix_power(x, k)
            for l in range(17 - k):
                ref = (xk @ np.linalg.matrix_power(p, l))[0, 0]
                val = complex(vacuum_moment(k, l))
                assert abs(val - ref) <= 1e-10 * max(1.0, abs(ref))

    def test_fock_ladder(self):
        assert fock_ladder_expectation(1, 1, 0) == 1
        assert fock_ladder_expectation(2, 2, 1) == 6
        assert fock_ladder_expectation(1, 2, 0) == 0
        a = ladder_ops(30)
        for m in range(11):
            for n in range(11):
                op = np.linalg.matrix_power(a, m) @ np.linalg.matrix_power(a.T, n)
                for k in range(11):
                    assert round(op[k, k].real) == fock_ladder_expectation(m, n, k)

    def test_fock_expectation_of_number(self):
        n2 = NormalPoly.number() * NormalPoly.number()
        assert fock_expectation(n2, (3,)) == Exact(9)

    def test_hermite_and_kravchuk(self):
        assert hermite_he(2, 0) == -1
        assert hermite_he(3, 0) == 0
        assert hermite_he(4, F(1, 2)) == F(1, 16) - 6 * F(1, 4) + 3
        assert all(kravchuk(6, 0, l) == 1 for l in range(7))
        assert kravchuk(3, 1, 1) == 1
        import numpy.polynomial.hermite_e as He
        for n in range(8):
            coeffs = [0] * n + [1]
            assert abs(hermite_he(n, 0.7) - He.hermeval(0.7, coeffs)) < 1e-10


class TestJson:
    def test_round_trip(self):
        p = xp_to_ladder(X * X * P + mono(1, 1, F(2, 7)))
        assert poly_from_json(poly_to_json(p)) == p

    def test_malformed(self):
        obj = poly_to_json(X)
        obj["terms"][0]["c"]["re"] = "1/x"
        with pytest.raises(ValueError, match=r"terms\[0\]"):
            poly_from_json(obj)
        with pytest.raises(ValueError, match="schema"):
            poly_from_json({"schema": "other"})


class TestKinds:
    def test_no_silent_mixing(self):
        with pytest.raises(TypeError):
            X + X.to_float()
        with pytest.raises(TypeError):
            X.scale(0.5)

    def test_mode_mismatch(self):
        with pytest.raises(ValueError):
            X * NormalPoly.X(0, 2)


small = st.fractions(-3, 3, max_denominator=5)


@st.composite
def polys(draw, modes=2, max_terms=3, max_exp=2):
    terms = {}
    for _ in range(draw(st.integers(1, max_terms))):
        mu = tuple(draw(st.integers(0, max_exp)) for _ in range(modes))
        nu = tuple(draw(st.integers(0, max_exp)) for _ in range(modes))
        terms[(mu, nu)] = Exact(draw(small), draw(small))
    return NormalPoly(modes, "xp", "exact", None, terms)


@given(polys(), polys(), polys())
@settings(max_examples=25, deadline=None)
def test_product_associative(p, q, r):
    assert (p * q) * r == p * (q * r)


@given(polys(), polys())
@settings(max_examples=25, deadline=None)
def test_adjoint_reverses_products(p, q):
    assert (p * q).adjoint() == q.adjoint() * p.adjoint()
    assert p.adjoint().adjoint() == p


@given(polys(max_exp=3))
@settings(max_examples=25, deadline=None)
def test_ladder_round_trip(p):
    assert ladder_to_xp(xp_to_ladder(p)) == p
    assert xp_to_ladder(p * p) == xp_to_ladder(p) * xp_to_ladder(p)


@given(polys(modes=1, max_terms=4, max_exp=3))
@settings(max_examples=25, deadline=None)
def test_anticommutator_inverse(p):
    h = p + p.adjoint()
    assert from_anticommutator(to_anticommutator(h)) == h
