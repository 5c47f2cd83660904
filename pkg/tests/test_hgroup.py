import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hpicone.hgroup import (GroupPoint, apply_T, apply_X, apply_Y, commutator_check, constant, coordinate,
                            coordinates, group_product, horizontal_gradient, left_translate,
                            random_polynomial, sub_laplacian)

small_ints = st.integers(-50, 50)


def point(draw_ints, n=1):
    return GroupPoint(draw_ints[:n], draw_ints[n:2 * n], draw_ints[2 * n])


def random_point(rng, n=1, scale=1.0):
    return GroupPoint.from_array(scale * rng.standard_normal(2 * n + 1))


# --- sympy oracle for the vector fields ------------------------------------

X1, Y1, T = sp.symbols("x1 y1 t")


def sx(f):
    return sp.diff(f, X1) + 2 * Y1 * sp.diff(f, T)


def sy(f):
    return sp.diff(f, Y1) - 2 * X1 * sp.diff(f, T)


def as_sympy(field_coeffs):
    return sum(c * X1 ** a * Y1 ** b * T ** k for (a, b, k), c in field_coeffs.items())


def as_field(field_coeffs):
    xs, ys, t = coordinates(1)
    out = constant(0.0)
    for (a, b, k), c in field_coeffs.items():
        out = out + c * xs[0] ** a * ys[0] ** b * t ** k if (a or b or k) else out + c
    return out


def random_coeffs(rng, degree=3):
    return {(a, b, k): float(rng.integers(-5, 6))
            for a in range(degree + 1) for b in range(degree + 1) for k in range(degree + 1)
            if a + b + k <= degree}


class TestGroupLaw:
    def test_identity_and_inverse(self):
        a = GroupPoint((0.3,), (-1.2,), 2.5)
        e = GroupPoint.identity(1)
        assert a * e == a and e * a == a
        assert a * a.inverse() == e
        assert a.inverse() * a == e

    def test_noncommutative_example(self):
        a = GroupPoint((1.0,), (0.0,), 0.0)
        b = GroupPoint((0.0,), (1.0,), 0.0)
        assert group_product(a, b).as_array().tolist() == [1.0, 1.0, -2.0]
        assert group_product(b, a).as_array().tolist() == [1.0, 1.0, 2.0]

    @given(st.lists(small_ints, min_size=9, max_size=9))
    def test_associative_exact_on_integers(self, c):
        a, b, d = point(c[0:3]), point(c[3:6]), point(c[6:9])
        assert (a * b) * d == a * (b * d)

    @given(st.lists(small_ints, min_size=10, max_size=10))
    def test_associative_n2(self, c):
        a = GroupPoint(c[0:2], c[2:4], c[4])
        b = GroupPoint(c[5:7], c[7:9], c[9])
        assert (a * b) * a == a * (b * a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            group_product(GroupPoint.identity(1), GroupPoint.identity(2))

    def test_invalid_points(self):
        with pytest.raises(ValueError):
            GroupPoint((1.0, 2.0), (1.0,), 0.0)
        with pytest.raises(ValueError):
            GroupPoint((np.inf,), (0.0,), 0.0)
        with pytest.raises(ValueError):
            GroupPoint.from_array([1.0, 2.0])

    def test_array_roundtrip(self, rng):
        a = random_point(rng, n=2)
        assert GroupPoint.from_array(a.as_array()) == a


class TestVectorFields:
    def test_coordinate_functions(self, rng):
        xs, ys, t = coordinates(1)
        q = random_point(rng)
        assert apply_X(1, xs[0], q) == 1.0 and apply_Y(1, xs[0], q) == 0.0
        assert apply_X(1, t, q) == 2 * q.y[0]
        assert apply_Y(1, t, q) == -2 * q.x[0]
        assert apply_T(t, q) == 1.0

    def test_constant_is_annihilated(self, rng):
        q = random_point(rng)
        c = constant(3.7)
        assert apply_X(1, c, q) == 0 and apply_Y(1, c, q) == 0 and apply_T(c, q) == 0

    def test_index_out_of_range(self):
        q = GroupPoint.identity(1)
        with pytest.raises(IndexError):
            apply_X(2, coordinate(0), q)
        with pytest.raises(IndexError):
            apply_Y(0, coordinate(0), q)
        with pytest.raises(IndexError):
            commutator_check(1, 2, coordinate(0), q)

    def test_against_sympy(self, rng):
        for _ in range(5):
            coeffs = random_coeffs(rng)
            f_sym, f = as_sympy(coeffs), as_field(coeffs)
            q = rng.uniform(-1, 1, 3)
            subs = {X1: q[0], Y1: q[1], T: q[2]}
            grad = horizontal_gradient(f, q)
            assert grad[0] == pytest.approx(float(sx(f_sym).subs(subs)), rel=1e-12, abs=1e-12)
            assert grad[1] == pytest.approx(float(sy(f_sym).subs(subs)), rel=1e-12, abs=1e-12)
            lap = float((sx(sx(f_sym)) + sy(sy(f_sym))).subs(subs))
            assert sub_laplacian(f, q) == pytest.approx(lap, rel=1e-12, abs=1e-10)

    def test_sub_laplacian_of_radial_quadratic(self, rng):
        xs, ys, _ = coordinates(1)
        f = xs[0] ** 2 + ys[0] ** 2
        q = rng.uniform(-1, 1, (3, 50))
        assert np.allclose(sub_laplacian(f, q), 4.0, rtol=0, atol=1e-13)

    def test_broadcasting(self, rng):
        f = random_polynomial(rng, 1, 3)
        q = rng.uniform(-1, 1, (3, 4, 5))
        g = horizontal_gradient(f, q)
        assert g.shape == (2, 4, 5)
        assert g[0, 2, 3] == pytest.approx(apply_X(1, f, q[:, 2, 3]), rel=1e-14)

    def test_exp_and_powers_against_sympy(self):
        xs, ys, t = coordinates(1)
        f = (xs[0] * ys[0] + t).exp() * (1.0 + xs[0] ** 2) ** 1.5 + (t + 2.0).abs_pow(2.5)
        f_sym = sp.exp(X1 * Y1 + T) * (1 + X1 ** 2) ** sp.Rational(3, 2) + (T + 2) ** sp.Rational(5, 2)  # T + 2 > 0 at q
        q = np.array([0.3, -0.7, 0.2])
        subs = {X1: q[0], Y1: q[1], T: q[2]}
        assert apply_X(1, f, q) == pytest.approx(float(sx(f_sym).subs(subs)), rel=1e-13)
        assert sub_laplacian(f, q) == pytest.approx(float((sx(sx(f_sym)) + sy(sy(f_sym))).subs(subs)), rel=1e-12)


class TestCommutators:
    def test_t_example(self):
        _, _, t = coordinates(1)
        lhs, rhs = commutator_check(1, 1, t, GroupPoint((0.4,), (0.1,), -0.3))
        assert lhs == pytest.approx(-4.0) and rhs == -4.0

    def test_x1_example(self, rng):
        xs, _, _ = coordinates(2)
        for i in (1, 2):
            for j in (1, 2):
                lhs, rhs = commutator_check(i, j, xs[0], random_point(rng, 2))
                assert lhs == 0 and rhs == 0

    def test_off_diagonal_n2(self, rng):
        _, _, t = coordinates(2)
        lhs, rhs = commutator_check(1, 2, t, random_point(rng, 2))
        assert abs(lhs) <= 1e-15 and rhs == 0

    def test_xy_bracket_against_sympy(self, rng):
        coeffs = random_coeffs(rng)
        f_sym, f = as_sympy(coeffs), as_field(coeffs)
        q = rng.uniform(-1, 1, 3)
        subs = {X1: q[0], Y1: q[1], T: q[2]}
        lhs, rhs = commutator_check(1, 1, f, q)
        expect = float((sx(sy(f_sym)) - sy(sx(f_sym))).subs(subs))
        assert lhs == pytest.approx(expect, rel=1e-12, abs=1e-11)
        assert rhs == pytest.approx(float((-4 * sp.diff(f_sym, T)).subs(subs)), rel=1e-12, abs=1e-11)

    @pytest.mark.parametrize("kinds", ["XY", "YX", "XX", "YY", "XT", "YT"])
    def test_all_relations_n2(self, rng, kinds):
        for _ in range(20):
            f = random_polynomial(rng, 2, 3)
            q = rng.uniform(-1, 1, 5)
            for i in (1, 2):
                for j in (1, 2):
                    lhs, rhs = commutator_check(i, j, f, q, kinds)
                    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(rhs))


class TestLeftInvariance:
    def test_translation_identity(self, rng):
        f = random_polynomial(rng, 1, 3)
        a = random_point(rng)
        q = random_point(rng)
        assert left_translate(f, a)(q) == pytest.approx(f(a * q), rel=1e-13, abs=1e-13)

    def test_fields_commute_with_translation(self, rng):
        for n in (1, 2):
            f = random_polynomial(rng, n, 3) * 0.2
            for _ in range(10):
                a, q = random_point(rng, n), random_point(rng, n)
                g = left_translate(f, a)
                lhs = horizontal_gradient(g, q)
                rhs = horizontal_gradient(f, (a * q).as_array())
                assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))

    def test_t_is_not_left_invariant_for_euclidean_derivative(self, rng):
        # d/dx_1 alone does not commute with left translation
        _, _, t = coordinates(1)
        a = GroupPoint((0.0,), (1.0,), 0.0)
        q = GroupPoint((0.0,), (0.0,), 0.0)
        g = left_translate(t, a)
        assert g.gradient(q.as_array())[0] != t.gradient((a * q).as_array())[0]


class TestPolynomialNode:
    def tree(self, poly):
        n = (poly.E.shape[1] - 1) // 2
        xs, ys, t = coordinates(n)
        coords = xs + ys + [t]
        out = constant(0.0)
        for c, e in zip(poly.c, poly.E):
            term = constant(c)
            for k, power in enumerate(e):
                for _ in range(power):
                    term = term * coords[k]
            out = out + term
        return out

    @pytest.mark.parametrize("n", [1, 2])
    def test_matches_expression_tree(self, rng, n):
        poly = random_polynomial(rng, n, 3)
        tree = self.tree(poly)
        q = rng.uniform(-1, 1, (2 * n + 1, 4, 3))
        for a, b in zip(poly.jet(q), tree.jet(q)):
            assert np.allclose(a, b, rtol=1e-13, atol=1e-13)

    def test_translated_jet_matches_tree(self, rng):
        poly = random_polynomial(rng, 1, 3)
        a = random_point(rng)
        q = rng.uniform(-1, 1, (3, 5))
        for x, y in zip(left_translate(poly, a).jet(q), left_translate(self.tree(poly), a).jet(q)):
            assert np.allclose(x, y, rtol=1e-12, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            random_polynomial(rng, 1, 2)(np.zeros(5))
