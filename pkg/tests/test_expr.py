import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayopt import DomainError, ExprSyntaxError, HyperDual, NonSmooth, UnknownIdentifier, parse
from delayopt.expr import BinOp, Call, ExprTimeFunction, ExprVectorField, Neg, Num, Var, eval_with_derivatives


class TestParse:
    def test_product_of_difference(self):
        e = parse("x1*(x1-1)")
        assert e.root == BinOp("*", Var("x1"), BinOp("-", Var("x1"), Num(1.0)))

    def test_exp_at_zero(self):
        assert parse("exp(t)+1")((0.0,)) == 2.0

    @pytest.mark.parametrize(
        "source, offset",
        [("x1^", 3), ("(x1", 3), ("x1 + * 2", 5), ("sin x1", 4), ("2 $ 3", 2), ("", 0)],
    )
    def test_syntax_error_offset(self, source, offset):
        with pytest.raises(ExprSyntaxError) as info:
            parse(source)
        assert info.value.offset == offset
        assert isinstance(info.value, SyntaxError)

    def test_offset_is_in_bytes(self):
        # the two-byte character shifts the byte offset by one
        with pytest.raises(ExprSyntaxError) as info:
            parse("1 + é")
        assert info.value.offset == 4

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifier) as info:
            parse("x1 + y")
        assert info.value.name == "y" and info.value.offset == 5

    def test_declared_variables_only(self):
        with pytest.raises(UnknownIdentifier):
            parse("x3", ["x1", "x2"])

    @pytest.mark.parametrize(
        "source, value",
        [
            ("-2^2", -4.0),
            ("2^3^2", 512.0),
            ("2^-1", 0.5),
            ("1 - 2 - 3", -4.0),
            ("8 / 4 / 2", 1.0),
            ("2 * 3 + 4 * 5", 26.0),
            ("  ( 1 +2 )*3 ", 9.0),
            ("+3", 3.0),
            ("1e-3 * 2", 0.002),
            (".5", 0.5),
        ],
    )
    def test_precedence(self, source, value):
        assert parse(source)(()) == pytest.approx(value, rel=0, abs=1e-15)

    def test_variables_sorted_t_first(self):
        assert parse("x10 + x2 + t").variables == ("t", "x2", "x10")

    def test_abs_flagged_non_smooth(self):
        e = parse("abs(t - 1)")
        assert not e.smooth
        assert e((0.0,)) == 1.0
        with pytest.raises(NonSmooth):
            e.eval_with_derivatives((0.0,), (1.0,), (1.0,))


class TestEvalWithDerivatives:
    def test_square(self):
        assert parse("x1^2").eval_with_derivatives((3.0,), (1.0,), (1.0,)) == HyperDual(9, 6, 6, 2)

    def test_sin(self):
        assert eval_with_derivatives(parse("sin(t)"), (0.0,), (1.0,), (1.0,)) == HyperDual(0, 1, 1, 0)

    def test_mixed_product(self):
        hd = parse("x1*x2").eval_with_derivatives((2.0, 5.0), (1.0, 0.0), (0.0, 1.0))
        assert hd.as_tuple() == (10.0, 5.0, 2.0, 1.0)

    @pytest.mark.parametrize(
        "source, point",
        [("log(x1)", -1.0), ("log(x1)", 0.0), ("sqrt(x1)", -2.0), ("1/x1", 0.0), ("x1^0.5", -1.0)],
    )
    def test_domain_errors(self, source, point):
        e = parse(source)
        with pytest.raises(DomainError):
            e.eval_with_derivatives((point,), (1.0,), (1.0,))

    def test_plain_division_by_zero(self):
        with pytest.raises(DomainError):
            parse("1/x1")((0.0,))

    @pytest.mark.parametrize(
        "source, x",
        [("exp(x1)*sin(x1)", 0.7), ("tanh(x1)^3", -0.4), ("x1^x1", 1.3), ("sqrt(x1)/cos(x1)", 0.9),
         ("log(1 + x1^2)", 2.0), ("2^x1 - x1^-2", 1.1)],
    )
    def test_kernel_matches_object_arithmetic(self, source, x):
        # the generated kernel and the HyperDual class must agree exactly
        from delayopt.expr import _compile

        e = parse(source)
        ref = _compile(e.root, {"x1": 0})([HyperDual(x, 1.0, 1.0)])
        assert e.eval_with_derivatives((x,), (1.0,), (1.0,)).as_tuple() == pytest.approx(ref.as_tuple(), rel=1e-15)

    def test_analytic_second_derivative(self):
        x = 0.3
        hd = parse("exp(2*x1)*cos(x1)").eval_with_derivatives((x,), (1.0,), (1.0,))
        exact = math.exp(2 * x) * (3 * math.cos(x) - 4 * math.sin(x))
        assert hd.d12 == pytest.approx(exact, rel=1e-14)


@st.composite
def polynomials(draw):
    terms = draw(st.lists(st.tuples(st.integers(-3, 3), st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=5))
    parts = []
    for c, a, b in terms:
        if a + b > 4:
            b = 4 - a
        parts.append(f"{c}*x1^{a}*x2^{b}")
    return " + ".join(parts)


coords = st.floats(-2.0, 2.0)
vectors = st.tuples(coords, coords)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(polynomials(), vectors, vectors, vectors)
    def test_matches_finite_differences(self, source, p, v, w):
        e = parse(source, ["x1", "x2"])
        hd = e.eval_with_derivatives(p, v, w)
        h = 1e-5
        p, v, w = map(np.asarray, (p, v, w))
        fd1 = (e(p + h * v) - e(p - h * v)) / (2 * h)
        d1_plus = e.eval_with_derivatives(p + h * w, v, w).d1
        d1_minus = e.eval_with_derivatives(p - h * w, v, w).d1
        fd12 = (d1_plus - d1_minus) / (2 * h)
        assert abs(hd.d1 - fd1) <= 1e-6 * max(1.0, abs(hd.d1))
        assert abs(hd.d12 - fd12) <= 1e-6 * max(1.0, abs(hd.d12))

    @settings(max_examples=60, deadline=None)
    @given(polynomials(), vectors, vectors, vectors)
    def test_mixed_part_symmetric(self, source, p, v, w):
        e = parse(source, ["x1", "x2"])
        assert e.eval_with_derivatives(p, v, w).d12 == e.eval_with_derivatives(p, w, v).d12

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(["exp(x1*x2)/(2 + cos(x2))", "tanh(x1 - x2)^3 * sin(x1)", "sqrt(1 + x1^2) * log(3 + x2)",
                            "x1^x1 + 2^x2"]),
           st.tuples(st.floats(0.1, 2.0), st.floats(-2.0, 2.0)), vectors, vectors)
    def test_mixed_part_symmetric_transcendental(self, source, p, v, w):
        e = parse(source, ["x1", "x2"])
        assert e.eval_with_derivatives(p, v, w).d12 == e.eval_with_derivatives(p, w, v).d12

    @settings(max_examples=80, deadline=None)
    @given(polynomials())
    def test_print_parse_idempotent(self, source):
        e = parse(source, ["x1", "x2"])
        again = parse(e.to_source(), ["x1", "x2"])
        assert again.root == e.root
        assert parse(again.to_source(), ["x1", "x2"]).root == again.root

    def test_round_trip_of_unary_and_calls(self):
        e = parse("-sin(-x1)^-2 / (1 - x1)")
        assert isinstance(e.root, BinOp) and isinstance(e.root.left, Neg)
        assert parse(e.to_source()).root == e.root
        assert isinstance(parse("cos(t)").root, Call)


class TestAdaptors:
    def test_vector_field_derivatives(self):
        f = ExprVectorField(["x1^2*x2", "sin(x1) + x2^3"], 2)
        x = np.array([0.5, -1.5])
        assert np.allclose(f(x), [0.25 * -1.5, math.sin(0.5) - 3.375])
        J = f.jacobian(x)
        assert np.allclose(J, [[2 * 0.5 * -1.5, 0.25], [math.cos(0.5), 3 * 2.25]])
        v, w = np.array([1.0, 2.0]), np.array([-0.5, 0.25])
        # D2f_1 = [[2 x2, 2 x1], [2 x1, 0]], D2f_2 = diag(-sin x1, 6 x2)
        H1 = np.array([[2 * -1.5, 1.0], [1.0, 0.0]])
        H2 = np.diag([-math.sin(0.5), 6 * -1.5])
        assert np.allclose(f.hessian_action(x, v, w), [v @ H1 @ w, v @ H2 @ w])

    def test_vector_field_rejects_abs(self):
        with pytest.raises(NonSmooth):
            ExprVectorField(["abs(x1)"], 1)

    def test_time_function_orders(self):
        g = ExprTimeFunction(["t^3", "exp(2*t)"], 2)
        assert np.allclose(g(1.0, 0), [1.0, math.exp(2)])
        assert np.allclose(g(1.0, 1), [3.0, 2 * math.exp(2)])
        assert np.allclose(g(1.0, 2), [6.0, 4 * math.exp(2)])

    def test_value_only_target_accepts_abs(self):
        xd = ExprTimeFunction(["abs(t - 0.5)"], 1, need_derivatives=False)
        assert xd(0.0)[0] == 0.5

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            ExprVectorField(["x1"], 2)
