import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from curvgap.expr import (
    BinOp,
    Call,
    ExprDomainError,
    ExprError,
    ExprSyntaxError,
    JetProgram,
    Num,
    Pow,
    Var,
    diff,
    eval_jet,
    eval_jets,
    evaluate,
    parse,
    separable_terms,
    shift_variables,
    to_text,
    variables,
)
from curvgap.jets import extract_partial, multi_indices


class TestParse:
    def test_ast_shape(self):
        assert parse("sin(x1)^2", dim=2) == Pow(Call("sin", Var(1)), 2)

    def test_precedence(self):
        assert evaluate(parse("2+3*x1"), np.array([4.0])) == 14.0

    def test_unary_minus_binds_looser_than_power(self):
        assert evaluate(parse("-x1^2"), np.array([3.0])) == -9.0

    def test_left_associative_division(self):
        assert evaluate(parse("8/4/2"), np.zeros(1)) == 1.0

    def test_syntax_error_position(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse("x1 +* 2")
        assert info.value.position == 5

    @pytest.mark.parametrize("text", ["", "sin x1", "(x1", "x1)", "2^x1", "x1^1.5", "foo(x1)", "x0", "3 4"])
    def test_rejects(self, text):
        with pytest.raises(ExprError):
            parse(text)

    def test_variable_beyond_dim(self):
        with pytest.raises(ExprError):
            parse("x3", dim=2)

    def test_pi_and_scientific(self):
        assert evaluate(parse("2*pi + 1e-3"), np.zeros(1)) == pytest.approx(2 * math.pi + 1e-3)

    def test_variables(self):
        assert variables(parse("x1*cos(x4) + 2")) == frozenset({1, 4})


class TestText:
    @pytest.mark.parametrize("text", [
        "sin(x1)^2*x2", "-x1^2", "(x1 - x2)/(1 + x3)", "exp(-x1)*sqrt(x2)", "x1^-2", "pi*cosh(2*x1)",
        "x1 - (x2 - x3)", "x1/(x2*x3)",
    ])
    def test_roundtrip(self, text):
        e = parse(text)
        p = np.array([0.7, 1.3, 0.4])
        again = parse(to_text(e))
        assert again == e or evaluate(again, p) == pytest.approx(evaluate(e, p), rel=1e-15)

    def test_shift(self):
        e = shift_variables(parse("x1*x2"), 2)
        assert variables(e) == frozenset({3, 4})


class TestEvaluate:
    def test_batch(self):
        pts = np.array([[0.0, 1.0], [1.0, 2.0]])
        assert np.allclose(evaluate(parse("x1 + x2^2"), pts), [1.0, 5.0])

    @pytest.mark.parametrize("text,pt", [("1/x1", 0.0), ("log(x1)", -1.0), ("sqrt(x1)", -2.0), ("x1^-1", 0.0)])
    def test_domain(self, text, pt):
        with pytest.raises(ExprDomainError):
            evaluate(parse(text), np.array([pt]))


class TestJets:
    def test_product(self):
        j = eval_jet(parse("x1*x2"), np.array([2.0, 3.0]), 1)
        assert j.value == 6.0
        assert extract_partial(j, (1, 0)) == 3.0
        assert extract_partial(j, (0, 1)) == 2.0

    def test_sin_squared(self):
        j = eval_jet(parse("sin(x1)^2"), np.array([math.pi / 3]), 2)
        assert j.value == pytest.approx(0.75)
        assert extract_partial(j, (1,)) == pytest.approx(math.sqrt(3) / 2)

    def test_reciprocal_at_zero(self):
        with pytest.raises((ExprDomainError, ValueError)):
            eval_jet(parse("1/x1"), np.array([0.0]), 2)

    @pytest.mark.parametrize("text", [
        "sin(x1)^2*cos(x2)", "exp(x1*x2) - x3/(2 + cos(x1))", "sqrt(1 + x1^2)*log(2 + sin(x3))",
        "(x1 + x2)^3 - tan(x2)", "sinh(x1)*cosh(x2)^-1",
    ])
    def test_against_sympy(self, text):
        xs = sp.symbols("x1:4")
        e = parse(text)
        f = sp.sympify(text.replace("^", "**"), locals=dict(zip(["x1", "x2", "x3"], xs)))
        p = (0.4, -0.3, 0.9)
        j = eval_jet(e, np.array(p), 4)
        subs = dict(zip(xs, p))
        for alpha in multi_indices(3, 4):
            d = f
            for x, a in zip(xs, alpha):
                if a:
                    d = sp.diff(d, x, a)
            assert extract_partial(j, alpha) == pytest.approx(float(d.subs(subs)), rel=1e-11, abs=1e-11)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1.2, 1.2), min_size=3, max_size=3))
    def test_separable_matches_tree(self, p):
        exprs = [parse("sin(x1)^2*cos(x2)^3"), parse("(sin(x1)*cos(x3) - 2*sin(x2))^2"), parse("x1*x2 + cos(x3)")]
        a = eval_jets(exprs, np.array(p), 4, method="separable")
        b = eval_jets(exprs, np.array(p), 4, method="tree")
        for ja, jb in zip(a, b):
            assert np.allclose(ja.coeffs, jb.coeffs, rtol=1e-12, atol=1e-13)

    def test_separable_terms(self):
        assert separable_terms(parse("sin(x1)*cos(x2) + x3^2")) is not None
        assert separable_terms(parse("sin(x1*x2)")) is None

    def test_program_batch(self):
        pts = np.array([[0.1, 0.2], [0.3, -0.4], [1.0, 2.0]])
        prog = JetProgram([parse("sin(x1)*x2"), parse("exp(x1 + x2)")])
        js = prog.jets(pts, 2)
        for k, p in enumerate(pts):
            single = eval_jets(prog.exprs, p, 2, method="tree")
            for jb, js1 in zip(js, single):
                assert np.allclose(jb.coeffs[:, k], js1.coeffs)

    def test_unknown_method(self):
        with pytest.raises(ExprError):
            eval_jets([parse("x1")], np.zeros(1), 1, method="magic")


class TestDiff:
    @pytest.mark.parametrize("text", ["sin(x1)^2*x2", "exp(x1)/(1 + x2^2)", "sqrt(2 + cos(x1*x2))", "log(3 + x1) - tan(x2)"])
    def test_diff_matches_jet(self, text):
        e = parse(text)
        p = np.array([0.3, 0.8])
        j = eval_jet(e, p, 1)
        for k in (1, 2):
            assert evaluate(diff(e, k), p) == pytest.approx(j.partial_value((k == 1, k == 2)), rel=1e-13)

    def test_diff_constant(self):
        assert diff(parse("3*pi"), 1) == Num(0.0)
