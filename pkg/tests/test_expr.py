"""Expression language: parsing, evaluation, canonical text."""

from __future__ import annotations

import math
import random

import pytest

from sweepforge import expr
from sweepforge.expr import EvalError, ExprError


def ev(text, env=None, dialect="condition"):
    return expr.evaluate(expr.parse(text, dialect), env or {})


class TestEvaluate:
    def test_single_name(self):
        assert ev("x1", {"x1": 2, "x2": 3}) == 2

    def test_pair_tuple(self):
        assert ev("(x1, x2)", {"x1": 2, "x2": 3}) == (2, 3)

    def test_arithmetic(self):
        assert ev("x1*x2 + 1", {"x1": 2, "x2": 3}) == 7

    def test_precedence(self):
        assert ev("2 + 3 * 4") == 14
        assert ev("(2 + 3) * 4") == 20
        assert ev("2 ^ 3 ^ 2") == 512  # right-associative
        assert ev("-2 ^ 2") == -4  # unary binds looser than power
        assert ev("2 ^ -1") == 0.5

    def test_division(self):
        assert ev("7 / 2") == 3.5

    def test_functions(self):
        assert ev("log(exp(2.0))") == pytest.approx(2.0)
        assert ev("floor(2.9)") == 2
        assert ev("exp(0)") == 1.0

    def test_division_by_zero(self):
        with pytest.raises(EvalError, match="division by zero"):
            ev("1 / x", {"x": 0})

    def test_log_nonpositive(self):
        with pytest.raises(EvalError, match="log"):
            ev("log(0 - 1)")

    def test_unknown_name(self):
        with pytest.raises(EvalError, match="unknown name 'q'"):
            ev("q + 1")

    def test_non_finite_result(self):
        with pytest.raises(EvalError):
            ev("x * x", {"x": 1e308})

    def test_overflow_in_exp(self):
        with pytest.raises(EvalError):
            ev("exp(10000)")

    def test_purity(self):
        node = expr.parse("x ^ 2 - 1")
        env = {"x": 4}
        assert expr.evaluate(node, env) == expr.evaluate(node, env) == 15


class TestParseErrors:
    def test_empty(self):
        with pytest.raises(ExprError):
            expr.parse("")

    def test_trailing_garbage(self):
        with pytest.raises(ExprError):
            expr.parse("1 + 2 )")

    def test_unknown_function(self):
        with pytest.raises(ExprError, match="unknown function"):
            expr.parse("sin(1)")

    def test_nested_tuple(self):
        with pytest.raises(ExprError, match="nested tuple"):
            expr.parse("((1, 2), 3)")

    def test_unterminated_paren(self):
        with pytest.raises(ExprError):
            expr.parse("(1 + 2")

    def test_strings_only_in_plot_dialect(self):
        with pytest.raises(ExprError):
            expr.parse('"abc"', dialect="condition")
        assert ev('"abc"', dialect="plot") == "abc"


class TestPlotDialect:
    def test_concat(self):
        assert ev('"n=" & n', {"n": 10}, dialect="plot") == "n=10"

    def test_dotted_names(self):
        assert ev("table.final.rows * 2", {"table.final.rows": 4}, dialect="plot") == 8

    def test_concat_numbers(self):
        assert ev("1 & 2", dialect="plot") == "12"

    def test_arithmetic_on_text_rejected(self):
        with pytest.raises(EvalError, match="numeric operand"):
            ev('"a" + 1', dialect="plot")


def random_node(rng, depth=0):
    choice = rng.randrange(6 if depth < 4 else 3)
    if choice == 0:
        return expr.Num(rng.randrange(0, 50))
    if choice == 1:
        return expr.Num(rng.choice([0.5, 1.25, 3.75, 1e-9, 123.456]))
    if choice == 2:
        return expr.Name(rng.choice("abc"))
    if choice == 3:
        return expr.Unary("-", random_node(rng, depth + 1))
    if choice == 4:
        return expr.Call(rng.choice(expr.FUNCTIONS), random_node(rng, depth + 1))
    op = rng.choice("+-*/^")
    return expr.Binary(op, random_node(rng, depth + 1), random_node(rng, depth + 1))


class TestCanonicalText:
    def test_examples(self):
        assert expr.to_text(expr.parse("x1*x2+1")) == "x1 * x2 + 1"
        assert expr.to_text(expr.parse("(x1, x2)")) == "(x1, x2)"
        assert expr.to_text(expr.parse("-(a + b) ^ 2")) == "-(a + b) ^ 2"

    def test_round_trip_random_asts(self):
        rng = random.Random(11)
        for _ in range(300):
            node = random_node(rng)
            text = expr.to_text(node)
            assert expr.parse(text) == node, text

    def test_names_in(self):
        assert expr.names_in(expr.parse("a * (b + floor(c)) - a")) == {"a", "b", "c"}
