import math

import pytest

from slidelab.expr import (Bin, Call, EvalError, Neg, Num, ParseError, Var,
                           eval_expr, format_expr, parse_expr, variables_of)

VARS = ["x", "y", "u"]


def ev(text, **bindings):
    return eval_expr(parse_expr(text, VARS), bindings)


class TestParsing:
    def test_precedence(self):
        assert ev("2 + 3 * 4") == 14.0
        assert ev("(2 + 3) * 4") == 20.0
        assert ev("2 - 3 - 4") == -5.0  # left associative
        assert ev("12 / 3 / 2") == 2.0

    def test_power_right_associative(self):
        assert ev("2 ^ 3 ^ 2") == 512.0
        assert ev("(2 ^ 3) ^ 2") == 64.0

    def test_unary_minus_binds_looser_than_power(self):
        assert ev("-2 ^ 2") == -4.0
        assert ev("(-2) ^ 2") == 4.0

    def test_functions(self):
        assert ev("sin(0)") == 0.0
        assert ev("cos(0)") == 1.0
        assert ev("abs(-3)") == 3.0
        assert ev("exp(1)") == pytest.approx(math.e)
        assert ev("tanh(100)") == pytest.approx(1.0)

    def test_scientific_numbers(self):
        assert ev("1e-3") == 1e-3
        assert ev("2.5E2") == 250.0
        assert ev(".5") == 0.5

    def test_unknown_identifier_reports_offset_and_choices(self):
        with pytest.raises(ParseError) as exc:
            parse_expr("x + velocity", VARS)
        assert exc.value.position == 4
        assert "u" in exc.value.expected and "x" in exc.value.expected

    def test_trailing_input(self):
        with pytest.raises(ParseError, match="trailing"):
            parse_expr("1 + 2 3", VARS)

    def test_unbalanced_paren(self):
        with pytest.raises(ParseError):
            parse_expr("(x + 1", VARS)
        with pytest.raises(ParseError):
            parse_expr("sin x", VARS)

    def test_unexpected_character(self):
        with pytest.raises(ParseError):
            parse_expr("x % 2", VARS)


class TestEvaluation:
    def test_division_by_zero_is_inf(self):
        assert ev("1 / x", x=0.0) == math.inf
        assert ev("-1 / x", x=0.0) == -math.inf
        assert math.isnan(ev("x / x", x=0.0))

    def test_integer_power_exact_for_negative_base(self):
        assert ev("x ^ 3", x=-2.0) == -8.0
        assert ev("x ^ 2", x=-3.0) == 9.0

    def test_fractional_power_of_negative_base_is_nan(self):
        assert math.isnan(ev("x ^ 0.5", x=-1.0))

    def test_unbound_variable(self):
        with pytest.raises(EvalError):
            ev("x + y", x=1.0)

    def test_variables_of(self):
        e = parse_expr("x * sin(y) + 2", VARS)
        assert variables_of(e) == {"x", "y"}


class TestFormatting:
    @pytest.mark.parametrize("text", [
        "x + y * u",
        "(x + y) * u",
        "-x ^ 2",
        "(-x) ^ 2",
        "x - (y - u)",
        "x / (y / u)",
        "(x ^ y) ^ u",
        "x ^ y ^ u",
        "-(x + y)",
        "sin(x * cos(y))",
        "1 - -x",
        "2.5 * x + 1e-3",
    ])
    def test_round_trip_is_identity(self, text):
        tree = parse_expr(text, VARS)
        printed = format_expr(tree)
        assert parse_expr(printed, VARS) == tree
        # printing is a fixpoint
        assert format_expr(parse_expr(printed, VARS)) == printed

    def test_minimal_parentheses(self):
        assert format_expr(parse_expr("(x + y) + u", VARS)) == "x + y + u"
        assert format_expr(parse_expr("x * (y * u)", VARS)) == "x * (y * u)"

    def test_tree_construction_matches_parser(self):
        assert parse_expr("x + 2 * y", VARS) == \
            Bin("+", Var("x"), Bin("*", Num(2.0), Var("y")))
        assert parse_expr("-sin(u)", VARS) == Neg(Call("sin", Var("u")))
