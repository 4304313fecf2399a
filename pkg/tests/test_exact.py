import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from hybridqrom.exact import ExactValue

fractions = st.fractions(min_value=-1000, max_value=1000, max_denominator=1000)


@given(fractions, fractions)
def test_arithmetic_matches_fraction(a, b):
    x, y = ExactValue.of(a), ExactValue.of(b)
    assert (x + y).to_fraction() == a + b
    assert (x * y).to_fraction() == a * b
    assert (x - y).to_fraction() == a - b
    if b:
        assert (x / y).to_fraction() == a / b


@given(fractions, fractions)
def test_ordering_matches_fraction(a, b):
    assert (ExactValue.of(a) < ExactValue.of(b)) == (a < b)
    assert (ExactValue.of(a) == ExactValue.of(b)) == (a == b)


def test_large_values_fall_back_to_log2():
    big = ExactValue.of(Fraction(3) ** 5000)
    assert not big.is_exact
    assert big.log2_magnitude() == pytest.approx(5000 * math.log2(3))
    assert "≈" in big.render()


def test_directed_rounding_brackets_the_value():
    x = Fraction(3) ** 5000
    up = ExactValue.of(x, rounding="up")
    down = ExactValue.of(x, rounding="down")
    assert down.log2 <= up.log2
    assert down.log2 <= math.log2(3) * 5000 <= up.log2 + 1e-9


def test_exact_render_is_a_fraction():
    assert ExactValue.of(Fraction(7, 25)).render() == "7/25"
    assert ExactValue.of(Fraction(7, 25)).to_json()["mode"] == "exact"


def test_zero_is_exact():
    assert ExactValue.from_log2(1, -math.inf).is_exact
