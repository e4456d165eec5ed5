from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from qwalk.bigrat import (DEFAULT_DENOMINATOR_1D, DEFAULT_DENOMINATOR_2D, ExactPoint, affine_step,
                          make_point, sample_point, to_decimal)
from qwalk.errors import InvalidInput
from qwalk.rng import Substream


def test_doubling_step_small_example():
    jump, x = affine_step(2, make_point(3, 4))
    assert jump == (1,)
    assert x == ExactPoint((2,), 4)


def test_cat_map_step_small_example():
    # (2 1; 1 1) (1/3, 2/3) = (4/3, 1) -> jump (1, 1), fractional (1/3, 0)
    jump, x = affine_step(((2, 1), (1, 1)), make_point((1, 2), 3))
    assert jump == (1, 1)
    assert x.numerators == (1, 0)
    assert x.is_boundary()


@given(st.integers(2, 10), st.integers(1, 2**200), st.data())
def test_step_is_exact_and_keeps_denominator(a, q, data):
    q += 1
    u = data.draw(st.integers(0, q - 1))
    (j,), x = affine_step(a, make_point(u, q))
    assert x.denominator == q
    assert Fraction(a * u, q) == j + Fraction(x.numerators[0], q)
    assert 0 <= j < a


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**128 - 1),
       st.integers(0, 2**128 - 1))
def test_matrix_step_is_exact(a, b, c, u1, u2):
    q = DEFAULT_DENOMINATOR_2D
    M = ((a, b), (c, a * b + 1))
    jump, x = affine_step(M, make_point((u1, u2), q))
    for row, j, r in zip(M, jump, x.numerators):
        assert Fraction(row[0] * u1 + row[1] * u2, q) == j + Fraction(r, q)
        assert 0 <= r < q


def test_doubling_orbit_of_dyadic_point_matches_binary_digits():
    # x = u / 2^128 under x -> 2x mod 1: jump at step k is bit (127 - k) of u
    q = 1 << 128
    u = 0xDEADBEEF_01234567_89ABCDEF_FEDCBA98
    x = make_point(u, q)
    for k in range(128):
        (j,), x = affine_step(2, x)
        assert j == (u >> (127 - k)) & 1
        assert x.numerators[0] == (u << (k + 1)) % q
    assert x.numerators[0] == 0


def test_make_point_validation():
    with pytest.raises(InvalidInput):
        make_point(5, 5)
    with pytest.raises(InvalidInput):
        make_point(-1, 5)
    with pytest.raises(InvalidInput):
        make_point(0, 1)
    with pytest.raises(InvalidInput):
        affine_step(((1, 1), (1, 2)), make_point(1, 5))


@pytest.mark.parametrize("value,digits,expected", [
    (Fraction(1, 3), 5, "0.33333"),
    (Fraction(2, 3), 5, "0.66667"),
    (Fraction(1, 8), 2, "0.12"),     # tie rounds to even
    (Fraction(3, 8), 2, "0.38"),
    (Fraction(-5, 7), 6, "-0.714286"),
    (Fraction(47, 38), 4, "1.2368"),
])
def test_to_decimal(value, digits, expected):
    assert to_decimal(value, digits) == expected


def test_to_decimal_of_point():
    assert to_decimal(make_point(1, 4), 3) == "0.250"
    assert to_decimal(make_point((1, 3), 4), 2) == "(0.25, 0.75)"


def test_sample_point_range_and_determinism():
    pts = [sample_point(Substream(9, i), 2, 7) for i in range(500)]
    assert all(1 <= u <= 6 for p in pts for u in p.numerators)
    assert pts == [sample_point(Substream(9, i), 2, 7) for i in range(500)]
    big = sample_point(Substream(1, 1), 1, DEFAULT_DENOMINATOR_1D)
    assert 1 <= big.numerators[0] < DEFAULT_DENOMINATOR_1D
