from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mscorr.errors import MagnitudeOverflow, NotPowerOfTwo, ShiftOutOfRange
from mscorr.fixedpoint import (
    DEFAULT_TABLE,
    ONE,
    RAW_MAX,
    RAW_MIN,
    SqrtTable,
    FxVal,
    fx_de_rgb,
    fx_div_pow2,
    fx_from_u8,
    fx_isqrt,
    fx_isqrt_array,
    fx_rms,
    fx_to_real,
)

TOL = 2.0**-8


def test_from_u8_exhaustive():
    assert fx_from_u8(0).raw == 0
    assert fx_from_u8(255).raw == 16711680
    for v in range(256):
        assert fx_to_real(fx_from_u8(v)) == v
    with pytest.raises(ValueError):
        fx_from_u8(256)


def test_div_pow2_examples():
    assert fx_div_pow2(FxVal.from_real(16.0), 4).to_real() == 1.0
    assert fx_div_pow2(FxVal(1), 1).raw == 0  # 0.5 ulp ties to even
    assert fx_div_pow2(FxVal(3), 1).raw == 2  # 1.5 ulp ties to even
    assert fx_div_pow2(FxVal(-3), 1).raw == -2
    assert fx_div_pow2(FxVal(5), 2).raw == 1
    assert fx_div_pow2(FxVal(7), 2).raw == 2
    v = FxVal(123456)
    assert fx_div_pow2(v, 0) == v
    for m in (-1, 32):
        with pytest.raises(ShiftOutOfRange):
            fx_div_pow2(v, m)


@settings(max_examples=300)
@given(st.integers(RAW_MIN, RAW_MAX), st.integers(0, 15), st.integers(0, 15))
def test_div_pow2_composes_within_one_ulp(raw, a, b):
    v = FxVal(raw)
    direct = fx_div_pow2(v, a + b).raw
    nested = fx_div_pow2(fx_div_pow2(v, a), b).raw
    assert abs(direct - nested) <= 1


@settings(max_examples=300)
@given(st.integers(RAW_MIN, RAW_MAX), st.integers(0, 31))
def test_div_pow2_is_nearest(raw, m):
    got = fx_div_pow2(FxVal(raw), m).raw
    assert abs(got - raw / 2**m) <= 0.5


def test_saturation():
    big = FxVal(RAW_MAX)
    assert (big + FxVal(1)).raw == RAW_MAX
    assert (FxVal(RAW_MIN) - FxVal(1)).raw == RAW_MIN
    assert (-FxVal(RAW_MIN)).raw == RAW_MAX
    assert (big * big).raw == RAW_MAX
    assert (big * FxVal(RAW_MIN)).raw == RAW_MIN
    assert FxVal.from_real(1e12).saturated
    assert FxVal.from_real(-math.inf).raw == RAW_MIN
    assert FxVal(1 << 40).raw == RAW_MAX


def test_arithmetic_basics():
    a, b = FxVal.from_real(1.5), FxVal.from_real(-2.25)
    assert (a + b).to_real() == -0.75
    assert (a - b).to_real() == 3.75
    assert (a * b).to_real() == -3.375
    assert FxVal(1) * FxVal(ONE // 2) == FxVal(0)  # 2**-17 rounds to even
    assert a > b


@settings(max_examples=300)
@given(st.integers(-(2**15), 2**15 - 1), st.integers(-(2**15), 2**15 - 1))
def test_mul_matches_rounded_product(x, y):
    got = (FxVal(x * 256) * FxVal(y * 256)).raw
    exact = x * y * 2**16 / 2**16
    assert abs(got - exact) <= 0.5


# --- square root -----------------------------------------------------------


def test_isqrt_examples():
    assert fx_isqrt(0) == 0
    assert fx_isqrt(65535) == 255
    assert fx_isqrt(2**32 - 1) == 65535
    with pytest.raises(ValueError):
        fx_isqrt(2**32)


def test_isqrt_exhaustive_small_range():
    v = np.arange(0, 2**20 + 1, dtype=np.int64)
    r = fx_isqrt_array(v)
    assert np.all(r * r <= v) and np.all((r + 1) * (r + 1) > v)


def test_isqrt_random_large():
    v = np.random.default_rng(7).integers(0, 2**32, size=10**6, dtype=np.int64)
    r = fx_isqrt_array(v)
    expected = np.array([math.isqrt(int(x)) for x in v[:20000]])
    np.testing.assert_array_equal(r[:20000], expected)
    assert np.all(r * r <= v) and np.all((r + 1) * (r + 1) > v)


@settings(max_examples=500)
@given(st.integers(0, 2**32 - 1))
def test_scalar_and_vector_isqrt_agree(v):
    assert fx_isqrt(v) == math.isqrt(v) == int(fx_isqrt_array(np.array([v]))[0])


def test_sqrt_table():
    assert len(DEFAULT_TABLE.entries) == 256
    for i, e in enumerate(DEFAULT_TABLE.entries):
        # the seed never exceeds the root of any radicand whose top byte is i
        assert e * e <= i << 24
    with pytest.raises(ValueError):
        SqrtTable((0,) * 255)
    with pytest.raises(ValueError):
        SqrtTable(DEFAULT_TABLE.entries, newton_iters=0)


# --- fixed-point metrics ---------------------------------------------------


def test_fx_rms_examples():
    assert fx_rms([10, 20, 30, 40], [14, 16, 34, 36]).to_real() == pytest.approx(4.0, rel=TOL)
    assert fx_rms([9] * 8, [9] * 8).raw == 0
    with pytest.raises(NotPowerOfTwo):
        fx_rms([1, 2, 3], [1, 2, 3])
    with pytest.raises(NotPowerOfTwo):
        fx_rms([0] * 1024, [0] * 1024)
    with pytest.raises(ValueError):
        fx_rms([256, 0], [0, 0])


def test_fx_rms_worst_cases():
    for m in range(0, 10):
        n = 1 << m
        assert fx_rms([255] * n, [0] * n).to_real() == pytest.approx(255.0, rel=TOL)
        one = [0] * n
        one[0] = 1
        exact = math.sqrt(1 / n)
        assert abs(fx_rms(one, [0] * n).to_real() - exact) <= TOL * exact


def test_fx_rms_random_accuracy():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(2000):
        n = 1 << int(rng.integers(0, 10))
        a = rng.integers(0, 256, n)
        b = rng.integers(0, 256, n)
        exact = math.sqrt(float(np.mean((a - b) ** 2.0)))
        got = fx_rms(a, b).to_real()
        if exact == 0:
            assert got == 0
        else:
            worst = max(worst, abs(got - exact) / exact)
    assert worst <= TOL


def test_fx_de_rgb():
    assert fx_de_rgb((10, 20, 30), (13, 24, 30)).to_real() == 5.0
    assert fx_de_rgb((7, 7, 7), (7, 7, 7)).raw == 0
    lim = 2**23 - 1
    # largest legal inputs: no wrap, the Q16.16 result saturates at the type bound
    assert fx_de_rgb((lim, lim, lim), (0, 0, 0)).raw == RAW_MAX
    assert fx_de_rgb((0, 0, 0), (0, 0, 30000)).to_real() == 30000.0
    with pytest.raises(MagnitudeOverflow):
        fx_de_rgb((2**23, 0, 0), (0, 0, 0))
    with pytest.raises(MagnitudeOverflow):
        fx_de_rgb((-1, 0, 0), (0, 0, 0))
    assert 3 * (2**23) ** 2 < 2**48 <= 3 * (2**24) ** 2


@settings(max_examples=300)
@given(
    st.tuples(*[st.integers(0, 2**14 - 1)] * 3),
    st.tuples(*[st.integers(0, 2**14 - 1)] * 3),
)
def test_fx_de_rgb_accuracy(p, q):
    exact = math.dist(p, q)
    got = fx_de_rgb(p, q).to_real()
    assert abs(got - exact) <= TOL * exact
