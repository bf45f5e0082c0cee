"""Q16.16 fixed-point arithmetic modelled on what an FPGA datapath can afford.

The only division is a power-of-two shift.  Square roots go through a
256-entry seed table, two Newton steps and a final floor correction.
Everything saturates instead of wrapping.  Metrics that need true division
(GFC, Mv, L*a*b*) therefore have no fixed-point form here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering

import numpy as np

from .errors import MagnitudeOverflow, NotPowerOfTwo, ShiftOutOfRange

FRAC_BITS = 16
ONE = 1 << FRAC_BITS
RAW_MAX = (1 << 31) - 1
RAW_MIN = -(1 << 31)

U32_MAX = (1 << 32) - 1
ACC_BITS = 48
RGB_CHANNEL_LIMIT = 1 << 23  # channels in [0, 2**23) keep three squares under 2**48
MAX_RMS_BANDS = 512
NEWTON_ITERS = 2


def _saturate(raw: int) -> int:
    return RAW_MAX if raw > RAW_MAX else RAW_MIN if raw < RAW_MIN else raw


def _shift_rne(value: int, m: int) -> int:
    """``value / 2**m`` rounded to nearest, ties to even (Python ints shift arithmetically)."""
    if m == 0:
        return value
    q = value >> m
    rem = value - (q << m)
    half = 1 << (m - 1)
    if rem > half or (rem == half and q & 1):
        q += 1
    return q


@total_ordering
@dataclass(frozen=True)
class FxVal:
    """Q16.16 value; ``raw`` is a signed 32-bit integer."""

    raw: int

    def __post_init__(self) -> None:
        if not RAW_MIN <= self.raw <= RAW_MAX:
            object.__setattr__(self, "raw", _saturate(int(self.raw)))

    @classmethod
    def from_real(cls, x: float) -> FxVal:
        if math.isnan(x):
            raise ValueError("NaN has no fixed-point representation")
        if math.isinf(x):
            return cls(RAW_MAX if x > 0 else RAW_MIN)
        return cls(_saturate(round(x * ONE)))

    def to_real(self) -> float:
        return self.raw / ONE

    def __float__(self) -> float:
        return self.to_real()

    def __add__(self, other: FxVal) -> FxVal:
        return FxVal(_saturate(self.raw + other.raw))

    def __sub__(self, other: FxVal) -> FxVal:
        return FxVal(_saturate(self.raw - other.raw))

    def __neg__(self) -> FxVal:
        return FxVal(_saturate(-self.raw))

    def __mul__(self, other: FxVal) -> FxVal:
        return FxVal(_saturate(_shift_rne(self.raw * other.raw, FRAC_BITS)))

    def __lt__(self, other: FxVal) -> bool:
        return self.raw < other.raw

    @property
    def saturated(self) -> bool:
        return self.raw in (RAW_MAX, RAW_MIN)


def fx_from_u8(v: int) -> FxVal:
    if not 0 <= v <= 255:
        raise ValueError(f"{v} is not an 8-bit unsigned value")
    return FxVal(v << FRAC_BITS)


def fx_to_real(v: FxVal) -> float:
    return v.to_real()


def fx_div_pow2(v: FxVal, m: int) -> FxVal:
    if not 0 <= m <= 31:
        raise ShiftOutOfRange(f"shift {m} outside 0..31")
    return FxVal(_shift_rne(v.raw, m))


# ---------------------------------------------------------------------------
# square root


def _build_table() -> tuple[int, ...]:
    # radicands are normalized into [2**30, 2**32); the entry for top byte i
    # is floor(sqrt(i * 2**24)), never above the root of any radicand in the slot
    return tuple(math.isqrt(i << 24) for i in range(256))


@dataclass(frozen=True)
class SqrtTable:
    entries: tuple[int, ...]
    newton_iters: int = NEWTON_ITERS

    def __post_init__(self) -> None:
        if len(self.entries) != 256:
            raise ValueError("sqrt table needs 256 entries")
        if any(not 0 <= e < (1 << 16) for e in self.entries):
            raise ValueError("sqrt table entries must fit 16 bits")
        if self.newton_iters < 1:
            raise ValueError("at least one Newton step is required")


DEFAULT_TABLE = SqrtTable(_build_table())
_TABLE_NP = np.array(DEFAULT_TABLE.entries, dtype=np.int64)


def _normalize_shift(v: int) -> int:
    """Even left shift ``2s`` moving ``v`` into ``[2**30, 2**32)``."""
    return (32 - v.bit_length()) // 2


def fx_isqrt(v: int, table: SqrtTable = DEFAULT_TABLE) -> int:
    """``floor(sqrt(v))`` for a 32-bit unsigned ``v``."""
    if not 0 <= v <= U32_MAX:
        raise ValueError(f"{v} is not a 32-bit unsigned radicand")
    if v == 0:
        return 0
    s = _normalize_shift(v)
    x = table.entries[(v << (2 * s)) >> 24] >> s
    x = max(x, 1)
    for _ in range(table.newton_iters):
        x = (x + v // x) >> 1
    # Newton from the seed lands on floor or floor + 1
    if x * x > v:
        x -= 1
    return x


def fx_isqrt_array(v, table: SqrtTable = DEFAULT_TABLE) -> np.ndarray:
    """Vectorized :func:`fx_isqrt` (same table, same steps)."""
    v = np.asarray(v, dtype=np.int64)
    if np.any(v < 0) or np.any(v > U32_MAX):
        raise ValueError("radicands must be 32-bit unsigned")
    tab = _TABLE_NP if table is DEFAULT_TABLE else np.array(table.entries, dtype=np.int64)
    bitlen = np.frexp(v.astype(np.float64))[1].astype(np.int64)  # exact below 2**53
    s = (32 - np.maximum(bitlen, 1)) // 2
    nz = v > 0
    vv = np.where(nz, v, 1)  # zero lanes run on a dummy radicand and are masked at the end
    x = np.maximum(tab[(vv << (2 * s)) >> 24] >> s, 1)
    for _ in range(table.newton_iters):
        x = (x + vv // x) >> 1
    x = np.where(x * x > vv, x - 1, x)
    return np.where(nz, x, 0)


def _sqrt_scaled(total: int, exp2: int) -> int:
    """Approximate ``sqrt(total * 2**exp2)`` using only shifts and :func:`fx_isqrt`.

    ``total`` is shifted by an even amount into the 32-bit table range first, so
    the root always carries at least 15 significant bits.
    """
    if total == 0:
        return 0
    e = 32 - total.bit_length()
    if (exp2 - e) % 2:
        e -= 1
    radicand = total << e if e >= 0 else total >> -e
    y = fx_isqrt(radicand)
    half = (exp2 - e) // 2
    return y << half if half >= 0 else _shift_rne(y, -half)


def fx_rms(s1, s2) -> FxVal:
    """RMS of two 8-bit spectra whose length is a power of two (up to 512)."""
    a = [int(v) for v in s1]
    b = [int(v) for v in s2]
    n = len(a)
    if n != len(b):
        raise ValueError(f"spectra differ in length: {n} vs {len(b)}")
    if n < 1 or n & (n - 1):
        raise NotPowerOfTwo(f"band count {n} is not a power of two")
    if n > MAX_RMS_BANDS:
        raise NotPowerOfTwo(f"band count {n} exceeds {MAX_RMS_BANDS}")
    if any(not 0 <= v <= 255 for v in a + b):
        raise ValueError("samples must be 8-bit unsigned")
    m = n.bit_length() - 1
    total = sum((x - y) * (x - y) for x, y in zip(a, b))  # < 2**26
    # raw = sqrt(total / 2**m) * 2**16: the division by N is folded into the exponent
    return FxVal(_saturate(_sqrt_scaled(total, 2 * FRAC_BITS - m)))


def fx_de_rgb(rgb1, rgb2) -> FxVal:
    """Euclidean distance of two integer RGB triples, channels in ``[0, 2**23)``."""
    p = [int(v) for v in rgb1]
    q = [int(v) for v in rgb2]
    if len(p) != 3 or len(q) != 3:
        raise ValueError("RGB triples need three channels")
    for v in p + q:
        if not 0 <= v < RGB_CHANNEL_LIMIT:
            raise MagnitudeOverflow(f"channel value {v} outside [0, 2**23)")
    total = sum((x - y) * (x - y) for x, y in zip(p, q))
    if total >= 1 << ACC_BITS:
        raise MagnitudeOverflow("squared distance exceeds the 48-bit accumulator")
    return FxVal(_saturate(_sqrt_scaled(total, 2 * FRAC_BITS)))
