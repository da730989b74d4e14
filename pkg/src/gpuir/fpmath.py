"""IEEE-754 binary32/binary64 arithmetic on Python floats.

binary32 values are carried as Python floats that are exactly representable
in single precision.  For +, -, *, / and sqrt, computing in double and
rounding once to single gives the correctly rounded single result, because
double carries more than twice the single-precision significand.  Fused
multiply-add and wide integer conversions are rounded from the exact
rational value instead.
"""

from __future__ import annotations

import math
import struct
from fractions import Fraction

_F32 = struct.Struct("<f")
_F64 = struct.Struct("<d")

F32_MAX = _F32.unpack(b"\xff\xff\x7f\x7f")[0]


def canonical_nan(x: float) -> float:
    """Replace any NaN by the positive quiet NaN.

    Hardware disagrees on the sign and payload of NaNs that arithmetic
    produces (x86 yields a negative one), so results are canonicalized to
    keep launches reproducible across hosts.
    """
    return math.nan if x != x else x


def to_f32(x: float) -> float:
    """Round a double to the nearest binary32 value (ties to even)."""
    try:
        return _F32.unpack(_F32.pack(x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)


def f32_bits(x: float) -> int:
    return int.from_bytes(_F32.pack(x), "little")


def f64_bits(x: float) -> int:
    return int.from_bytes(_F64.pack(x), "little")


def round_rational(q: Fraction, bits: int) -> float:
    """Correctly rounded (nearest, ties to even) binary32/64 value of ``q``."""
    if q == 0:
        return 0.0
    if bits == 64:
        try:
            return float(q)
        except OverflowError:
            return math.copysign(math.inf, q)
    mant_bits, min_exp, max_exp = 24, -126, 127
    sign = -1.0 if q < 0 else 1.0
    a = abs(q)
    e = a.numerator.bit_length() - a.denominator.bit_length()
    if Fraction(2) ** e > a:
        e -= 1
    e = max(e, min_exp)
    scale = e - (mant_bits - 1)
    m = round(a / Fraction(2) ** scale)  # round() on Fraction is half-to-even
    if m >= 1 << mant_bits:
        m >>= 1
        scale += 1
        # m was an exact power of two after rounding up, nothing lost
    if scale + mant_bits - 1 > max_exp:
        return sign * math.inf
    return sign * math.ldexp(float(m), scale)


def ieee_div(a: float, b: float) -> float:
    if b == 0.0:
        if a == 0.0 or math.isnan(a):
            return math.nan
        neg = (math.copysign(1.0, a) < 0) != (math.copysign(1.0, b) < 0)
        return -math.inf if neg else math.inf
    return a / b


def ieee_sqrt(a: float) -> float:
    if math.isnan(a) or a < 0:
        return math.nan if a != 0 else a
    return math.sqrt(a)


def fma(a: float, b: float, c: float, bits: int) -> float:
    """``a * b + c`` with a single rounding."""
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
        r = canonical_nan(a * b + c)
        return to_f32(r) if bits == 32 else r
    exact = Fraction(a) * Fraction(b) + Fraction(c)
    if exact == 0:
        prod_neg = (math.copysign(1.0, a) < 0) != (math.copysign(1.0, b) < 0)
        c_neg = math.copysign(1.0, c) < 0
        if a * b == 0 and c == 0:
            return -0.0 if (prod_neg and c_neg) else 0.0
        return 0.0
    return round_rational(exact, bits)


def int_to_float(v: int, bits: int) -> float:
    """Signed integer to binary32/64, correctly rounded."""
    if bits == 64:
        return float(v)
    if abs(v) < (1 << 53):
        return to_f32(float(v))
    return round_rational(Fraction(v), 32)
