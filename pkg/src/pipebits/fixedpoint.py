"""Variable-width fixed-point formats and bit-exact arithmetic.

A format (alpha, beta, signed) holds alpha integral and beta fractional
bits. Values are stored as raw integers scaled by 2**beta, so every
operation computes the exact rational result first and quantizes once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .ir import ceil_log2

TRUNCATE = "truncate"
NEAREST_EVEN = "nearest-even"
SATURATE = "saturate"
WRAP = "wrap"

_ROUNDINGS = (TRUNCATE, NEAREST_EVEN)
_OVERFLOWS = (SATURATE, WRAP)


@dataclass(frozen=True)
class FixedPointFormat:
    alpha: int
    beta: int
    signed: bool

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("negative bit count in %r" % (self,))
        if self.alpha + self.beta < 1:
            raise ValueError("total width must be at least 1")

    @property
    def width(self) -> int:
        return self.alpha + self.beta

    @property
    def raw_min(self) -> int:
        return -(1 << (self.width - 1)) if self.signed else 0

    @property
    def raw_max(self) -> int:
        return (1 << (self.width - 1)) - 1 if self.signed else (1 << self.width) - 1

    @property
    def min_value(self) -> Fraction:
        return Fraction(self.raw_min, 1 << self.beta)

    @property
    def max_value(self) -> Fraction:
        return Fraction(self.raw_max, 1 << self.beta)

    def __str__(self) -> str:
        return "%sQ%d.%d" % ("s" if self.signed else "u", self.alpha, self.beta)

    @classmethod
    def parse(cls, text: str) -> "FixedPointFormat":
        t = text.strip()
        if len(t) < 4 or t[0] not in "su" or t[1] != "Q" or "." not in t:
            raise ValueError("bad format string %r, expected e.g. sQ8.2" % text)
        a, b = t[2:].split(".", 1)
        return cls(int(a), int(b), t[0] == "s")


class FixedPointValue:
    """One quantized value: raw integer interpreted as raw * 2**-beta."""

    __slots__ = ("format", "raw")

    def __init__(self, fmt: FixedPointFormat, raw: int):
        if not (fmt.raw_min <= raw <= fmt.raw_max):
            raise ValueError("raw %d out of range for %s" % (raw, fmt))
        self.format = fmt
        self.raw = raw

    def decode(self) -> Fraction:
        return Fraction(self.raw, 1 << self.format.beta)

    def __repr__(self):
        return "FixedPointValue(%s, raw=%d, value=%s)" % (self.format, self.raw, self.decode())

    def __eq__(self, other):
        return (isinstance(other, FixedPointValue)
                and self.format == other.format and self.raw == other.raw)

    def __hash__(self):
        return hash((self.format, self.raw))


def value_from_bits(fmt: FixedPointFormat, bits: str) -> FixedPointValue:
    """Build a value from an 'iiii.ff' bit-pattern string (two's complement)."""
    intpart, _, fracpart = bits.partition(".")
    if len(intpart) != fmt.alpha or len(fracpart) != fmt.beta:
        raise ValueError("bit pattern %r does not match %s" % (bits, fmt))
    raw = int(intpart + fracpart or "0", 2) if (intpart + fracpart) else 0
    if fmt.signed and (intpart + fracpart) and (intpart + fracpart)[0] == "1":
        raw -= 1 << fmt.width
    return FixedPointValue(fmt, raw)


def alpha_from_range(lo, hi) -> int:
    """Minimal integral bits covering [lo, hi] without overflow.

    Unsigned when lo >= 0. Exact: logarithms go through integer bit
    length, never floats.
    """
    lo = Fraction(lo)
    hi = Fraction(hi)
    if lo > hi:
        raise ValueError("empty range [%s, %s]" % (lo, hi))
    if lo < 0:
        neg = math.ceil(-lo)
        pos = math.floor(abs(hi)) + 1
        return max(ceil_log2(neg), ceil_log2(pos)) + 1
    return ceil_log2(math.floor(hi) + 1)


def quantize(x, fmt: FixedPointFormat, rounding: str = TRUNCATE,
             overflow: str = SATURATE) -> FixedPointValue:
    """Round an exact rational into a format; total on all finite inputs."""
    if rounding not in _ROUNDINGS:
        raise ValueError("unknown rounding %r" % rounding)
    if overflow not in _OVERFLOWS:
        raise ValueError("unknown overflow %r" % overflow)
    units = Fraction(x) * (1 << fmt.beta)
    if rounding == TRUNCATE:
        raw = math.floor(units)
    else:
        raw = _round_half_even(units)
    if overflow == SATURATE:
        raw = min(max(raw, fmt.raw_min), fmt.raw_max)
    else:
        raw %= 1 << fmt.width
        if fmt.signed and raw >= 1 << (fmt.width - 1):
            raw -= 1 << fmt.width
    return FixedPointValue(fmt, raw)


def _round_half_even(x: Fraction) -> int:
    lower = math.floor(x)
    rem = x - lower
    if rem < Fraction(1, 2):
        return lower
    if rem > Fraction(1, 2):
        return lower + 1
    return lower if lower % 2 == 0 else lower + 1


def _binop(op, a: FixedPointValue, b: FixedPointValue, out: FixedPointFormat,
           rounding: str, overflow: str) -> FixedPointValue:
    return quantize(op(a.decode(), b.decode()), out, rounding, overflow)


def fx_add(a, b, out, rounding=TRUNCATE, overflow=SATURATE):
    return _binop(lambda x, y: x + y, a, b, out, rounding, overflow)


def fx_sub(a, b, out, rounding=TRUNCATE, overflow=SATURATE):
    return _binop(lambda x, y: x - y, a, b, out, rounding, overflow)


def fx_mul(a, b, out, rounding=TRUNCATE, overflow=SATURATE):
    return _binop(lambda x, y: x * y, a, b, out, rounding, overflow)


def fx_div(a, b, out, rounding=TRUNCATE, overflow=SATURATE):
    if b.raw == 0:
        raise ZeroDivisionError("fixed-point division by exact zero")
    return _binop(lambda x, y: x / y, a, b, out, rounding, overflow)
