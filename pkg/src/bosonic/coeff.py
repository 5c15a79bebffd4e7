"""Coefficient rings for operator polynomials.

Two kinds are supported and never mixed silently:

* ``Exact``: elements of Q(i)[sqrt 2], stored as four gmpy2 rationals so that
  ``a + b*sqrt2 + i*(c + d*sqrt2)``.  Rationals and Gaussian rationals are the
  common case; the sqrt 2 part appears once ladder operators enter.
* float: ``mpmath.mpc`` values carrying the working precision of their owner.
"""

from __future__ import annotations

import re
from fractions import Fraction
from numbers import Rational

import gmpy2
import mpmath

Q = gmpy2.mpq

_ZERO = Q(0)
_ONE = Q(1)


def _q(value):
    if isinstance(value, Fraction):
        return Q(value.numerator, value.denominator)
    return Q(value)


class Exact:
    """Exact complex number in Q(i)[sqrt 2]."""

    __slots__ = ("re", "re2", "im", "im2")

    def __init__(self, re=0, im=0, re2=0, im2=0):
        self.re = _q(re)
        self.im = _q(im)
        self.re2 = _q(re2)
        self.im2 = _q(im2)

    @staticmethod
    def _raw(re, re2, im, im2):
        out = Exact.__new__(Exact)
        out.re, out.re2, out.im, out.im2 = re, re2, im, im2
        return out

    @classmethod
    def coerce(cls, value):
        if isinstance(value, Exact):
            return value
        if isinstance(value, (int, Rational)) or type(value) is type(_ZERO):
            return cls._raw(_q(value), _ZERO, _ZERO, _ZERO)
        if isinstance(value, str):
            return parse_exact(value)
        raise TypeError(f"cannot use {type(value).__name__} as an exact coefficient")

    @classmethod
    def i(cls):
        return cls._raw(_ZERO, _ZERO, _ONE, _ZERO)

    @classmethod
    def sqrt2(cls):
        return cls._raw(_ZERO, _ONE, _ZERO, _ZERO)

    @property
    def has_sqrt2(self):
        return bool(self.re2 or self.im2)

    def is_zero(self):
        return not (self.re or self.im or self.re2 or self.im2)

    def is_real(self):
        return not (self.im or self.im2)

    def __bool__(self):
        return not self.is_zero()

    def __eq__(self, other):
        try:
            o = Exact.coerce(other)
        except TypeError:
            return NotImplemented
        return (self.re == o.re and self.im == o.im
                and self.re2 == o.re2 and self.im2 == o.im2)

    def __hash__(self):
        return hash((self.re, self.re2, self.im, self.im2))

    def __neg__(self):
        return Exact._raw(-self.re, -self.re2, -self.im, -self.im2)

    def __add__(self, other):
        if not isinstance(other, Exact):
            try:
                other = Exact.coerce(other)
            except TypeError:
                return NotImplemented
        return Exact._raw(self.re + other.re, self.re2 + other.re2,
                          self.im + other.im, self.im2 + other.im2)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Exact):
            try:
                other = Exact.coerce(other)
            except TypeError:
                return NotImplemented
        return Exact._raw(self.re - other.re, self.re2 - other.re2,
                          self.im - other.im, self.im2 - other.im2)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, int):
            return Exact._raw(self.re * other, self.re2 * other,
                              self.im * other, self.im2 * other)
        if not isinstance(other, Exact):
            try:
                other = Exact.coerce(other)
            except TypeError:
                return NotImplemented
        a, b, c, d = self.re, self.re2, self.im, self.im2
        e, f, g, h = other.re, other.re2, other.im, other.im2
        if not (b or d or f or h):
            return Exact._raw(a * e - c * g, _ZERO, a * g + c * e, _ZERO)
        # (a+b r)(e+f r) with r^2 = 2
        rr = a * e + 2 * b * f - c * g - 2 * d * h
        rr2 = a * f + b * e - c * h - d * g
        ii = a * g + 2 * b * h + c * e + 2 * d * f
        ii2 = a * h + b * g + c * f + d * e
        return Exact._raw(rr, rr2, ii, ii2)

    __rmul__ = __mul__

    def conjugate(self):
        return Exact._raw(self.re, self.re2, -self.im, -self.im2)

    def _sqrt2_conj(self):
        return Exact._raw(self.re, -self.re2, self.im, -self.im2)

    def inverse(self):
        if self.is_zero():
            raise ZeroDivisionError("exact coefficient is zero")
        # z^-1 = conj(z) / |z|^2, then clear sqrt2 from the real norm
        norm = self * self.conjugate()
        p, q = norm.re, norm.re2
        denom = p * p - 2 * q * q
        inv_norm = Exact._raw(p / denom, -q / denom, _ZERO, _ZERO)
        return self.conjugate() * inv_norm

    def __truediv__(self, other):
        if isinstance(other, (int, Rational)) or type(other) is type(_ZERO):
            f = _q(other)
            return Exact._raw(self.re / f, self.re2 / f, self.im / f, self.im2 / f)
        return self * Exact.coerce(other).inverse()

    def __rtruediv__(self, other):
        return Exact.coerce(other) * self.inverse()

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("integer powers only")
        if n < 0:
            return self.inverse() ** (-n)
        out, base = Exact(1), self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __complex__(self):
        r2 = 2 ** 0.5
        return complex(float(self.re) + float(self.re2) * r2,
                       float(self.im) + float(self.im2) * r2)

    def to_mpc(self):
        r2 = mpmath.sqrt(2)
        def f(q):
            return mpmath.mpf(int(q.numerator)) / int(q.denominator)
        return mpmath.mpc(f(self.re) + r2 * f(self.re2), f(self.im) + r2 * f(self.im2))

    def real_part(self):
        return Exact._raw(self.re, self.re2, _ZERO, _ZERO)

    def imag_part(self):
        return Exact._raw(self.im, self.im2, _ZERO, _ZERO)

    def __repr__(self):
        return f"Exact({format_exact(self)})"


def _fmt_real(rat, rat2):
    parts = []
    if rat or not rat2:
        parts.append(str(rat))
    if rat2:
        parts.append(f"{rat2}*sqrt2")
    return "+".join(parts).replace("+-", "-")


def format_exact(z: Exact) -> str:
    """Human-readable form such as ``1/2+3*sqrt2 + i*(-1)``."""
    if z.is_real():
        return _fmt_real(z.re, z.re2)
    return f"{_fmt_real(z.re, z.re2)} + i*({_fmt_real(z.im, z.im2)})"


_REAL_RE = re.compile(
    r"^\s*(?P<rat>[+-]?\d+(?:/\d+)?)?\s*(?:(?P<sign>[+-])?\s*(?P<rat2>\d+(?:/\d+)?)\*sqrt2)?\s*$")


def parse_real(text: str):
    """Parse ``"p/q"`` or ``"p/q+r/s*sqrt2"`` into a pair of rationals."""
    m = _REAL_RE.match(text)
    if not m or (m.group("rat") is None and m.group("rat2") is None):
        raise ValueError(f"malformed exact real {text!r}")
    rat = Q(m.group("rat")) if m.group("rat") else _ZERO
    rat2 = _ZERO
    if m.group("rat2"):
        rat2 = Q(m.group("rat2"))
        if m.group("sign") == "-":
            rat2 = -rat2
    return rat, rat2


def real_to_str(rat, rat2) -> str:
    if not rat2:
        return str(rat)
    sign = "-" if rat2 < 0 else "+"
    return f"{rat}{sign}{abs(rat2)}*sqrt2"


def parse_exact(text: str) -> Exact:
    re_, re2 = parse_real(text)
    return Exact._raw(re_, re2, _ZERO, _ZERO)


def exact_to_json(z: Exact) -> dict:
    return {"re": real_to_str(z.re, z.re2), "im": real_to_str(z.im, z.im2)}


def exact_from_json(obj) -> Exact:
    re_, re2 = parse_real(obj["re"])
    im, im2 = parse_real(obj.get("im", "0"))
    return Exact._raw(re_, re2, im, im2)


def as_float(value, prec: int):
    """Convert any supported scalar into an mpc at the given precision."""
    with mpmath.workprec(prec):
        if isinstance(value, Exact):
            return value.to_mpc()
        if isinstance(value, Fraction) or type(value) is type(_ZERO):
            return mpmath.mpc(mpmath.mpf(int(value.numerator)) / int(value.denominator))
        return mpmath.mpc(value)
