"""Scalar backends.

Two interchangeable coefficient fields drive every computation in this
package:

* ``ExactField(conductor)`` -- elements are rational functions in one
  formal symbol ``tau`` (standing for 2*pi*i) with coefficients in the
  cyclotomic field Q(zeta_n).  Field operations are exact, equality is
  decidable, and there is no rounding anywhere.  Complex conjugation acts
  by zeta -> zeta^-1 and tau -> -tau.
* ``FloatField(eps)`` -- plain ``complex`` arithmetic with a global
  tolerance used for rank decisions and zero tests.

Conversion exact -> float is total (``field.to_complex``); the converse
direction is deliberately not provided.
"""

from __future__ import annotations

import cmath
import math
from fractions import Fraction
from typing import Iterable, Sequence

TWO_PI_I = 2j * math.pi


# ---------------------------------------------------------------------------
# integer polynomial helpers (for cyclotomic polynomials)
# ---------------------------------------------------------------------------

def _poly_divide_exact(num: list[int], den: list[int]) -> list[int]:
    """Exact division of integer polynomials, num = q * den."""
    num = list(num)
    q = [0] * (len(num) - len(den) + 1)
    for i in range(len(q) - 1, -1, -1):
        c = num[i + len(den) - 1]
        assert c % den[-1] == 0
        q[i] = c // den[-1]
        for j, d in enumerate(den):
            num[i + j] -= q[i] * d
    assert all(c == 0 for c in num)
    return q


def cyclotomic_polynomial(n: int) -> list[int]:
    """Integer coefficients of Phi_n, low degree first."""
    poly = [-1] + [0] * (n - 1) + [1]          # x^n - 1
    for d in range(1, n):
        if n % d == 0:
            poly = _poly_divide_exact(poly, cyclotomic_polynomial(d))
    return poly


def _euler_phi(n: int) -> int:
    count = 0
    for k in range(1, n + 1):
        if math.gcd(k, n) == 1:
            count += 1
    return count


# ---------------------------------------------------------------------------
# cyclotomic numbers
# ---------------------------------------------------------------------------

class CycContext:
    """Arithmetic context for Q(zeta_n), elements as dense Fraction vectors."""

    def __init__(self, n: int):
        self.n = n
        self.degree = _euler_phi(n)
        phi = cyclotomic_polynomial(n)
        d = self.degree
        assert len(phi) == d + 1 and phi[-1] == 1
        # power_table[m] = coordinates of zeta^m in the basis 1..zeta^(d-1),
        # for m up to 2d-2 (enough for products) and up to n-1 (for roots).
        top = max(2 * d - 1, n)
        table: list[tuple[Fraction, ...]] = []
        for m in range(top):
            if m < d:
                row = [Fraction(0)] * d
                row[m] = Fraction(1)
            else:
                # zeta^m = zeta * zeta^(m-1), reduce with Phi_n
                prev = list(table[m - 1])
                row = [Fraction(0)] * d
                for j in range(d - 1):
                    row[j + 1] = prev[j]
                lead = prev[d - 1]
                if lead:
                    for j in range(d):
                        row[j] -= lead * phi[j]
            table.append(tuple(row))
        self.power_table = table
        self._zeta_c = cmath.exp(TWO_PI_I / n)
        self._pow_c = [self._zeta_c ** m for m in range(n)]

    # -- raw vector ops (tuples of Fractions) --------------------------------
    def add(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def sub(self, a, b):
        return tuple(x - y for x, y in zip(a, b))

    def neg(self, a):
        return tuple(-x for x in a)

    def mul(self, a, b):
        d = self.degree
        acc = [Fraction(0)] * d
        for i, x in enumerate(a):
            if not x:
                continue
            for j, y in enumerate(b):
                if not y:
                    continue
                pw = self.power_table[i + j]
                c = x * y
                for k in range(d):
                    if pw[k]:
                        acc[k] += c * pw[k]
        return tuple(acc)

    def one(self):
        return tuple([Fraction(1)] + [Fraction(0)] * (self.degree - 1))

    def zero(self):
        return tuple([Fraction(0)] * self.degree)

    def from_fraction(self, q: Fraction):
        v = [Fraction(0)] * self.degree
        v[0] = Fraction(q)
        return tuple(v)

    def is_zero(self, a) -> bool:
        return all(x == 0 for x in a)

    def inv(self, a):
        """Inverse via extended Euclid against Phi_n in Q[x]."""
        if self.is_zero(a):
            raise ZeroDivisionError("cyclotomic division by zero")
        phi = [Fraction(c) for c in cyclotomic_polynomial(self.n)]
        r0, r1 = phi, [Fraction(x) for x in a]
        s0, s1 = [Fraction(0)], [Fraction(1)]
        while any(c != 0 for c in r1):
            q, r = _frac_poly_divmod(r0, r1)
            r0, r1 = r1, r
            s0, s1 = s1, _frac_poly_sub(s0, _frac_poly_mul(q, s1))
        # r0 = gcd, a nonzero constant since Phi_n is irreducible
        const = r0[0]
        inv = [c / const for c in s0]
        acc = [Fraction(0)] * self.degree
        for m, c in enumerate(inv):
            if c:
                pw = self.power_table[m]
                for k in range(self.degree):
                    acc[k] += c * pw[k]
        return tuple(acc)

    def conj(self, a):
        """zeta -> zeta^(n-1) (complex conjugation on the unit circle)."""
        acc = [Fraction(0)] * self.degree
        for m, c in enumerate(a):
            if c:
                pw = self.power_table[(self.n - m) % self.n]
                for k in range(self.degree):
                    acc[k] += c * pw[k]
        return tuple(acc)

    def zeta_power(self, k: int):
        return self.power_table[k % self.n]

    def to_complex(self, a) -> complex:
        return sum(float(c) * self._pow_c[m % self.n] for m, c in enumerate(a) if c)


def _frac_poly_trim(p):
    while p and p[-1] == 0:
        p = p[:-1]
    return list(p)


def _frac_poly_sub(a, b):
    m = max(len(a), len(b))
    a = list(a) + [Fraction(0)] * (m - len(a))
    b = list(b) + [Fraction(0)] * (m - len(b))
    return _frac_poly_trim([x - y for x, y in zip(a, b)])


def _frac_poly_mul(a, b):
    if not a or not b:
        return []
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return _frac_poly_trim(out)


def _frac_poly_divmod(a, b):
    a = _frac_poly_trim(a)
    b = _frac_poly_trim(b)
    if not b:
        raise ZeroDivisionError
    q = [Fraction(0)] * max(len(a) - len(b) + 1, 0)
    r = list(a)
    while len(r) >= len(b) and r:
        c = r[-1] / b[-1]
        k = len(r) - len(b)
        q[k] = c
        for j in range(len(b)):
            r[k + j] -= c * b[j]
        r = _frac_poly_trim(r)
    return _frac_poly_trim(q), r


# ---------------------------------------------------------------------------
# rational functions in tau over Q(zeta_n):   the exact scalar
# ---------------------------------------------------------------------------

class Ex:
    """An exact scalar: element of Q(zeta_n)(tau), tau standing for 2*pi*i.

    Stored as a reduced fraction num/den of dense tau-polynomials whose
    coefficients are cyclotomic vectors; den is monic and num/den has no
    common factor.  Supports the arithmetic operators, ``conjugate`` and
    hashing-free equality, which is all the generic linear algebra needs.
    """

    __slots__ = ("field", "num", "den")

    def __init__(self, field: "ExactField", num, den, *, reduce: bool = True):
        self.field = field
        if reduce:
            num, den = field._reduce(num, den)
        self.num = num
        self.den = den

    # -- arithmetic ----------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Ex):
            return other
        if isinstance(other, (int, Fraction)):
            return self.field.from_fraction(Fraction(other))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        f = self.field
        num = f._padd(f._pmul(self.num, o.den), f._pmul(o.num, self.den))
        return Ex(f, num, f._pmul(self.den, o.den))

    __radd__ = __add__

    def __neg__(self):
        f = self.field
        return Ex(f, [f.cyc.neg(c) for c in self.num], self.den, reduce=False)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        f = self.field
        return Ex(f, f._pmul(self.num, o.num), f._pmul(self.den, o.den))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if not o.num:
            raise ZeroDivisionError("exact scalar division by zero")
        f = self.field
        return Ex(f, f._pmul(self.num, o.den), f._pmul(self.den, o.num))

    def __rtruediv__(self, other):
        o = self._coerce(other)
        return o / self

    def __eq__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self.num == o.num and self.den == o.den

    def __hash__(self):
        return hash((tuple(self.num), tuple(self.den)))

    def conjugate(self):
        f = self.field
        num = [f.cyc.conj(c) if k % 2 == 0 else f.cyc.neg(f.cyc.conj(c))
               for k, c in enumerate(self.num)]
        den = [f.cyc.conj(c) if k % 2 == 0 else f.cyc.neg(f.cyc.conj(c))
               for k, c in enumerate(self.den)]
        return Ex(f, num, den)

    def __complex__(self):
        f = self.field
        nv = sum(f.cyc.to_complex(c) * TWO_PI_I ** k for k, c in enumerate(self.num))
        dv = sum(f.cyc.to_complex(c) * TWO_PI_I ** k for k, c in enumerate(self.den))
        return nv / dv

    def __repr__(self):
        return f"Ex({self._pretty()})"

    def _pretty(self) -> str:
        def side(p):
            terms = []
            for k, c in enumerate(p):
                if self.field.cyc.is_zero(c):
                    continue
                cs = "+".join(f"{q}*z^{m}" if m else f"{q}"
                              for m, q in enumerate(c) if q)
                terms.append(f"({cs})" + (f"*tau^{k}" if k else ""))
            return "+".join(terms) if terms else "0"
        if self.den == self.field._pone:
            return side(self.num)
        return f"[{side(self.num)}]/[{side(self.den)}]"

    # -- structure queries ----------------------------------------------------
    def as_fraction(self) -> Fraction:
        """Return self as a rational number; raises if it is not one."""
        f = self.field
        if len(self.den) != 1 or len(self.num) > 1:
            raise ValueError("scalar is not rational: %r" % self)
        if not self.num:
            return Fraction(0)
        num, den = self.num[0], self.den[0]
        if any(num[1:]) or any(den[1:]):
            raise ValueError("scalar is not rational: %r" % self)
        return num[0] / den[0]


class ExactField:
    """Q(zeta_conductor)(tau) with tau = 2*pi*i treated formally."""

    is_exact = True

    def __init__(self, conductor: int = 4):
        if conductor < 1:
            raise ValueError("conductor must be >= 1")
        # i must always be available (real/imaginary splits, realification)
        conductor = conductor * 4 // math.gcd(conductor, 4)
        self.conductor = conductor
        self.cyc = CycContext(conductor)
        self._pone = [self.cyc.one()]
        self.zero = Ex(self, [], self._pone, reduce=False)
        self.one = Ex(self, [self.cyc.one()], self._pone, reduce=False)
        self.tau = Ex(self, [self.cyc.zero(), self.cyc.one()], self._pone,
                      reduce=False)

    # -- polynomial layer over Cyc -------------------------------------------
    def _ptrim(self, p):
        while p and self.cyc.is_zero(p[-1]):
            p = p[:-1]
        return list(p)

    def _padd(self, a, b):
        m = max(len(a), len(b))
        z = self.cyc.zero()
        a = list(a) + [z] * (m - len(a))
        b = list(b) + [z] * (m - len(b))
        return self._ptrim([self.cyc.add(x, y) for x, y in zip(a, b)])

    def _pmul(self, a, b):
        if not a or not b:
            return []
        out = [self.cyc.zero()] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if self.cyc.is_zero(x):
                continue
            for j, y in enumerate(b):
                out[i + j] = self.cyc.add(out[i + j], self.cyc.mul(x, y))
        return self._ptrim(out)

    def _pdivmod(self, a, b):
        a = self._ptrim(a)
        b = self._ptrim(b)
        if not b:
            raise ZeroDivisionError
        q = [self.cyc.zero()] * max(len(a) - len(b) + 1, 0)
        r = list(a)
        binv = self.cyc.inv(b[-1])
        while len(r) >= len(b) and r:
            c = self.cyc.mul(r[-1], binv)
            k = len(r) - len(b)
            q[k] = c
            for j in range(len(b)):
                r[k + j] = self.cyc.sub(r[k + j], self.cyc.mul(c, b[j]))
            r = self._ptrim(r)
        return self._ptrim(q), r

    def _pgcd(self, a, b):
        a, b = self._ptrim(a), self._ptrim(b)
        while b:
            a, b = b, self._pdivmod(a, b)[1]
        return a

    def _reduce(self, num, den):
        num = self._ptrim(num)
        den = self._ptrim(den)
        if not den:
            raise ZeroDivisionError("zero denominator")
        if not num:
            return [], list(self._pone)
        g = self._pgcd(num, den)
        if len(g) > 1 or not self.cyc.is_zero(self.cyc.sub(g[0], self.cyc.one())):
            num = self._pdivmod(num, g)[0]
            den = self._pdivmod(den, g)[0]
        lead_inv = self.cyc.inv(den[-1])
        num = [self.cyc.mul(c, lead_inv) for c in num]
        den = [self.cyc.mul(c, lead_inv) for c in den]
        return num, den

    # -- Field interface -------------------------------------------------------
    def from_fraction(self, q) -> Ex:
        q = Fraction(q)
        if q == 0:
            return self.zero
        return Ex(self, [self.cyc.from_fraction(q)], self._pone, reduce=False)

    def from_int(self, k: int) -> Ex:
        return self.from_fraction(Fraction(k))

    def coerce(self, x) -> Ex:
        if isinstance(x, Ex):
            if x.field.conductor != self.conductor:
                raise ValueError("conductor mismatch")
            return x
        return self.from_fraction(Fraction(x))

    def is_zero(self, x: Ex) -> bool:
        return not x.num

    def conjugate(self, x: Ex) -> Ex:
        return x.conjugate()

    def to_complex(self, x: Ex) -> complex:
        return complex(x)

    def abs2_float(self, x: Ex) -> float:
        return abs(complex(x)) ** 2

    def root_of_unity(self, turns) -> Ex:
        """e^(2*pi*i*turns) for rational turns with denominator | conductor."""
        turns = Fraction(turns)
        if self.conductor % turns.denominator != 0:
            raise ValueError(
                f"root of unity e^(2 pi i {turns}) needs conductor divisible by "
                f"{turns.denominator}, have {self.conductor}")
        k = turns.numerator * (self.conductor // turns.denominator)
        return Ex(self, [self.cyc.zeta_power(k)], self._pone, reduce=False)

    def two_pi_i_power(self, w: int) -> Ex:
        if w >= 0:
            return Ex(self, [self.cyc.zero()] * w + [self.cyc.one()],
                      self._pone, reduce=False)
        return Ex(self, [self.cyc.one()],
                  [self.cyc.zero()] * (-w) + [self.cyc.one()], reduce=False)

    def gamma_value(self, alpha, k: int):
        raise NotImplementedError(
            "gamma-function values are transcendental; exact scalars carry them "
            "only through the float backend")


# ---------------------------------------------------------------------------
# float scalars
# ---------------------------------------------------------------------------

class FloatField:
    """Plain complex arithmetic with a global tolerance for zero tests."""

    is_exact = False

    def __init__(self, eps: float = 1e-9):
        self.eps = eps
        self.zero = 0j
        self.one = 1 + 0j
        self.tau = TWO_PI_I

    def from_fraction(self, q) -> complex:
        return complex(Fraction(q))

    def from_int(self, k: int) -> complex:
        return complex(k)

    def coerce(self, x) -> complex:
        if isinstance(x, Ex):
            return complex(x)
        return complex(x)

    def is_zero(self, x, scale: float = 1.0) -> bool:
        return abs(x) <= self.eps * max(scale, 1.0)

    def conjugate(self, x) -> complex:
        return complex(x).conjugate()

    def to_complex(self, x) -> complex:
        return complex(x)

    def root_of_unity(self, turns) -> complex:
        return cmath.exp(TWO_PI_I * float(Fraction(turns)))

    def two_pi_i_power(self, w: int) -> complex:
        return TWO_PI_I ** w

    def gamma_value(self, alpha, k: int) -> complex:
        return _gamma_derivative(float(alpha), k)


def _gamma_derivative(alpha: float, k: int) -> complex:
    """k-th derivative of the gamma function at alpha (float, via mpmath)."""
    import mpmath

    with mpmath.workdps(40):
        if k == 0:
            v = mpmath.gamma(alpha)
        else:
            v = mpmath.diff(mpmath.gamma, alpha, k)
        return complex(v)


def precision_to_eps(bits: int) -> float:
    """Map a --precision bit count to the float backend tolerance."""
    return max(2.0 ** (1 - bits), 1e-15)
