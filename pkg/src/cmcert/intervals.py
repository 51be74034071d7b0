"""Outward-rounded interval arithmetic.

Endpoints are doubles.  Every arithmetic operation widens its result by one
ulp per endpoint (two for libm calls), so the returned interval always
contains the exact real result of the operation applied to any reals inside
the operands.  This is the cheap substitute for directed rounding modes; the
slack it introduces (~1e-16 relative) is negligible against every tolerance
certified in this package.

Exact rationals enter through :meth:`Interval.from_fraction`, which decides
the rounding direction by exact comparison, so rational data loses nothing
beyond one ulp.  Certified strict inequalities against rational thresholds
should go through :meth:`Interval.strictly_less` / ``strictly_greater``,
which compare exactly via ``Fraction``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

Rational = Union[int, Fraction]
Scalar = Union[int, float, Fraction]

_INF = math.inf


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval endpoint is NaN")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    # -- constructors -------------------------------------------------

    @staticmethod
    def point(x: Scalar) -> "Interval":
        if isinstance(x, Fraction):
            return Interval.from_fraction(x)
        x = float(x)
        return Interval(x, x)

    @staticmethod
    def from_fraction(q: Rational) -> "Interval":
        q = Fraction(q)
        f = float(q)  # correctly rounded
        if math.isinf(f):
            raise OverflowError("rational too large for double endpoints")
        exact = Fraction(f)
        lo = f if exact <= q else _down(f)
        hi = f if exact >= q else _up(f)
        return Interval(lo, hi)

    @staticmethod
    def from_fractions(lo: Rational, hi: Rational) -> "Interval":
        a = Interval.from_fraction(lo)
        b = Interval.from_fraction(hi)
        return Interval(a.lo, b.hi)

    @staticmethod
    def hull(items: Iterable["Interval"]) -> "Interval":
        items = list(items)
        if not items:
            raise ValueError("hull of nothing")
        return Interval(min(i.lo for i in items), max(i.hi for i in items))

    # -- coercion ------------------------------------------------------

    @staticmethod
    def _coerce(x: Union["Interval", Scalar]) -> "Interval":
        return x if isinstance(x, Interval) else Interval.point(x)

    # -- queries -------------------------------------------------------

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: Scalar) -> bool:
        if isinstance(x, Fraction):
            return Fraction(self.lo) <= x <= Fraction(self.hi)
        return self.lo <= x <= self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def sup_abs(self) -> float:
        """Upper bound on sup |x| over the interval (exact endpoint max)."""
        return max(abs(self.lo), abs(self.hi))

    def inf_abs(self) -> float:
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    def strictly_less(self, q: Rational) -> bool:
        """Certified ``sup(self) < q`` by exact rational comparison."""
        return Fraction(self.hi) < Fraction(q)

    def strictly_greater(self, q: Rational) -> bool:
        return Fraction(self.lo) > Fraction(q)

    def leq(self, q: Rational) -> bool:
        return Fraction(self.hi) <= Fraction(q)

    # -- arithmetic ----------------------------------------------------

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other: Union["Interval", Scalar]) -> "Interval":
        o = Interval._coerce(other)
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    __radd__ = __add__

    def __sub__(self, other: Union["Interval", Scalar]) -> "Interval":
        return self + (-Interval._coerce(other))

    def __rsub__(self, other: Scalar) -> "Interval":
        return Interval._coerce(other) - self

    def __mul__(self, other: Union["Interval", Scalar]) -> "Interval":
        o = Interval._coerce(other)
        products = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(_down(min(products)), _up(max(products)))

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Interval", Scalar]) -> "Interval":
        o = Interval._coerce(other)
        if o.lo <= 0.0 <= o.hi:
            raise ZeroDivisionError("division by interval containing zero")
        quotients = (self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi)
        return Interval(_down(min(quotients)), _up(max(quotients)))

    def __rtruediv__(self, other: Scalar) -> "Interval":
        return Interval._coerce(other) / self

    def __pow__(self, n: int) -> "Interval":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers")
        if n == 0:
            return Interval(1.0, 1.0)
        if n % 2 == 0:
            # even powers depend on |x| only; tighter than repeated products
            m = self.sup_abs()
            hi = m
            lo = self.inf_abs()
            return Interval(_down(lo**n) if lo else 0.0, _up(hi**n))
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    def abs(self) -> "Interval":
        return Interval(self.inf_abs(), self.sup_abs())

    def sqrt(self) -> "Interval":
        if self.lo < 0.0:
            raise ValueError("sqrt of interval with negative part")
        return Interval(_down(math.sqrt(self.lo)), _up(math.sqrt(self.hi)))

    def exp(self) -> "Interval":
        # libm exp is faithful to ~1 ulp; widen by two to stay safe
        return Interval(_down(_down(math.exp(self.lo))), _up(_up(math.exp(self.hi))))

    def union(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def widen(self, eps: float) -> "Interval":
        if eps < 0:
            raise ValueError("negative widening")
        return Interval(_down(self.lo - eps), _up(self.hi + eps))

    def split(self, parts: int) -> list["Interval"]:
        """Cover of self by `parts` adjacent subintervals."""
        if parts < 1:
            raise ValueError("parts must be >= 1")
        cuts = [self.lo + (self.hi - self.lo) * k / parts for k in range(1, parts)]
        points = [self.lo, *cuts, self.hi]
        return [Interval(points[k], points[k + 1]) for k in range(parts)]

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


def isqrt_fraction(q: Rational) -> Interval:
    """Certified enclosure of sqrt(q) for a nonnegative rational q.

    The float endpoints are validated by exact squaring, so the result is
    independent of libm rounding behaviour.
    """
    q = Fraction(q)
    if q < 0:
        raise ValueError("sqrt of negative rational")
    if q == 0:
        return Interval(0.0, 0.0)
    r = math.sqrt(float(q))
    lo, hi = _down(_down(r)), _up(_up(r))
    while lo > 0 and Fraction(lo) ** 2 > q:
        lo = _down(lo)
    while Fraction(hi) ** 2 < q:
        hi = _up(hi)
    return Interval(lo, hi)


@dataclass(frozen=True)
class Box:
    """Axis-aligned product of intervals; nonempty in every coordinate."""

    ivs: tuple[Interval, ...]

    def __post_init__(self) -> None:
        if not self.ivs:
            raise ValueError("zero-dimensional box")

    @staticmethod
    def of(*ivs: Interval) -> "Box":
        return Box(tuple(ivs))

    @staticmethod
    def centered(radii: Sequence[Scalar]) -> "Box":
        ivs = []
        for r in radii:
            i = Interval.point(r)
            ivs.append(Interval(-i.hi, i.hi))
        return Box(tuple(ivs))

    @property
    def dim(self) -> int:
        return len(self.ivs)

    def contains_point(self, p: Sequence[Scalar]) -> bool:
        if len(p) != self.dim:
            raise ValueError("dimension mismatch")
        return all(iv.contains(x) for iv, x in zip(self.ivs, p))

    def contains_box(self, other: "Box") -> bool:
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return all(a.contains_interval(b) for a, b in zip(self.ivs, other.ivs))

    def scale(self, factor: Scalar) -> "Box":
        f = Interval.point(factor)
        return Box(tuple(iv * f for iv in self.ivs))

    def cells(self, splits: int) -> Iterable[tuple[Interval, ...]]:
        """Iterate over the uniform `splits`-per-axis subdivision."""
        axes = [iv.split(splits) for iv in self.ivs]
        index = [0] * self.dim
        while True:
            yield tuple(axes[d][index[d]] for d in range(self.dim))
            d = 0
            while d < self.dim:
                index[d] += 1
                if index[d] < splits:
                    break
                index[d] = 0
                d += 1
            if d == self.dim:
                return

    def sample(self, rng) -> tuple[float, ...]:
        return tuple(rng.uniform(iv.lo, iv.hi) for iv in self.ivs)

    def __repr__(self) -> str:
        return "Box(" + " x ".join(map(repr, self.ivs)) + ")"
