"""C^3 cutoff functions with certified derivative bounds.

The scalar cutoff is the identity on [a1, a2], constant outside
[a1 - d1, a2 + d2], and joins the two regimes with degree-6 ramps whose
value and first three derivatives match at all four knots.  Its derivative
stays in [0, 1], so composing a polynomial nonlinearity with a product of
per-axis cutoffs reduces derivative bounds to polynomial range bounds over
the (half-ramp widened) core box.

Branch polynomials are rational, so knot matching and the phi'' supremum are
exact; the phi''' supremum has irrational critical points and is certified
by root isolation plus interval evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

from .intervals import Box, Interval
from .jets import TaylorJet, jet_eval_interval

Rational = Union[int, Fraction]


@dataclass(frozen=True)
class CutoffSpec:
    a1: Fraction
    d1: Fraction
    a2: Fraction
    d2: Fraction

    def __post_init__(self) -> None:
        for name in ("a1", "d1", "a2", "d2"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if self.d1 <= 0 or self.d2 <= 0:
            raise ValueError("ramp widths must be positive")
        if self.a1 > self.a2:
            raise ValueError("left knee exceeds right knee")

    @property
    def lower_plateau(self) -> Fraction:
        return self.a1 - self.d1 / 2

    @property
    def upper_plateau(self) -> Fraction:
        return self.a2 + self.d2 / 2

    def range_interval(self) -> Interval:
        return Interval.from_fractions(self.lower_plateau, self.upper_plateau)

    def to_json(self) -> str:
        return json.dumps(
            {"a1": str(self.a1), "d1": str(self.d1),
             "a2": str(self.a2), "d2": str(self.d2)}
        )

    @staticmethod
    def from_json(text: str) -> "CutoffSpec":
        d = json.loads(text)
        return CutoffSpec(
            Fraction(d["a1"]), Fraction(d["d1"]), Fraction(d["a2"]), Fraction(d["d2"])
        )


def _ramp_value(t: Fraction, delta: Fraction, sign: int) -> Fraction:
    # sign +1: left ramp  x + t^6/D^5 + 3 t^5/D^4 + 5 t^4 / (2 D^3), t = x - a1
    # sign -1: right ramp x - t^6/D^5 + 3 t^5/D^4 - 5 t^4 / (2 D^3), t = x - a2
    return (
        sign * t**6 / delta**5 + 3 * t**5 / delta**4 + sign * 5 * t**4 / (2 * delta**3)
    )


def _ramp_derivative(t: Fraction, delta: Fraction, sign: int, order: int) -> Fraction:
    if order == 1:
        return sign * 6 * t**5 / delta**5 + 15 * t**4 / delta**4 + sign * 10 * t**3 / delta**3
    if order == 2:
        return sign * 30 * t**4 / delta**5 + 60 * t**3 / delta**4 + sign * 30 * t**2 / delta**3
    if order == 3:
        return sign * 120 * t**3 / delta**5 + 180 * t**2 / delta**4 + sign * 60 * t / delta**3
    raise ValueError("derivative order must be 1..3")


def eval_cutoff(spec: CutoffSpec, x: Rational, order: int = 0) -> Fraction:
    """Exact value (order 0) or derivative (order 1..3) of the cutoff at x."""
    x = Fraction(x)
    if not 0 <= order <= 3:
        raise ValueError("order must be 0..3")
    if x <= spec.a1 - spec.d1:
        return spec.lower_plateau if order == 0 else Fraction(0)
    if x >= spec.a2 + spec.d2:
        return spec.upper_plateau if order == 0 else Fraction(0)
    if spec.a1 <= x <= spec.a2:
        if order == 0:
            return x
        return Fraction(1) if order == 1 else Fraction(0)
    if x < spec.a1:
        t, delta, sign = x - spec.a1, spec.d1, 1
    else:
        t, delta, sign = x - spec.a2, spec.d2, -1
    if order == 0:
        return x + _ramp_value(t, delta, sign)
    base = Fraction(1) if order == 1 else Fraction(0)
    return base + _ramp_derivative(t, delta, sign, order)


def eval_cutoff_float(spec: CutoffSpec, x: float, order: int = 0) -> float:
    return float(eval_cutoff(spec, Fraction(x), order))


def knot_mismatches(spec: CutoffSpec) -> list[Fraction]:
    """One-sided value/derivative gaps at the four knots (all zero iff C^3)."""
    gaps = []
    for knot in (spec.a1 - spec.d1, spec.a1, spec.a2, spec.a2 + spec.d2):
        for order in range(4):
            left = _branch_limit(spec, knot, order, from_left=True)
            right = _branch_limit(spec, knot, order, from_left=False)
            gaps.append(left - right)
    return gaps


def _branch_limit(spec: CutoffSpec, x: Fraction, order: int, from_left: bool) -> Fraction:
    # one-sided limits of polynomial branches are branch values at the knot
    if from_left:
        if x <= spec.a1 - spec.d1:
            return spec.lower_plateau if order == 0 else Fraction(0)
        if x <= spec.a1:
            t = x - spec.a1
            if order == 0:
                return x + _ramp_value(t, spec.d1, 1)
            return (Fraction(1) if order == 1 else Fraction(0)) + _ramp_derivative(
                t, spec.d1, 1, order
            )
        if x <= spec.a2:
            if order == 0:
                return x
            return Fraction(1) if order == 1 else Fraction(0)
        if x <= spec.a2 + spec.d2:
            t = x - spec.a2
            if order == 0:
                return x + _ramp_value(t, spec.d2, -1)
            return (Fraction(1) if order == 1 else Fraction(0)) + _ramp_derivative(
                t, spec.d2, -1, order
            )
        return spec.upper_plateau if order == 0 else Fraction(0)
    # from the right: mirror the case split
    if x >= spec.a2 + spec.d2:
        return spec.upper_plateau if order == 0 else Fraction(0)
    if x >= spec.a2:
        t = x - spec.a2
        if order == 0:
            return x + _ramp_value(t, spec.d2, -1)
        return (Fraction(1) if order == 1 else Fraction(0)) + _ramp_derivative(
            t, spec.d2, -1, order
        )
    if x >= spec.a1:
        if order == 0:
            return x
        return Fraction(1) if order == 1 else Fraction(0)
    if x >= spec.a1 - spec.d1:
        t = x - spec.a1
        if order == 0:
            return x + _ramp_value(t, spec.d1, 1)
        return (Fraction(1) if order == 1 else Fraction(0)) + _ramp_derivative(
            t, spec.d1, 1, order
        )
    return spec.lower_plateau if order == 0 else Fraction(0)


def cutoff_derivative_sup(spec: CutoffSpec) -> dict[int, Interval]:
    """Certified suprema of |phi'|, |phi''|, |phi'''|.

    In ramp-local coordinates u = t/Delta in [-1, 0] (left; the right ramp
    mirrors):

    * phi'   = 1 + 6u^5 + 15u^4 + 10u^3, monotone on [-1, 0] with range
      [0, 1]: sup = 1 exactly;
    * phi''  = 30 u^2 (u+1)^2 / Delta, maximized at u = -1/2:
      sup = 15 / (8 Delta) exactly;
    * phi''' = 60 u (2u+1)(u+1) / Delta^2 with irrational critical points
      (roots of 6u^2 + 6u + 1): certified by bisection isolation + interval
      evaluation.
    """
    out = {1: Interval.from_fractions(1, 1)}
    sup2 = max(
        Fraction(15, 8) / spec.d1,
        Fraction(15, 8) / spec.d2,
    )
    out[2] = Interval.from_fraction(sup2)

    # |phi'''| on one ramp: 60 |u (2u+1)(u+1)| / Delta^2 over u in [-1, 0]
    cubic_sup = _sup_abs_cubic()
    candidates = [cubic_sup * Interval.from_fraction(60 / spec.d1**2),
                  cubic_sup * Interval.from_fraction(60 / spec.d2**2)]
    out[3] = Interval(0.0, max(c.hi for c in candidates))
    return out


def _sup_abs_cubic() -> Interval:
    """sup over [-1,0] of |u (2u+1)(u+1)| = |2u^3 + 3u^2 + u|, certified."""
    p = TaylorJet(0, 1, 3, {(3,): Fraction(2), (2,): Fraction(3), (1,): Fraction(1)})
    # critical points: roots of 6u^2+6u+1 inside [-1,0]; isolate by bisection
    def q(u: Fraction) -> Fraction:
        return 6 * u * u + 6 * u + 1

    pieces = []
    for lo, hi in ((Fraction(-1), Fraction(-1, 2)), (Fraction(-1, 2), Fraction(0))):
        a, b = lo, hi
        if q(a) * q(b) > 0:
            continue
        for _ in range(60):
            mid = (a + b) / 2
            if q(a) * q(mid) <= 0:
                b = mid
            else:
                a = mid
        box = Box.of(Interval.from_fractions(a, b))
        pieces.append(jet_eval_interval(p, box, 1).abs())
    for endpoint in (Fraction(-1), Fraction(-1, 2), Fraction(0)):
        pieces.append(
            Interval.from_fraction(abs(p.eval_fraction((endpoint,))))
        )
    return Interval(0.0, max(c.hi for c in pieces))


def bound_composed_nonlinearity(
    g_jets: Sequence[TaylorJet],
    specs: Sequence[CutoffSpec],
    param_ranges: Sequence[Interval] = (),
    subdivisions: int = 32,
) -> Interval:
    """Certified bound on sup ||D(g o Phi)|| in the row-sum (infinity) norm.

    Phi applies one cutoff per phase axis; by the chain rule and phi' in
    [0, 1], the derivative bound reduces to the supremum of the row sums of
    |Dg| over the cutoff range box (parameters range over `param_ranges`).
    """
    if not g_jets:
        raise ValueError("no components")
    k = g_jets[0].num_params
    m = g_jets[0].num_phase
    if len(specs) != m:
        raise ValueError(f"need {m} cutoff specs, got {len(specs)}")
    if len(param_ranges) != k:
        raise ValueError(f"need {k} parameter ranges, got {len(param_ranges)}")

    box = Box(tuple(param_ranges) + tuple(s.range_interval() for s in specs))
    worst = Interval(0.0, 0.0)
    for gi in g_jets:
        partials = [gi.derivative(k + j) for j in range(m)]
        row = Interval(0.0, 0.0)
        for pj in partials:
            if pj.is_zero():
                continue
            rng = jet_eval_interval(pj, box, subdivisions)
            row = row + rng.abs()
        if row.hi > worst.hi:
            worst = row
    return Interval(0.0, worst.hi)
