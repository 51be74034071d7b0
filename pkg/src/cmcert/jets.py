"""Exact truncated multivariate Taylor polynomials (jets) over the rationals.

A jet has two variable blocks: ``num_params`` parameter variables followed by
``num_phase`` phase variables.  Coefficients map multi-index tuples (length
``num_params + num_phase``) to ``Fraction``; absent indices are zero, stored
indices never exceed the total-degree truncation ``max_order``.  All
arithmetic is exact -- no rounding ever touches a coefficient.

The solver in :mod:`cmcert.conjugacy` iterates over *graded* slices of a jet.
Two gradings appear: plain total degree, and the weighted degree in which a
parameter variable counts twice (the scaling regime where a phase variable
behaves like the square root of the parameter).  Weights are passed
explicitly where they matter; the storage layer only enforces the
total-degree cap.

Serialization follows the schema
``{"vars": {"params": k, "phase": m}, "order": N,
"terms": [{"exps": [...], "num": "...", "den": "..."}]}``
with decimal-string numerators/denominators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as iter_product
from typing import Callable, Iterable, Mapping, Sequence, Union

from .intervals import Box, Interval

Index = tuple[int, ...]
Rational = Union[int, Fraction]

DEFAULT_SUBDIVISIONS = 8


def monomials_of_degree(nvars: int, degree: int) -> Iterable[Index]:
    """All multi-indices in `nvars` variables with total degree `degree`."""
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree + 1):
        for rest in monomials_of_degree(nvars - 1, degree - first):
            yield (first, *rest)


def monomials_of_weighted_degree(
    nvars: int, degree: int, weights: Sequence[int]
) -> Iterable[Index]:
    """Multi-indices with weighted degree exactly `degree`."""
    if nvars == 0:
        if degree == 0:
            yield ()
        return
    w = weights[0]
    for first in range(degree // w + 1):
        for rest in monomials_of_weighted_degree(
            nvars - 1, degree - w * first, weights[1:]
        ):
            yield (first, *rest)


@dataclass(frozen=True)
class TaylorJet:
    num_params: int
    num_phase: int
    max_order: int
    coeffs: Mapping[Index, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.num_params < 0 or self.num_phase < 0 or self.max_order < 0:
            raise ValueError("negative jet geometry")
        clean: dict[Index, Fraction] = {}
        for idx, c in self.coeffs.items():
            idx = tuple(int(e) for e in idx)
            if len(idx) != self.nvars:
                raise ValueError(f"multi-index {idx} has wrong length")
            if any(e < 0 for e in idx):
                raise ValueError(f"negative exponent in {idx}")
            if sum(idx) > self.max_order:
                raise ValueError(
                    f"multi-index {idx} exceeds truncation order {self.max_order}"
                )
            c = Fraction(c)
            if c != 0:
                clean[idx] = c
        object.__setattr__(self, "coeffs", clean)

    # -- constructors ----------------------------------------------------

    @staticmethod
    def zero(num_params: int, num_phase: int, max_order: int) -> "TaylorJet":
        return TaylorJet(num_params, num_phase, max_order, {})

    @staticmethod
    def constant(
        num_params: int, num_phase: int, max_order: int, value: Rational
    ) -> "TaylorJet":
        n = num_params + num_phase
        return TaylorJet(num_params, num_phase, max_order, {(0,) * n: Fraction(value)})

    @staticmethod
    def variable(
        num_params: int, num_phase: int, max_order: int, var: int
    ) -> "TaylorJet":
        n = num_params + num_phase
        if not 0 <= var < n:
            raise ValueError(f"variable index {var} out of range")
        if max_order < 1:
            raise ValueError("order too small to hold a variable")
        idx = [0] * n
        idx[var] = 1
        return TaylorJet(num_params, num_phase, max_order, {tuple(idx): Fraction(1)})

    @staticmethod
    def monomial(
        num_params: int,
        num_phase: int,
        max_order: int,
        exps: Sequence[int],
        coeff: Rational = 1,
    ) -> "TaylorJet":
        return TaylorJet(num_params, num_phase, max_order, {tuple(exps): Fraction(coeff)})

    # -- basic queries -----------------------------------------------------

    @property
    def nvars(self) -> int:
        return self.num_params + self.num_phase

    def coeff(self, idx: Sequence[int]) -> Fraction:
        return self.coeffs.get(tuple(idx), Fraction(0))

    def is_zero(self) -> bool:
        return not self.coeffs

    def constant_term(self) -> Fraction:
        return self.coeff((0,) * self.nvars)

    def total_degree(self) -> int:
        return max((sum(i) for i in self.coeffs), default=0)

    def weighted_degree_of(self, idx: Index, weights: Sequence[int]) -> int:
        return sum(e * w for e, w in zip(idx, weights))

    def graded_part(self, degree: int, weights: Sequence[int] | None = None) -> "TaylorJet":
        """The homogeneous slice of the given (weighted) degree."""
        if weights is None:
            sel = {i: c for i, c in self.coeffs.items() if sum(i) == degree}
        else:
            sel = {
                i: c
                for i, c in self.coeffs.items()
                if self.weighted_degree_of(i, weights) == degree
            }
        return TaylorJet(self.num_params, self.num_phase, self.max_order, sel)

    def same_layout(self, other: "TaylorJet") -> bool:
        return (
            self.num_params == other.num_params and self.num_phase == other.num_phase
        )

    # -- ring operations ----------------------------------------------------

    def _require_layout(self, other: "TaylorJet") -> None:
        if not self.same_layout(other):
            raise ValueError("jet variable layouts differ")

    def __add__(self, other: Union["TaylorJet", Rational]) -> "TaylorJet":
        if not isinstance(other, TaylorJet):
            other = TaylorJet.constant(
                self.num_params, self.num_phase, self.max_order, other
            )
        self._require_layout(other)
        order = min(self.max_order, other.max_order)
        out: dict[Index, Fraction] = {
            i: c for i, c in self.coeffs.items() if sum(i) <= order
        }
        for i, c in other.coeffs.items():
            if sum(i) <= order:
                out[i] = out.get(i, Fraction(0)) + c
        return TaylorJet(self.num_params, self.num_phase, order, out)

    __radd__ = __add__

    def __neg__(self) -> "TaylorJet":
        return TaylorJet(
            self.num_params,
            self.num_phase,
            self.max_order,
            {i: -c for i, c in self.coeffs.items()},
        )

    def __sub__(self, other: Union["TaylorJet", Rational]) -> "TaylorJet":
        if not isinstance(other, TaylorJet):
            other = TaylorJet.constant(
                self.num_params, self.num_phase, self.max_order, other
            )
        return self + (-other)

    def __rsub__(self, other: Rational) -> "TaylorJet":
        return (-self) + other

    def scale(self, factor: Rational) -> "TaylorJet":
        f = Fraction(factor)
        return TaylorJet(
            self.num_params,
            self.num_phase,
            self.max_order,
            {i: c * f for i, c in self.coeffs.items()},
        )

    def __mul__(self, other: Union["TaylorJet", Rational]) -> "TaylorJet":
        if not isinstance(other, TaylorJet):
            return self.scale(other)
        self._require_layout(other)
        order = min(self.max_order, other.max_order)
        out: dict[Index, Fraction] = {}
        for ia, ca in self.coeffs.items():
            da = sum(ia)
            if da > order:
                continue
            for ib, cb in other.coeffs.items():
                if da + sum(ib) > order:
                    continue
                idx = tuple(a + b for a, b in zip(ia, ib))
                out[idx] = out.get(idx, Fraction(0)) + ca * cb
        return TaylorJet(self.num_params, self.num_phase, order, out)

    def __rmul__(self, other: Rational) -> "TaylorJet":
        return self.scale(other)

    def power(self, n: int, order: int | None = None) -> "TaylorJet":
        if n < 0:
            raise ValueError("negative power")
        order = self.max_order if order is None else order
        out = TaylorJet.constant(self.num_params, self.num_phase, order, 1)
        base = self.truncate(order)
        for _ in range(n):
            out = out * base
        return out

    def truncate(self, order: int) -> "TaylorJet":
        sel = {i: c for i, c in self.coeffs.items() if sum(i) <= order}
        return TaylorJet(self.num_params, self.num_phase, order, sel)

    def truncate_weighted(self, order: int, weights: Sequence[int]) -> "TaylorJet":
        """Drop monomials of weighted degree above `order`; keeps max_order."""
        sel = {
            i: c
            for i, c in self.coeffs.items()
            if self.weighted_degree_of(i, weights) <= order
        }
        return TaylorJet(self.num_params, self.num_phase, self.max_order, sel)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaylorJet):
            return NotImplemented
        return (
            self.same_layout(other)
            and dict(self.coeffs) == dict(other.coeffs)
        )

    def __hash__(self) -> int:
        return hash(
            (self.num_params, self.num_phase, tuple(sorted(self.coeffs.items())))
        )

    def __repr__(self) -> str:
        if not self.coeffs:
            return "TaylorJet(0)"
        names = [f"l{i}" for i in range(self.num_params)] + [
            f"x{i}" for i in range(self.num_phase)
        ]
        if self.num_params == 1:
            names[0] = "l"
        if self.num_phase == 1:
            names[self.num_params] = "x"
        parts = []
        for idx in sorted(self.coeffs, key=lambda i: (sum(i), i)):
            c = self.coeffs[idx]
            mono = "*".join(
                (n if e == 1 else f"{n}^{e}") for n, e in zip(names, idx) if e
            )
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return "TaylorJet(" + " + ".join(parts) + ")"

    # -- calculus ------------------------------------------------------------

    def derivative(self, var: int) -> "TaylorJet":
        """Exact partial derivative; truncation order drops by one."""
        if not 0 <= var < self.nvars:
            raise ValueError(f"variable index {var} out of range")
        out: dict[Index, Fraction] = {}
        for idx, c in self.coeffs.items():
            e = idx[var]
            if e == 0:
                continue
            new = list(idx)
            new[var] = e - 1
            out[tuple(new)] = c * e
        return TaylorJet(self.num_params, self.num_phase, max(self.max_order - 1, 0), out)

    def eval_fraction(self, point: Sequence[Rational]) -> Fraction:
        if len(point) != self.nvars:
            raise ValueError("dimension mismatch")
        pt = [Fraction(x) for x in point]
        total = Fraction(0)
        for idx, c in self.coeffs.items():
            term = c
            for x, e in zip(pt, idx):
                if e:
                    term *= x**e
            total += term
        return total

    def eval_float(self, point: Sequence[float]) -> float:
        if len(point) != self.nvars:
            raise ValueError("dimension mismatch")
        total = 0.0
        for idx, c in self.coeffs.items():
            term = float(c)
            for x, e in zip(point, idx):
                if e:
                    term *= x**e
            total += term
        return total

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        terms = [
            {
                "exps": list(idx),
                "num": str(c.numerator),
                "den": str(c.denominator),
            }
            for idx, c in sorted(self.coeffs.items())
        ]
        return {
            "vars": {"params": self.num_params, "phase": self.num_phase},
            "order": self.max_order,
            "terms": terms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(data: Mapping) -> "TaylorJet":
        coeffs = {
            tuple(t["exps"]): Fraction(int(t["num"]), int(t["den"]))
            for t in data["terms"]
        }
        return TaylorJet(
            data["vars"]["params"], data["vars"]["phase"], data["order"], coeffs
        )

    @staticmethod
    def from_json(text: str) -> "TaylorJet":
        return TaylorJet.from_dict(json.loads(text))


# -- composition ------------------------------------------------------------


def jet_compose(
    outer: TaylorJet,
    inners: Sequence[TaylorJet],
    order: int,
    allow_constant: bool = False,
) -> TaylorJet:
    """Composition outer(lambda, inner_1, ..., inner_m) truncated at `order`.

    Parameter variables of the outer jet pass through unchanged; its phase
    variables are substituted by the inner jets, which must share one variable
    layout.  Inner jets need zero constant term unless `allow_constant` is
    set (a nonzero constant shift is only sound because the outer jet is a
    finite polynomial).
    """
    if len(inners) != outer.num_phase:
        raise ValueError(
            f"outer jet has {outer.num_phase} phase variables, got {len(inners)} inners"
        )
    if not inners:
        raise ValueError("composition needs at least one inner jet")
    first = inners[0]
    for q in inners:
        if not first.same_layout(q):
            raise ValueError("inner jets have mismatched variable layouts")
    if first.num_params != outer.num_params:
        raise ValueError("outer and inner jets disagree on parameter count")
    if not allow_constant:
        for j, q in enumerate(inners):
            if q.constant_term() != 0:
                raise ValueError(
                    f"inner jet {j} has nonzero constant term; "
                    "pass allow_constant=True to permit the shift"
                )

    k = outer.num_params
    np_, nph = first.num_params, first.num_phase
    one = TaylorJet.constant(np_, nph, order, 1)

    # power tables for each inner jet, built lazily
    powers: list[list[TaylorJet]] = [[one] for _ in inners]

    def inner_power(j: int, e: int) -> TaylorJet:
        table = powers[j]
        while len(table) <= e:
            table.append(table[-1] * inners[j].truncate(order))
        return table[e]

    out = TaylorJet.zero(np_, nph, order)
    for idx, c in outer.coeffs.items():
        lam_exps, phase_exps = idx[:k], idx[k:]
        term = TaylorJet.constant(np_, nph, order, c)
        lam_idx = tuple(lam_exps) + (0,) * nph
        if any(lam_exps):
            if sum(lam_exps) > order:
                continue
            term = term * TaylorJet.monomial(np_, nph, order, lam_idx)
        for j, e in enumerate(phase_exps):
            if e:
                term = term * inner_power(j, e)
        out = out + term
    return out


def jet_compose_weighted(
    outer: TaylorJet,
    inners: Sequence[TaylorJet],
    order: int,
    weights: Sequence[int],
    allow_constant: bool = False,
) -> TaylorJet:
    """Composition truncated at a *weighted* degree instead of total degree.

    Total-degree work happens at `order` (weights >= 1 make weighted degree
    dominate total degree), then monomials above the weighted cutoff drop.
    """
    raw = jet_compose(outer, inners, order, allow_constant)
    return raw.truncate_weighted(order, weights)


# -- interval evaluation ------------------------------------------------------


def jet_eval_interval(
    p: TaylorJet,
    domain: Box,
    subdivisions: int = DEFAULT_SUBDIVISIONS,
) -> Interval:
    """Interval containing the range of p over the box.

    Naive per-monomial interval evaluation, hulled over a uniform subdivision
    of the domain (`subdivisions` pieces per axis).  Containment of the true
    range is guaranteed; tightness improves with subdivision.
    """
    if domain.dim != p.nvars:
        raise ValueError(
            f"domain dimension {domain.dim} != jet variables {p.nvars}"
        )
    if subdivisions < 1:
        raise ValueError("subdivisions must be >= 1")
    if p.is_zero():
        return Interval(0.0, 0.0)

    pieces = []
    for cell in domain.cells(subdivisions):
        pieces.append(_eval_on_cell(p, cell))
    return Interval.hull(pieces)


def _eval_on_cell(p: TaylorJet, cell: Sequence[Interval]) -> Interval:
    max_exp = [0] * p.nvars
    for idx in p.coeffs:
        for v, e in enumerate(idx):
            max_exp[v] = max(max_exp[v], e)
    pows: list[list[Interval]] = []
    for v, iv in enumerate(cell):
        table = [Interval(1.0, 1.0)]
        for e in range(1, max_exp[v] + 1):
            table.append(iv**e if e % 2 == 0 else table[-1] * iv)
        pows.append(table)
    total = Interval(0.0, 0.0)
    for idx, c in p.coeffs.items():
        term = Interval.from_fraction(c)
        for v, e in enumerate(idx):
            if e:
                term = term * pows[v][e]
        total = total + term
    return total


def jet_sup_abs(
    p: TaylorJet, domain: Box, subdivisions: int = DEFAULT_SUBDIVISIONS
) -> Interval:
    """Certified upper bound on sup |p| over the box (as an interval)."""
    rng = jet_eval_interval(p, domain, subdivisions)
    return rng.abs()
