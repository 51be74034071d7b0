"""Spectral splittings of rational matrices and the parameter extension.

``split_spectrum`` classifies the spectrum of a rational matrix into center
(|z| = 1), unstable (|z| > 1) and stable (|z| < 1) parts, builds rational
invariant subspaces for the three classes, and records exact block operator
norms in the max-norm convention (infinity norm per block, maximum across
blocks).  Exact rational eigenvalues are peeled off with the rational root
theorem; what remains is factored over Q and classified through certified
root enclosures, refined until each enclosure clears the unit circle.  An
enclosure that keeps straddling the circle raises ``IndeterminateSplitting``.

``extend_with_parameters`` builds the parameter-extended operator
``[[Id, 0], [C, A]]`` together with its invariant subspaces: the center
subspace picks up the directions ``(e_i, x_i)`` where ``x_i`` solves
``C_i + A x_i = x_i + y_i`` with ``y_i`` in the center block, solved exactly.
``select_norm_scale`` then chooses the parameter-norm scale M (a power of
two) making the extended block norm bounds compatible with the rate
conditions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

from . import linalg as la
from .intervals import Interval
from .linalg import Matrix, Rational, Vector

BLOCK_KEYS = ("c", "u", "s")


class IndeterminateSplitting(ValueError):
    """Eigenvalue enclosure straddles the unit circle and cannot be refined."""


class ResonantParameterExtension(ValueError):
    """Id - A_u or Id - A_s singular: the parameter directions resonate."""


@dataclass(frozen=True)
class EigenvalueInfo:
    cls: str                      # 'c', 'u' or 's'
    exact: Optional[Fraction]     # rational eigenvalue, if it is one
    modulus: Interval             # certified enclosure of |z|
    multiplicity: int


@dataclass(frozen=True)
class LinearSplitting:
    dim: int
    A: Matrix                     # original coordinates
    change_of_basis: Matrix       # T with T A T^-1 block diagonal
    A_diag: Matrix                # T A T^-1
    blocks: dict[str, tuple[int, ...]]   # new-coordinate index sets
    eigenvalues: tuple[EigenvalueInfo, ...]
    norm_bounds_only: bool = False  # True when norms are certified upper bounds

    # -- block accessors ----------------------------------------------

    def block_matrix(self, key: str) -> Matrix:
        idx = self.blocks[key]
        return la.submatrix(self.A_diag, idx, idx)

    def block_dim(self, key: str) -> int:
        return len(self.blocks[key])

    # -- exact norms (infinity norm per block) -------------------------

    def norm(self, key: str) -> Fraction:
        idx = self.blocks[key]
        if not idx:
            return Fraction(0)
        return la.inf_norm(self.block_matrix(key))

    def norm_inv(self, key: str) -> Fraction:
        idx = self.blocks[key]
        if not idx:
            return Fraction(0)
        return la.inf_norm(la.inverse(self.block_matrix(key)))

    @property
    def norms(self) -> dict[str, Interval]:
        out = {}
        for key in BLOCK_KEYS:
            out[f"A_{key}"] = Interval.from_fraction(self.norm(key))
        for key in ("c", "u"):
            if self.blocks[key]:
                out[f"A_{key}_inv"] = Interval.from_fraction(self.norm_inv(key))
        return out

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "A": _mat_to_json(self.A),
            "change_of_basis": _mat_to_json(self.change_of_basis),
            "blocks": {k: list(v) for k, v in self.blocks.items()},
            "norms": {k: [v.lo, v.hi] for k, v in self.norms.items()},
            "eigenvalues": [
                {
                    "class": e.cls,
                    "exact": str(e.exact) if e.exact is not None else None,
                    "modulus": [e.modulus.lo, e.modulus.hi],
                    "multiplicity": e.multiplicity,
                }
                for e in self.eigenvalues
            ],
        }


def _mat_to_json(m: Matrix) -> list[list[str]]:
    return [[str(x) for x in row] for row in m]


def matrix_from_json(rows: Sequence[Sequence[Union[str, int]]]) -> Matrix:
    return la.mat([[Fraction(str(x)) for x in row] for row in rows])


# -- spectrum classification --------------------------------------------------


def _classify_modulus(mod: Interval) -> Optional[str]:
    if mod.strictly_less(1):
        return "s"
    if mod.strictly_greater(1):
        return "u"
    return None


def _classify_rational(r: Fraction) -> str:
    a = abs(r)
    if a == 1:
        return "c"
    return "u" if a > 1 else "s"


def _modulus_interval_rational(r: Fraction) -> Interval:
    return Interval.from_fraction(abs(r))


def _classify_residual_factor(factor_coeffs: list[Fraction], max_refine: int = 80):
    """Classify all roots of an irreducible-over-Q factor.

    Returns (class, [modulus intervals]).  Raises IndeterminateSplitting if
    any root enclosure cannot be pushed off the unit circle.
    """
    deg = len(factor_coeffs) - 1
    # quadratic x^2 + b x + c with c == 1 and no real roots: conjugate pair
    # on the unit circle (product of the pair is c)
    if deg == 2:
        b = factor_coeffs[1] / factor_coeffs[0]
        c = factor_coeffs[2] / factor_coeffs[0]
        disc = b * b - 4 * c
        if disc < 0 and c == 1:
            return "c", [Interval(1.0, 1.0), Interval(1.0, 1.0)]

    import sympy  # deferred: pulled in only for irrational spectra

    x = sympy.Symbol("x")
    poly = sympy.Poly(
        sum(sympy.Rational(c) * x ** (deg - i) for i, c in enumerate(factor_coeffs)),
        x,
    )
    classes = set()
    moduli = []
    for root in poly.all_roots():
        interval = root._get_interval()
        cls = None
        for _ in range(max_refine):
            mod = _modulus_from_isolation(interval, root.is_real)
            cls = _classify_modulus(mod)
            if cls is not None:
                break
            interval = interval.refine()
        if cls is None:
            raise IndeterminateSplitting(
                f"eigenvalue enclosure {mod} straddles the unit circle"
            )
        classes.add(cls)
        moduli.append(mod)
    if len(classes) != 1:
        raise IndeterminateSplitting(
            "irreducible characteristic factor mixes spectral classes; "
            "no rational invariant splitting exists"
        )
    return classes.pop(), moduli


def _modulus_from_isolation(interval, is_real: bool) -> Interval:
    if is_real:
        a, b = Fraction(interval.a), Fraction(interval.b)
        lo = min(abs(a), abs(b)) if a * b > 0 else Fraction(0)
        hi = max(abs(a), abs(b))
        return Interval.from_fractions(lo, hi)
    ax, bx = Fraction(interval.ax), Fraction(interval.bx)
    ay, by = Fraction(interval.ay), Fraction(interval.by)
    lo_x = Fraction(0) if ax <= 0 <= bx else min(abs(ax), abs(bx))
    lo_y = Fraction(0) if ay <= 0 <= by else min(abs(ay), abs(by))
    hi_sq = max(abs(ax), abs(bx)) ** 2 + max(abs(ay), abs(by)) ** 2
    lo_sq = lo_x**2 + lo_y**2
    from .intervals import isqrt_fraction

    return Interval(isqrt_fraction(lo_sq).lo, isqrt_fraction(hi_sq).hi)


def _poly_mul(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _poly_divide(num: list[Fraction], den: list[Fraction]) -> list[Fraction]:
    num = list(num)
    out = []
    while len(num) >= len(den):
        f = num[0] / den[0]
        out.append(f)
        for i in range(len(den)):
            num[i] -= f * den[i]
        assert num[0] == 0
        num = num[1:]
    if any(c != 0 for c in num):
        raise ArithmeticError("inexact polynomial division")
    return out


def split_spectrum(A: Sequence[Sequence[Rational]]) -> LinearSplitting:
    """Certified center/unstable/stable splitting of a square rational matrix."""
    A = la.mat(A)
    n = len(A)
    if n == 0 or len(A[0]) != n:
        raise ValueError("split_spectrum needs a square matrix")

    chi = la.charpoly(A)
    rational = la.rational_roots(chi)

    class_polys: dict[str, list[Fraction]] = {}
    eig_infos: list[EigenvalueInfo] = []
    residual = list(chi)
    for root, mult in rational:
        cls = _classify_rational(root)
        lin = [Fraction(1), -root]
        for _ in range(mult):
            residual = _poly_divide(residual, lin)
            class_polys[cls] = _poly_mul(class_polys.get(cls, [Fraction(1)]), lin)
        eig_infos.append(
            EigenvalueInfo(cls, root, _modulus_interval_rational(root), mult)
        )

    if len(residual) > 1:
        import sympy

        x = sympy.Symbol("x")
        deg = len(residual) - 1
        poly = sympy.Poly(
            sum(sympy.Rational(c) * x ** (deg - i) for i, c in enumerate(residual)), x
        )
        _, factors = poly.factor_list()
        for fac, mult in factors:
            fac_coeffs = [Fraction(str(c)) for c in fac.all_coeffs()]
            cls, moduli = _classify_residual_factor(fac_coeffs)
            for _ in range(mult):
                class_polys[cls] = _poly_mul(
                    class_polys.get(cls, [Fraction(1)]), fac_coeffs
                )
            eig_infos.append(
                EigenvalueInfo(cls, None, Interval.hull(moduli), mult * len(moduli))
            )

    # invariant subspace per class: kernel of p_cls(A)
    basis_cols: list[Vector] = []
    blocks: dict[str, tuple[int, ...]] = {}
    offset = 0
    for cls in BLOCK_KEYS:
        p = class_polys.get(cls)
        if p is None:
            blocks[cls] = ()
            continue
        pa = _poly_of_matrix(p, A)
        kernel = la.nullspace(pa)
        expected = len(p) - 1
        if len(kernel) != expected:
            raise IndeterminateSplitting(
                f"class '{cls}' kernel has dimension {len(kernel)}, expected {expected}"
            )
        blocks[cls] = tuple(range(offset, offset + expected))
        basis_cols.extend(kernel)
        offset += expected

    t_inv = la.transpose(la.mat(basis_cols))
    T = la.inverse(t_inv)
    A_diag = la.mat_mul(T, la.mat_mul(A, t_inv))
    _assert_block_diagonal(A_diag, blocks)

    return LinearSplitting(
        dim=n,
        A=A,
        change_of_basis=T,
        A_diag=A_diag,
        blocks=blocks,
        eigenvalues=tuple(eig_infos),
    )


def splitting_from_diagonal(A_diag: Sequence[Sequence[Rational]],
                            blocks: dict[str, Sequence[int]]) -> LinearSplitting:
    """Wrap an already block-diagonal matrix as a splitting (T = Id)."""
    A_diag = la.mat(A_diag)
    n = len(A_diag)
    blocks_t = {k: tuple(blocks.get(k, ())) for k in BLOCK_KEYS}
    _assert_block_diagonal(A_diag, blocks_t)
    infos = []
    for key in BLOCK_KEYS:
        for i in blocks_t[key]:
            infos.append(
                EigenvalueInfo(key, None, Interval.from_fraction(abs(A_diag[i][i]))
                               if _is_diagonal(A_diag) else Interval(0.0, float("inf")),
                               1)
            )
    return LinearSplitting(
        dim=n,
        A=A_diag,
        change_of_basis=la.identity(n),
        A_diag=A_diag,
        blocks=blocks_t,
        eigenvalues=tuple(infos),
    )


def _is_diagonal(m: Matrix) -> bool:
    return all(m[i][j] == 0 for i in range(len(m)) for j in range(len(m)) if i != j)


def _poly_of_matrix(coeffs: Sequence[Fraction], A: Matrix) -> Matrix:
    n = len(A)
    out = la.zeros(n, n)
    for c in coeffs:
        out = la.mat_add(la.mat_mul(out, A), la.mat_scale(la.identity(n), c))
    return out


def _assert_block_diagonal(A_diag: Matrix, blocks: dict[str, tuple[int, ...]]) -> None:
    owner = {}
    for key, idx in blocks.items():
        for i in idx:
            owner[i] = key
    n = len(A_diag)
    if sorted(owner) != list(range(n)):
        raise ValueError("blocks do not partition the coordinates")
    for i in range(n):
        for j in range(n):
            if owner[i] != owner[j] and A_diag[i][j] != 0:
                raise IndeterminateSplitting(
                    f"off-block entry A_diag[{i}][{j}] = {A_diag[i][j]} != 0"
                )


# -- rate conditions -----------------------------------------------------------


@dataclass(frozen=True)
class RateConditionEntry:
    label: str
    value: Interval
    passed: bool


@dataclass(frozen=True)
class RateConditionReport:
    order: int
    entries: tuple[RateConditionEntry, ...]
    plain_passed: bool      # condition with per-degree products (all 1 <= d <= n)
    parameter_passed: bool  # condition with max{1, .}^n products

    def to_json(self) -> str:
        return json.dumps(
            {
                "order": self.order,
                "plain_passed": self.plain_passed,
                "parameter_passed": self.parameter_passed,
                "entries": [
                    {"label": e.label, "value": [e.value.lo, e.value.hi],
                     "passed": e.passed}
                    for e in self.entries
                ],
            }
        )


def check_rate_conditions(s: LinearSplitting, n: int) -> RateConditionReport:
    """Certified rate-condition report for truncation order n (n >= 2).

    The plain family requires  ||A_c^-1||^d ||A_s|| < 1  and
    ||A_u^-1|| ||A_c||^d < 1  for every 1 <= d <= n; the parameter family
    replaces the center norms by max{1, .} and checks at d = n only.
    Missing blocks make their conditions vacuous.
    """
    if n < 2:
        raise ValueError("rate conditions need n >= 2")
    nc, ncinv = s.norm("c"), (s.norm_inv("c") if s.blocks["c"] else Fraction(0))
    ns = s.norm("s")
    nuinv = s.norm_inv("u") if s.blocks["u"] else Fraction(0)

    entries: list[RateConditionEntry] = []
    plain_ok = True
    for d in range(1, n + 1):
        v1 = ncinv**d * ns
        ok1 = v1 < 1
        entries.append(
            RateConditionEntry(
                f"||A_c^-1||^{d} ||A_s||", Interval.from_fraction(v1), ok1
            )
        )
        v2 = nuinv * nc**d
        ok2 = v2 < 1
        entries.append(
            RateConditionEntry(
                f"||A_u^-1|| ||A_c||^{d}", Interval.from_fraction(v2), ok2
            )
        )
        plain_ok = plain_ok and ok1 and ok2

    v1 = max(Fraction(1), ncinv) ** n * ns
    v2 = nuinv * max(Fraction(1), nc) ** n
    ok1, ok2 = v1 < 1, v2 < 1
    entries.append(
        RateConditionEntry(
            f"max{{1,||A_c^-1||}}^{n} ||A_s||", Interval.from_fraction(v1), ok1
        )
    )
    entries.append(
        RateConditionEntry(
            f"||A_u^-1|| max{{1,||A_c||}}^{n}", Interval.from_fraction(v2), ok2
        )
    )
    return RateConditionReport(
        order=n,
        entries=tuple(entries),
        plain_passed=plain_ok,
        parameter_passed=ok1 and ok2,
    )


# -- parameter extension --------------------------------------------------------


@dataclass(frozen=True)
class ExtendedSystem:
    base: LinearSplitting
    k: int                       # parameter count
    C: Matrix                    # D_lambda F(0,0), original coordinates
    C_new: Matrix                # same, diagonalized coordinates
    x_vecs: tuple[Vector, ...]   # hyperbolic corrections, new coordinates (dim each)
    y_vecs: tuple[Vector, ...]   # center components, new coordinates (dim each)
    M: Fraction                  # norm scale on the parameter block
    extended_matrix: Matrix      # [[Id, 0], [C_new, A_diag]]
    blocks: dict[str, tuple[int, ...]]

    @property
    def C_x(self) -> Fraction:
        return max((la.vec_inf_norm(v) for v in self.x_vecs), default=Fraction(0))

    @property
    def C_y(self) -> Fraction:
        return max((la.vec_inf_norm(v) for v in self.y_vecs), default=Fraction(0))

    def norm_Ac_ext_bound(self) -> Fraction:
        """Certified bound max{1, ||A_c|| + C_y / M} on the extended center norm."""
        return max(Fraction(1), self.base.norm("c") + self.C_y / self.M)

    def norm_Ac_inv_ext_bound(self) -> Fraction:
        ninv = self.base.norm_inv("c") if self.base.blocks["c"] else Fraction(0)
        return max(Fraction(1), ninv + ninv * self.C_y / self.M)

    def verify_invariance(self) -> bool:
        """Exact check of C e_i + A x_i = x_i + y_i and block invariance."""
        A = self.base.A_diag
        for i in range(self.k):
            ci = tuple(row[i] for row in self.C_new)
            lhs = tuple(
                c + ax for c, ax in zip(ci, la.mat_vec(A, self.x_vecs[i]))
            )
            rhs = tuple(x + y for x, y in zip(self.x_vecs[i], self.y_vecs[i]))
            if lhs != rhs:
                return False
        return True


def extend_with_parameters(
    s: LinearSplitting, C: Sequence[Sequence[Rational]], M: Rational = 1
) -> ExtendedSystem:
    """Extended system of the parameter theorem, solved exactly.

    C is D_lambda F(0,0) in the original coordinates (one column per
    parameter).  On the hyperbolic block the correction solves
    (Id - A_us) x = C_us; the center component passes through as y.
    """
    C = la.mat(C)
    M = Fraction(M)
    if M <= 0:
        raise ValueError("norm scale M must be positive")
    if len(C) != s.dim:
        raise ValueError("C has wrong row count")
    k = len(C[0]) if C else 0
    C_new = la.mat_mul(s.change_of_basis, C)

    hyp = [*s.blocks["u"], *s.blocks["s"]]
    # certified precondition: 1 not in the hyperbolic spectrum
    if hyp:
        a_hyp = la.submatrix(s.A_diag, hyp, hyp)
        id_minus = la.mat_sub(la.identity(len(hyp)), a_hyp)
        try:
            id_minus_inv = la.inverse(id_minus)
        except ZeroDivisionError as exc:
            raise ResonantParameterExtension(
                "Id - A_u or Id - A_s is singular"
            ) from exc
    x_vecs: list[Vector] = []
    y_vecs: list[Vector] = []
    for i in range(k):
        col = tuple(row[i] for row in C_new)
        x_full = [Fraction(0)] * s.dim
        if hyp:
            rhs = [col[j] for j in hyp]
            sol = la.mat_vec(id_minus_inv, rhs)
            for pos, j in enumerate(hyp):
                x_full[j] = sol[pos]
        y_full = [Fraction(0)] * s.dim
        for j in s.blocks["c"]:
            y_full[j] = col[j]
        x_vecs.append(tuple(x_full))
        y_vecs.append(tuple(y_full))

    ext = _extended_matrix(C_new, s.A_diag, k)
    blocks = {
        "c": tuple(range(k)) + tuple(k + i for i in s.blocks["c"]),
        "u": tuple(k + i for i in s.blocks["u"]),
        "s": tuple(k + i for i in s.blocks["s"]),
    }
    system = ExtendedSystem(
        base=s,
        k=k,
        C=C,
        C_new=C_new,
        x_vecs=tuple(x_vecs),
        y_vecs=tuple(y_vecs),
        M=M,
        extended_matrix=ext,
        blocks=blocks,
    )
    if not system.verify_invariance():
        raise AssertionError("extended-system invariance identity failed")
    return system


def _extended_matrix(C_new: Matrix, A_diag: Matrix, k: int) -> Matrix:
    n = len(A_diag)
    rows = [
        tuple(Fraction(1) if j == i else Fraction(0) for j in range(k + n))
        for i in range(k)
    ]
    for i in range(n):
        rows.append(tuple(C_new[i]) + tuple(A_diag[i]))
    return tuple(rows)


@dataclass(frozen=True)
class NormScaleReport:
    M: Fraction
    epsilon: Fraction
    C_x: Fraction
    C_y: Fraction
    norm_Ac_ext: Interval
    norm_Ac_inv_ext: Interval
    conditions: RateConditionReport
    note: str = (
        "epsilon = half the certified feasibility margin of condition 3a; "
        "M = smallest power of two making the extended norm bounds fit; "
        "both are conventions, not canonical choices"
    )

    def to_json(self) -> str:
        return json.dumps(
            {
                "M": str(self.M),
                "epsilon": str(self.epsilon),
                "C_x": str(self.C_x),
                "C_y": str(self.C_y),
                "norm_Ac_ext": [self.norm_Ac_ext.lo, self.norm_Ac_ext.hi],
                "norm_Ac_inv_ext": [self.norm_Ac_inv_ext.lo, self.norm_Ac_inv_ext.hi],
                "conditions": json.loads(self.conditions.to_json()),
                "note": self.note,
            }
        )


def _eps_feasible(s: LinearSplitting, n: int, eps: Fraction) -> bool:
    nc = s.norm("c")
    ncinv = s.norm_inv("c") if s.blocks["c"] else Fraction(0)
    ns = s.norm("s")
    nuinv = s.norm_inv("u") if s.blocks["u"] else Fraction(0)
    c1 = max(Fraction(1), ncinv + eps) ** n * ns < 1
    c2 = nuinv * max(Fraction(1), nc + eps) ** n < 1
    return c1 and c2


def select_norm_scale(
    e: ExtendedSystem, n: int, eps: Optional[Rational] = None
) -> tuple[Fraction, NormScaleReport]:
    """Smallest power-of-two norm scale M compatible with the rate conditions.

    With eps fixed (default: half the bisected feasibility margin of the
    parameter rate condition), M must absorb the C_y-corrections of the
    extended center norms:  M >= C_y * max(1, ||A_c^-1||) / eps.
    """
    base = e.base
    if not check_rate_conditions(base, n).parameter_passed:
        raise ValueError("condition 3a fails for the base splitting: no valid M")

    if eps is None:
        hi = Fraction(1)
        while _eps_feasible(base, n, hi) and hi < 2**20:
            hi *= 2
        lo = Fraction(0)
        for _ in range(40):
            midpoint = (lo + hi) / 2
            if _eps_feasible(base, n, midpoint):
                lo = midpoint
            else:
                hi = midpoint
        eps = lo / 2
        if eps == 0:
            raise ValueError("could not find a positive feasibility margin")
    eps = Fraction(eps)
    if not _eps_feasible(base, n, eps):
        raise ValueError(f"epsilon {eps} violates the slack rate conditions")

    ncinv = base.norm_inv("c") if base.blocks["c"] else Fraction(0)
    need = e.C_y * max(Fraction(1), ncinv) / eps
    M = Fraction(1)
    while M < need:
        M *= 2

    scaled = ExtendedSystem(
        base=e.base, k=e.k, C=e.C, C_new=e.C_new, x_vecs=e.x_vecs,
        y_vecs=e.y_vecs, M=M, extended_matrix=e.extended_matrix, blocks=e.blocks,
    )
    nAc = scaled.norm_Ac_ext_bound()
    nAcInv = scaled.norm_Ac_inv_ext_bound()

    # certified re-check of the plain conditions for the extended operator
    ns = base.norm("s")
    nuinv = base.norm_inv("u") if base.blocks["u"] else Fraction(0)
    entries = []
    all_ok = True
    for d in range(1, n + 1):
        v1 = nAcInv**d * ns
        v2 = nuinv * nAc**d
        ok1, ok2 = v1 < 1, v2 < 1
        all_ok = all_ok and ok1 and ok2
        entries.append(
            RateConditionEntry(
                f"||Ã_c^-1||^{d} ||Ã_s||", Interval.from_fraction(v1), ok1
            )
        )
        entries.append(
            RateConditionEntry(
                f"||Ã_u^-1|| ||Ã_c||^{d}", Interval.from_fraction(v2), ok2
            )
        )
    if not all_ok:
        raise ValueError("extended rate conditions fail at the selected M")
    report = NormScaleReport(
        M=M,
        epsilon=eps,
        C_x=e.C_x,
        C_y=e.C_y,
        norm_Ac_ext=Interval.from_fraction(nAc),
        norm_Ac_inv_ext=Interval.from_fraction(nAcInv),
        conditions=RateConditionReport(
            order=n, entries=tuple(entries), plain_passed=all_ok,
            parameter_passed=all_ok,
        ),
    )
    return M, report
