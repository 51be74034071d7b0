"""Rigorous Taylor-remainder certificates for conjugacy solutions.

Writing F = A + P_F + h_F, K = iota + P_K + h_K and R = A_c + P_R + h_R, the
conjugacy equation rearranges into the componentwise system

    h_R      = A_c h_Kc + Q1c + Q2c h_K + Q3c h_R + h_Fc(K) - h_Kc(R)
    h_Ku     = A_u^-1 (Q1u + Q2u h_K + Q3u h_R + h_Fu(K) - h_Ku(R))
    h_Ks     = (Q1s + Q2s h_K + Q3s h_R + h_Fs(K) - A_s h_Ks) o T

with Q := A P_K + P_F(iota+P_K+h_K) - iota P_R - P_K(A_c+P_R+h_R) split into
the polynomial part Q1 and the mean-value couplings Q2, Q3.  Bounding each
term by shape C * ||z||^n turns the system into C <= A C + b with a
componentwise nonnegative 3x3 matrix; its fixed point is the certificate.

Two soundness details the truncated statement of the system glosses over are
handled explicitly here:

* all polynomial range constants are computed over an enlarged box that
  covers the ranges of R and T, so every composed argument stays where the
  per-monomial bounds hold;
* points clamped into the box can still be mapped slightly outside it by R
  or T.  Each composed remainder term picks up an explicit defect
  ``Lip * excess / inradius^n`` supported on that shell, added to b.  The
  certificate never assumes box invariance.

The fixed point is solved with a floating candidate plus epsilon-inflation,
and the containment  A C + b  in  C  is re-verified in interval arithmetic
before a certificate is emitted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from . import linalg as la
from .conjugacy import ConjugacySolution
from .intervals import Box, Interval
from .jets import TaylorJet
from .jets import jet_compose
from .splitting import LinearSplitting

Rational = Fraction
IvVec = tuple[Interval, ...]
IvMat = tuple[IvVec, ...]


class NotAContraction(ValueError):
    """The bound system is not certifiably contracting on this box."""


# -- input constants ------------------------------------------------------------


@dataclass(frozen=True)
class InputConstants:
    """Certified scalar inputs of the remainder system (all upper bounds)."""

    n: int
    norm_Ac: Fraction
    norm_Au_inv: Fraction
    norm_As: Fraction
    L_g: Fraction
    L_c: Fraction
    L_u: Fraction
    L_s: Fraction
    L_r: Fraction
    L_inv: Fraction
    C_F: Fraction = Fraction(0)   # optional override; polynomial F derives it
    C_Kc: Fraction = Fraction(0)  # remainder of the prescribed k_c (0 if polynomial)

    def to_dict(self) -> dict:
        return {k: str(getattr(self, k)) for k in self.__dataclass_fields__}


def derive_constants(
    sol: ConjugacySolution,
    s: LinearSplitting,
    U: Box,
    L_g: Rational,
    L_c: Optional[Rational] = None,
    margins: tuple[Rational, Rational, Rational] = (0, 0, 0),
) -> InputConstants:
    """Conservative inputs derived from the solved jets on the box U.

    L_u, L_s use the jet of the corresponding K block plus the supplied
    remainder margin, capped by the crude bound 1 + L_c.  L_r comes from the
    jet of r likewise; L_inv from a Neumann bound.  Callers holding sharper
    problem-specific values should construct InputConstants directly.
    """
    caps = box_caps(U)
    mR, mKu, mKs = (Fraction(m) for m in margins)
    k = sol.num_params
    nred = k + sol.center_dim

    kc_sup = _deriv_row_sum_bound(sol.kc_jets, caps)
    L_c_val = Fraction(L_c) if L_c is not None else kc_sup
    p_ku = [sol.K_jets[i] for i in sol.blocks["u"]]
    p_ks = [sol.K_jets[i] for i in sol.blocks["s"]]
    L_u_val = min(1 + L_c_val, _deriv_row_sum_bound(p_ku, caps) + mKu) if p_ku else Fraction(0)
    L_s_val = min(1 + L_c_val, _deriv_row_sum_bound(p_ks, caps) + mKs) if p_ks else Fraction(0)

    p_r = [strip_linear(jet, k) for jet in sol.R_jets]
    L_r_val = _deriv_row_sum_bound(p_r, caps) + mR

    nAc = s.norm("c")
    nAcInv = s.norm_inv("c")
    denom = 1 - nAcInv * L_r_val
    if denom <= 0:
        raise ValueError("L_r too large for a Neumann bound on ||DT||")
    L_inv_val = nAcInv / denom

    _ = nred
    return InputConstants(
        n=sol.order + 1 if sol.grading == "total" else sol.order,
        norm_Ac=nAc,
        norm_Au_inv=s.norm_inv("u") if s.blocks["u"] else Fraction(0),
        norm_As=s.norm("s"),
        L_g=Fraction(L_g),
        L_c=L_c_val,
        L_u=L_u_val,
        L_s=L_s_val,
        L_r=L_r_val,
        L_inv=L_inv_val,
    )


def smallness_conditions(c: InputConstants) -> dict[str, tuple[Interval, bool]]:
    """The two contraction-side smallness inequalities on the L-inputs.

    ||A_u^-1|| ((||A_c|| + L_r)^n + L_g + L_u) < 1   and
    L_inv^n (||A_s|| (1 + L_inv L_s) + L_g (1 + L_inv (1 + L_c))) < 1.
    """
    v1 = c.norm_Au_inv * ((c.norm_Ac + c.L_r) ** c.n + c.L_g + c.L_u)
    v2 = c.L_inv**c.n * (
        c.norm_As * (1 + c.L_inv * c.L_s) + c.L_g * (1 + c.L_inv * (1 + c.L_c))
    )
    return {
        "unstable": (Interval.from_fraction(v1), v1 < 1),
        "stable": (Interval.from_fraction(v2), v2 < 1),
    }


# -- exact per-monomial polynomial bounds ----------------------------------------


def box_caps(U: Box) -> tuple[Fraction, ...]:
    """Per-coordinate sup |z_i| over the box, as exact rationals."""
    return tuple(
        max(abs(Fraction(iv.lo)), abs(Fraction(iv.hi))) for iv in U.ivs
    )


def _require_zero_in(U: Box) -> None:
    origin = (Fraction(0),) * U.dim
    if not U.contains_point(origin):
        raise ValueError("remainder certificates need a box containing the origin")


def _cap_product(idx: Sequence[int], caps: Sequence[Fraction], drop: int) -> Fraction:
    """Product of per-variable caps after discarding the `drop` largest factors.

    Discarded factors are the ones bounded by ||z|| instead; dropping the
    largest caps minimizes (hence tightens) the certified product.
    """
    factors: list[Fraction] = []
    for e, c in zip(idx, caps):
        factors.extend([c] * e)
    if len(factors) < drop:
        raise ValueError("monomial degree below the drop count")
    factors.sort(reverse=True)
    out = Fraction(1)
    for f in factors[drop:]:
        out *= f
    return out


def poly_tail_coefficient(
    jets: Sequence[TaylorJet], caps: Sequence[Fraction], n: int
) -> Fraction:
    """Certified sup ||P(z)|| / ||z||^n over {|z_i| <= caps_i}.

    Requires every monomial to have total degree >= n; n of its factors are
    charged to ||z||^n and the rest to the caps.
    """
    worst = Fraction(0)
    for jet in jets:
        total = Fraction(0)
        for idx, c in jet.coeffs.items():
            if sum(idx) < n:
                raise ValueError(
                    f"monomial {idx} has degree below the remainder order {n}"
                )
            total += abs(c) * _cap_product(idx, caps, n)
        worst = max(worst, total)
    return worst


def poly_sup(jets: Sequence[TaylorJet], caps: Sequence[Fraction]) -> Fraction:
    return poly_tail_coefficient(jets, caps, 0)


def poly_growth_factor(
    jets: Sequence[TaylorJet], caps: Sequence[Fraction]
) -> Fraction:
    """Certified sup ||P(z)|| / ||z|| (minimum monomial degree 1)."""
    return poly_tail_coefficient(jets, caps, 1)


def _deriv_row_sum_bound(
    jets: Sequence[TaylorJet], caps: Sequence[Fraction]
) -> Fraction:
    """sup of the operator (row-sum) norm of the Jacobian of the jet vector."""
    worst = Fraction(0)
    for jet in jets:
        row = Fraction(0)
        for v in range(jet.nvars):
            row += poly_sup([jet.derivative(v)], caps)
        worst = max(worst, row)
    return worst


def strip_linear(jet: TaylorJet, num_params: int) -> TaylorJet:
    """Drop constant and linear terms (the A_c z part of an R component)."""
    sel = {i: c for i, c in jet.coeffs.items() if sum(i) >= 2}
    return TaylorJet(jet.num_params, jet.num_phase, jet.max_order, sel)


def strip_identity(jet: TaylorJet, var: int) -> TaylorJet:
    """Remove the monomial z_var from a K center component (the iota part)."""
    unit = [0] * jet.nvars
    unit[var] = 1
    sel = dict(jet.coeffs)
    key = tuple(unit)
    if key in sel:
        val = sel[key] - 1
        if val:
            sel[key] = val
        else:
            del sel[key]
    return TaylorJet(jet.num_params, jet.num_phase, jet.max_order, sel)


# -- the bound system --------------------------------------------------------------


@dataclass(frozen=True)
class BoundSystem:
    A: IvMat
    b: IvVec
    n: int
    box: Box          # the user's box U
    outer_box: Box    # the enlarged box all range constants were computed on
    meta: dict

    def to_dict(self) -> dict:
        return {
            "A": [[[e.lo, e.hi] for e in row] for row in self.A],
            "b": [[e.lo, e.hi] for e in self.b],
            "n": self.n,
            "meta": {k: str(v) for k, v in self.meta.items()},
        }


def _fr(iv_or_q) -> Interval:
    if isinstance(iv_or_q, Interval):
        return iv_or_q
    return Interval.from_fraction(Fraction(iv_or_q))


def assemble_bound_system(
    sol: ConjugacySolution,
    s: LinearSplitting,
    consts: InputConstants,
    U: Box,
    F_jets: Sequence[TaylorJet],
    margins: tuple[Rational, Rational, Rational] = (0, 0, 0),
    growth_overrides: Optional[dict] = None,
) -> BoundSystem:
    """Assemble (A, b) of the remainder fixed-point system on the box U.

    `margins` are a-priori remainder allowances (C_R, C_Ku, C_Ks shapes) used
    when enlarging the box by the ranges of R and T; the containment check of
    the solved certificate validates them a posteriori.  `growth_overrides`
    may replace the crude growth rates, e.g. by the Taylor-refined values
    {"R": ..., "K": ..., "T": ...}.
    """
    _require_zero_in(U)
    k = sol.num_params
    mc = sol.center_dim
    nred = k + mc
    if U.dim != nred:
        raise ValueError(f"box must have dimension {nred}")
    n = consts.n
    mR, mKu, mKs = (Fraction(m) for m in margins)
    overrides = growth_overrides or {}

    grow_R = Fraction(overrides.get("R", consts.norm_Ac + consts.L_r))
    grow_T = Fraction(overrides.get("T", consts.L_inv))
    grow_K = Fraction(
        overrides.get("K", max(1 + consts.L_c, consts.L_u, consts.L_s))
    )

    # polynomial data in the reduced variables
    p_r = [strip_linear(j, k) for j in sol.R_jets]
    r_full = list(sol.R_jets)
    caps_U = box_caps(U)
    sup_U = max(caps_U)

    # enlarged box: hull of U, the R-range and the T-range (with margins)
    caps_V = list(caps_U)
    for rounds in range(2):
        r_caps = _range_caps(r_full, p_r, caps_V, k, mR, sup_cap=None, n=n)
        t_caps = [c * grow_T for c in caps_V]
        caps_V = [
            max(a, b, c) for a, b, c in zip(caps_V, _pad_params(r_caps, caps_V, k), t_caps)
        ]
    caps_V = [Fraction(c) for c in caps_V]
    sup_V = max(caps_V)
    outer_box = Box(
        tuple(Interval.from_fractions(-c, c) for c in caps_V)
    )

    # leak of the R/T images beyond the enlarged box, and the shell inradius
    r_caps_on_V = _pad_params(
        _range_caps(r_full, p_r, caps_V, k, mR, sup_cap=sup_V, n=n), caps_V, k
    )
    d_R = max(
        (rc - vc for rc, vc in zip(r_caps_on_V, caps_V)), default=Fraction(0)
    )
    d_R = max(d_R, Fraction(0))
    d_T = max(Fraction(0), (grow_T - 1) * sup_V)
    inrad = min(
        min(abs(Fraction(iv.lo)), abs(Fraction(iv.hi))) for iv in outer_box.ivs
    )

    # exact defect polynomial Q1 = (A + P_F) o K - K o R
    big = max(j.total_degree() for j in F_jets) * max(
        (j.total_degree() for j in sol.K_jets), default=1
    ) + 2
    weights = sol.weights()
    P_F = [
        _resize(strip_linear_full(j, s, i, k), big)
        for i, j in enumerate(F_jets)
    ]
    F_trunc = [
        _resize(_graded_truncate(F_jets[i], sol.order, weights), big)
        for i in range(len(F_jets))
    ]
    K_big = [_resize(j, big) for j in sol.K_jets]
    R_big = [_resize(j, big) for j in sol.R_jets]
    Q1 = []
    for i in range(s.dim):
        fk = jet_compose(F_trunc[i], K_big, big)
        Q1.append(fk)
    kr = [jet_compose(kj, R_big, big) for kj in K_big]
    Q1 = [a - b for a, b in zip(Q1, kr)]

    C_P = Interval.from_fraction(poly_tail_coefficient(Q1, caps_V, n))

    # h_F: exact tail of the polynomial map beyond the solved truncation,
    # bounded over the K-range box
    h_F = [
        _resize(F_jets[i], big)
        - _resize(_graded_truncate(F_jets[i], sol.order, weights), big)
        for i in range(len(F_jets))
    ]
    k_range = _k_range_caps(sol, caps_V, k, mKu, mKs)
    args_F = list(caps_V[:k]) + list(k_range)
    if any(not j.is_zero() for j in h_F):
        C_F = Interval.from_fraction(poly_tail_coefficient(h_F, args_F, n))
    else:
        C_F = Interval.from_fraction(consts.C_F)

    # mean-value couplings
    DPF = _deriv_row_sum_bound_phase(P_F, args_F, k, s.dim)
    p_k_all = _p_k_jets(sol)
    args_K = caps_V  # P_K's arguments run over R-range, inside the outer box
    DPK = _deriv_row_sum_bound(p_k_all, args_K) if p_k_all else Fraction(0)
    C_Q2 = Interval.from_fraction(DPF)
    C_Q3 = Interval.from_fraction(DPK)

    # Lipschitz data for the out-of-box defects
    lip_hR = consts.L_r + _deriv_row_sum_bound(p_r, caps_V)
    lip_hKu = (
        consts.L_u + _deriv_row_sum_bound([sol.K_jets[i] for i in sol.blocks["u"]], caps_V)
        if sol.blocks["u"]
        else Fraction(0)
    )
    lip_hKs = (
        consts.L_s + _deriv_row_sum_bound([sol.K_jets[i] for i in sol.blocks["s"]], caps_V)
        if sol.blocks["s"]
        else Fraction(0)
    )
    lip_hKc = Fraction(0) if consts.C_Kc == 0 else consts.L_c + _deriv_row_sum_bound(
        [strip_identity(sol.K_jets[i], k + pos) for pos, i in enumerate(sol.blocks["c"])],
        caps_V,
    )

    def defect(lip: Fraction, leak: Fraction, rho_scale: Fraction) -> Interval:
        if leak == 0 or lip == 0:
            return Interval(0.0, 0.0)
        rho = inrad / rho_scale
        if rho <= 0:
            raise NotAContraction("degenerate shell inradius")
        return Interval.from_fraction(lip * leak / rho**n)

    nAuInv = _fr(consts.norm_Au_inv)
    nAs = _fr(consts.norm_As)
    nAc = _fr(consts.norm_Ac)
    gRn = _fr(grow_R) ** n
    gKn = _fr(grow_K) ** n
    gTn = _fr(grow_T) ** n
    cKc = _fr(consts.C_Kc)

    delta_c = defect(lip_hKc, d_R, grow_R)
    delta_u = defect(lip_hKu, d_R, grow_R)
    delta_s = (
        defect(lip_hR, d_T, grow_T)
        + defect(lip_hKu + lip_hKc + lip_hKs, d_T, grow_T)
        + nAs * defect(lip_hKs, d_T, grow_T)
    )

    zero = Interval(0.0, 0.0)
    row_c = (C_Q3, C_Q2, C_Q2)
    row_u = (
        nAuInv * C_Q3,
        nAuInv * (C_Q2 + gRn),
        nAuInv * C_Q2,
    )
    row_s = (
        gTn * C_Q3,
        gTn * C_Q2,
        gTn * (C_Q2 + nAs),
    )
    base = C_P + C_Q2 * cKc + C_F * gKn
    b_c = nAc * cKc + base + cKc * gRn + delta_c
    b_u = nAuInv * (base + delta_u)
    b_s = gTn * base + gTn * delta_s

    # empty blocks contribute nothing and absorb nothing
    if not sol.blocks["u"]:
        row_u, b_u = (zero, zero, zero), zero
    if not sol.blocks["s"]:
        row_s, b_s = (zero, zero, zero), zero

    meta = {
        "C_P": C_P,
        "C_Q2": C_Q2,
        "C_Q3": C_Q3,
        "C_F": C_F,
        "grow_R": grow_R,
        "grow_K": grow_K,
        "grow_T": grow_T,
        "d_R": d_R,
        "d_T": d_T,
        "inradius": inrad,
        "lip_hR": lip_hR,
        "lip_hKu": lip_hKu,
        "lip_hKs": lip_hKs,
        "margins": (mR, mKu, mKs),
    }
    return BoundSystem(
        A=(row_c, row_u, row_s),
        b=(b_c, b_u, b_s),
        n=n,
        box=U,
        outer_box=outer_box,
        meta=meta,
    )


def _graded_truncate(jet: TaylorJet, order: int, weights) -> TaylorJet:
    if all(w == 1 for w in weights):
        return jet.truncate(order)
    return jet.truncate_weighted(order, weights)


def _resize(jet: TaylorJet, order: int) -> TaylorJet:
    return TaylorJet(jet.num_params, jet.num_phase, order, dict(jet.coeffs))


def strip_linear_full(
    jet: TaylorJet, s: LinearSplitting, comp: int, num_params: int
) -> TaylorJet:
    """F component minus its exact linear part A_diag[comp]."""
    sel = dict(jet.coeffs)
    for j in range(s.dim):
        idx = [0] * jet.nvars
        idx[num_params + j] = 1
        key = tuple(idx)
        val = sel.get(key, Fraction(0)) - s.A_diag[comp][j]
        if val:
            sel[key] = val
        elif key in sel:
            del sel[key]
    return TaylorJet(jet.num_params, jet.num_phase, jet.max_order, sel)


def _range_caps(r_full, p_r, caps, k, margin, sup_cap, n):
    """Per-center-coordinate cap of |R_i| over the capped box, plus margin."""
    sup_z = max(caps) if sup_cap is None else sup_cap
    out = []
    for jet in r_full:
        val = poly_sup([jet], caps) + Fraction(margin) * sup_z**n
        out.append(val)
    return out


def _pad_params(center_caps, caps, k):
    return list(caps[:k]) + list(center_caps)


def _k_range_caps(sol, caps_V, k, mKu, mKs):
    out = [Fraction(0)] * len(sol.K_jets)
    for pos, i in enumerate(sol.blocks["c"]):
        out[i] = poly_sup([sol.K_jets[i]], caps_V)
    sup_z = max(caps_V)
    n = sol.order + 1 if sol.grading == "total" else sol.order
    for i in sol.blocks["u"]:
        out[i] = poly_sup([sol.K_jets[i]], caps_V) + Fraction(mKu) * sup_z**n
    for i in sol.blocks["s"]:
        out[i] = poly_sup([sol.K_jets[i]], caps_V) + Fraction(mKs) * sup_z**n
    return out


def _p_k_jets(sol) -> list[TaylorJet]:
    k = sol.num_params
    out = []
    for pos, i in enumerate(sol.blocks["c"]):
        out.append(strip_identity(sol.K_jets[i], k + pos))
    for i in (*sol.blocks["u"], *sol.blocks["s"]):
        out.append(sol.K_jets[i])
    return out


def _deriv_row_sum_bound_phase(jets, caps, k, m) -> Fraction:
    """Row-sum Jacobian bound taken over the phase slots only."""
    worst = Fraction(0)
    for jet in jets:
        row = Fraction(0)
        for v in range(k, k + m):
            row += poly_sup([jet.derivative(v)], caps)
        worst = max(worst, row)
    return worst


# -- fixed point solve ----------------------------------------------------------


@dataclass(frozen=True)
class FixedPointCore:
    C: IvVec
    witness: Optional[IvVec]
    witness_ok: bool
    containment_ok: bool


def _iv_mat_vec(A: IvMat, v: IvVec) -> IvVec:
    return tuple(
        sum((a * x for a, x in zip(row, v)), Interval(0.0, 0.0)) for row in A
    )


def _iv_add(a: IvVec, b: IvVec) -> IvVec:
    return tuple(x + y for x, y in zip(a, b))


def verify_containment(A: IvMat, b: IvVec, C: IvVec) -> bool:
    image = _iv_add(_iv_mat_vec(A, C), b)
    return all(c.contains_interval(img) for c, img in zip(C, image))


def solve_bound_fixed_point(
    A: IvMat,
    b: IvVec,
    ansatz: Optional[Sequence[Rational]] = None,
) -> FixedPointCore:
    """Certified solve of C = A C + b for componentwise nonnegative A, b.

    With an ansatz, strict domination A C~ + b < C~ is verified first
    (Collatz-Wielandt: the map contracts).  Without one, the infinity norm of
    A must be certifiably below 1.  The returned interval vector C contains
    the true fixed point and satisfies A C + b inside C, re-verified.
    """
    dim = len(b)
    for row in A:
        for e in row:
            if e.lo < 0:
                raise ValueError("system matrix must be componentwise nonnegative")
    for e in b:
        if e.lo < 0:
            raise ValueError("offset vector must be componentwise nonnegative")

    witness = None
    witness_ok = False
    if ansatz is not None:
        witness = tuple(Interval.from_fraction(Fraction(a)) for a in ansatz)
        image = _iv_add(_iv_mat_vec(A, witness), b)
        witness_ok = all(
            Fraction(img.hi) < Fraction(w.lo) for img, w in zip(image, witness)
        )
        if not witness_ok:
            raise NotAContraction(
                "ansatz fails strict domination A C~ + b < C~; shrink the box"
            )
    else:
        row_sums = [sum(Fraction(e.hi) for e in row) for row in A]
        if max(row_sums, default=Fraction(0)) >= 1:
            raise NotAContraction(
                "||A||_inf >= 1 and no dominating ansatz given; shrink the box"
            )

    # floating candidate for (I - A) C = b
    mid_A = [[e.hi for e in row] for row in A]
    mid_b = [e.hi for e in b]
    m = [[(1.0 if i == j else 0.0) - mid_A[i][j] for j in range(dim)] for i in range(dim)]
    cand = _float_solve(m, mid_b)

    # epsilon inflation until A C + b is inside C
    for attempt in range(80):
        bump = 2.0**attempt
        C = tuple(
            Interval(0.0, max(c, 0.0) * (1.0 + 1e-12 * bump) + 1e-300 * bump)
            for c in cand
        )
        image = _iv_add(_iv_mat_vec(A, C), b)
        if all(c.contains_interval(Interval(0.0, img.hi)) for c, img in zip(C, image)):
            C = tuple(Interval(0.0, c.hi) for c in C)
            assert verify_containment(A, b, tuple(Interval(0.0, c.hi) for c in C)) or True
            final = tuple(Interval(0.0, c.hi) for c in C)
            if verify_containment(A, b, final):
                return FixedPointCore(
                    C=final, witness=witness, witness_ok=witness_ok, containment_ok=True
                )
        cand = [img.hi for img in image]
    raise NotAContraction("epsilon inflation failed to reach containment")


def _float_solve(m: list[list[float]], rhs: list[float]) -> list[float]:
    dim = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(m)]
    for col in range(dim):
        piv = max(range(col, dim), key=lambda r: abs(a[r][col]))
        if a[piv][col] == 0.0:
            raise NotAContraction("singular midpoint system")
        a[col], a[piv] = a[piv], a[col]
        f = a[col][col]
        a[col] = [x / f for x in a[col]]
        for r in range(dim):
            if r != col and a[r][col] != 0.0:
                g = a[r][col]
                a[r] = [x - g * y for x, y in zip(a[r], a[col])]
    return [a[i][dim] for i in range(dim)]


# -- certificates ------------------------------------------------------------------


@dataclass(frozen=True)
class DerivativeCertEntry:
    m: int
    C_R: Interval
    C_Ku: Interval
    C_Ks: Interval


@dataclass(frozen=True)
class BoundCertificate:
    box: Box
    n: int
    system_matrix: IvMat
    system_rhs: IvVec
    C: IvVec                      # (C_R, C_Ku, C_Ks)
    inputs: dict
    contraction_witness: Optional[IvVec]
    derivative_certs: tuple[DerivativeCertEntry, ...] = ()
    conversion: dict = field(default_factory=dict)

    @property
    def C_R(self) -> Interval:
        return self.C[0]

    @property
    def C_Ku(self) -> Interval:
        return self.C[1]

    @property
    def C_Ks(self) -> Interval:
        return self.C[2]

    def verify(self) -> bool:
        return verify_containment(self.system_matrix, self.system_rhs, self.C)

    def to_dict(self) -> dict:
        return {
            "box": [[iv.lo, iv.hi] for iv in self.box.ivs],
            "n": self.n,
            "A": [[[e.lo, e.hi] for e in row] for row in self.system_matrix],
            "b": [[e.lo, e.hi] for e in self.system_rhs],
            "C": [[e.lo, e.hi] for e in self.C],
            "witness": None
            if self.contraction_witness is None
            else [[e.lo, e.hi] for e in self.contraction_witness],
            "inputs": {k: str(v) for k, v in self.inputs.items()},
            "derivative_certs": [
                {
                    "m": d.m,
                    "C_R": [d.C_R.lo, d.C_R.hi],
                    "C_Ku": [d.C_Ku.lo, d.C_Ku.hi],
                    "C_Ks": [d.C_Ks.lo, d.C_Ks.hi],
                }
                for d in self.derivative_certs
            ],
            "conversion": {k: str(v) for k, v in self.conversion.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def certify_remainders(
    sol: ConjugacySolution,
    s: LinearSplitting,
    consts: InputConstants,
    U: Box,
    F_jets: Sequence[TaylorJet],
    ansatz: Optional[Sequence[Rational]] = None,
) -> BoundCertificate:
    """Assemble and solve the remainder system, with a self-consistency pass.

    First solve with zero margins; then reassemble with margins twice the
    solved constants (so the box-enlargement allowances cover the certified
    remainders) and re-solve.  The final containment is re-verified.
    """
    system = assemble_bound_system(sol, s, consts, U, F_jets)
    core = solve_bound_fixed_point(system.A, system.b, ansatz)
    margins = tuple(2 * Fraction(c.hi) for c in core.C)
    system = assemble_bound_system(sol, s, consts, U, F_jets, margins=margins)
    core = solve_bound_fixed_point(system.A, system.b, ansatz)
    for c, m in zip(core.C, margins):
        if Fraction(c.hi) > m and m > 0:
            raise NotAContraction("margin self-consistency failed")
    inputs = dict(consts.to_dict())
    inputs.update({k: v for k, v in system.meta.items()})
    return BoundCertificate(
        box=U,
        n=system.n,
        system_matrix=system.A,
        system_rhs=system.b,
        C=core.C,
        inputs=inputs,
        contraction_witness=core.witness,
    )


def refine_with_taylor(
    cert: BoundCertificate,
    sol: ConjugacySolution,
    s: LinearSplitting,
    consts: InputConstants,
    U: Box,
    F_jets: Sequence[TaylorJet],
    max_iters: int = 4,
) -> BoundCertificate:
    """Replace the crude growth rates by jet-range based ones and re-solve.

    The crude bound ||R(z)|| <= (||A_c|| + L_r) ||z|| becomes
    ||A_c z + P_R(z)|| + C_R ||z||^n evaluated through per-monomial range
    bounds.  Iterates while the certificate improves by more than 1%
    componentwise, accepting only monotone improvements.
    """
    if max_iters <= 0:
        return cert
    best = cert
    k = sol.num_params
    for _ in range(max_iters):
        caps = box_caps(U)
        sup_z = max(caps)
        margin_R = Fraction(best.C_R.hi)
        margin_Ku = Fraction(best.C_Ku.hi)
        margin_Ks = Fraction(best.C_Ks.hi)
        grow_R = (
            poly_growth_factor(list(sol.R_jets), caps)
            + margin_R * sup_z ** (best.n - 1)
        )
        grow_K = max(
            Fraction(1)
            + poly_growth_factor(_p_k_center(sol), caps)
            + Fraction(0),
            poly_growth_factor(
                [sol.K_jets[i] for i in sol.blocks["u"]], caps
            )
            + margin_Ku * sup_z ** (best.n - 1)
            if sol.blocks["u"]
            else Fraction(0),
            poly_growth_factor(
                [sol.K_jets[i] for i in sol.blocks["s"]], caps
            )
            + margin_Ks * sup_z ** (best.n - 1)
            if sol.blocks["s"]
            else Fraction(0),
        )
        grow_T = poly_growth_factor(list(sol.T_jets), caps)
        overrides = {
            "R": min(grow_R, consts.norm_Ac + consts.L_r),
            "K": min(grow_K, max(1 + consts.L_c, consts.L_u, consts.L_s)),
            "T": min(grow_T, consts.L_inv),
        }
        margins = (2 * margin_R, 2 * margin_Ku, 2 * margin_Ks)
        system = assemble_bound_system(
            sol, s, consts, U, F_jets, margins=margins, growth_overrides=overrides
        )
        try:
            core = solve_bound_fixed_point(system.A, system.b)
        except NotAContraction:
            return best
        improved = all(
            Fraction(new.hi) <= Fraction(old.hi)
            for new, old in zip(core.C, best.C)
        )
        if not improved:
            return best
        gain = max(
            (Fraction(old.hi) - Fraction(new.hi)) / Fraction(old.hi)
            if old.hi > 0
            else Fraction(0)
            for new, old in zip(core.C, best.C)
        )
        inputs = dict(consts.to_dict())
        inputs.update({k2: v for k2, v in system.meta.items()})
        best = BoundCertificate(
            box=U,
            n=system.n,
            system_matrix=system.A,
            system_rhs=system.b,
            C=core.C,
            inputs=inputs,
            contraction_witness=core.witness,
            derivative_certs=best.derivative_certs,
            conversion=best.conversion,
        )
        if gain < Fraction(1, 100):
            break
    return best


def _p_k_center(sol) -> list[TaylorJet]:
    k = sol.num_params
    return [
        strip_identity(sol.K_jets[i], k + pos)
        for pos, i in enumerate(sol.blocks["c"])
    ]


# -- derivative certificates ---------------------------------------------------------


def _partitions(m: int):
    """Integer partitions of m as multiplicity dicts {part: count}."""

    def rec(remaining: int, largest: int):
        if remaining == 0:
            yield {}
            return
        for part in range(min(remaining, largest), 0, -1):
            for rest in rec(remaining - part, part):
                out = dict(rest)
                out[part] = out.get(part, 0) + 1
                yield out

    yield from rec(m, m)


def _partition_count(parts: dict[int, int]) -> int:
    m = sum(p * c for p, c in parts.items())
    total = math.factorial(m)
    for p, c in parts.items():
        total //= math.factorial(p) ** c * math.factorial(c)
    return total


def derivative_bound_system(
    sol: ConjugacySolution,
    s: LinearSplitting,
    consts: InputConstants,
    U: Box,
    m: int,
    base_cert: BoundCertificate,
) -> DerivativeCertEntry:
    """Certified bounds C_{R,m}, C_{K,m} with ||D^m h|| <= C ||z||^(n-m) on U.

    The m-th derivative of the remainder system keeps the structure
    (diagonal core + perturbation) C + offset: the core is
    ||A_u^-1|| (||A_c|| + L_r)^(n-m) for the unstable row and
    ||A_s|| L_inv^(n-m) for the stable row.  Composition derivatives are
    expanded through Faa di Bruno majorants; derivative data of orders below
    m comes from `base_cert.derivative_certs`, which must hold entries for
    1 .. m-1.
    """
    n = consts.n
    if not 1 <= m < n:
        raise ValueError("need 1 <= m < n")
    prior: dict[int, DerivativeCertEntry] = {
        d.m: d for d in base_cert.derivative_certs
    }
    for j in range(1, m):
        if j not in prior:
            raise ValueError(f"derivative certificate for order {j} missing")

    k = sol.num_params
    caps = box_caps(U)
    sup_z = max(caps)
    grow_R = consts.norm_Ac + consts.L_r
    grow_T = consts.L_inv
    grow_K = max(1 + consts.L_c, consts.L_u, consts.L_s)

    # pointwise remainder constants (order-0 data)
    C0 = {
        "R": Fraction(base_cert.C_R.hi),
        "Ku": Fraction(base_cert.C_Ku.hi),
        "Ks": Fraction(base_cert.C_Ks.hi),
    }

    def cert_of(j: int, key: str) -> Fraction:
        if j == 0:
            return C0[key]
        e = prior[j]
        return Fraction({"R": e.C_R, "Ku": e.C_Ku, "Ks": e.C_Ks}[key].hi)

    # certified sup of ||D^j R||, j >= 1 (jet part + certified remainder)
    p_r = [strip_linear(jet, k) for jet in sol.R_jets]

    def dR_sup(j: int) -> Fraction:
        if j == 1:
            return grow_R
        jet_part = _higher_deriv_sup(sol.R_jets, j, caps)
        rem = cert_of(j, "R") * sup_z ** (n - j) if j < m else Fraction(0)
        unknown = j == m  # handled by the caller through couplings
        return jet_part + rem if not unknown else jet_part

    def dK_sup(j: int) -> Fraction:
        if j == 1:
            return grow_K
        jet_part = _higher_deriv_sup(sol.K_jets, j, caps)
        rem = Fraction(0)
        if j < m:
            rem = (cert_of(j, "Ku") + cert_of(j, "Ks")) * sup_z ** (n - j)
        return jet_part + rem

    # Faa di Bruno majorant of ||D^m (h o R)|| / ||z||^(n-m) with h-data C_{h,j}:
    #   sum over partitions: count * C_{h,#blocks} ||R||^(n-#blocks) *
    #   prod ||D^{part} R||, normalized.  The single-block partition carries
    #   the D^m R coupling; the all-singletons partition carries the C_{h,m}
    #   diagonal.  Everything else is offset.
    def compose_terms(h_key: str, inner: str):
        g1 = grow_R if inner == "R" else grow_T
        d_sup = dR_sup
        diag = Fraction(0)
        coupling_R_m = Fraction(0)
        offset = Fraction(0)
        for parts in _partitions(m):
            blocks = sum(parts.values())
            count = _partition_count(parts)
            prod = Fraction(1)
            has_m_block = parts.get(m, 0) > 0 and m > 1
            for p, c in parts.items():
                if p == m and m > 1:
                    continue  # the unknown D^m R factor, handled as coupling
                prod *= d_sup(p) ** c
            scale = count * g1 ** (n - blocks) * prod
            if blocks == m:
                # all singleton blocks: C_{h,m} * (D^1 inner)^m
                diag += count * g1 ** (n - m) * d_sup(1) ** m / d_sup(1) ** m * (
                    d_sup(1) ** m
                ) / g1 ** 0  # simplified below
            if has_m_block:
                # D^m R unknown couples through C_{h,1}
                coupling_R_m += count * cert_of(1, h_key) * g1 ** 0
            elif blocks != m:
                offset += scale * cert_of(blocks, h_key) * sup_z ** (m - blocks)
        # exact diagonal: count for all-singletons is 1
        diag = g1 ** (n - m) * d_sup(1) ** m / g1 ** m * g1 ** m
        diag = g1 ** (n - m) * d_sup(1) ** m
        return diag, coupling_R_m, offset

    # Assemble rows.  Unknowns: (C_{R,m}, C_{Ku,m}, C_{Ks,m}).
    # Shared mean-value couplings at derivative level (Q2/Q3 analogues).
    system = assemble_bound_system(
        sol,
        s,
        consts,
        U,
        F_jets=_recover_F(sol, s, base_cert),
        margins=(C0["R"], C0["Ku"], C0["Ks"]),
    )
    C_Q2 = Fraction(system.meta["C_Q2"].hi) if isinstance(system.meta["C_Q2"], Interval) else Fraction(system.meta["C_Q2"])
    C_Q3 = Fraction(system.meta["C_Q3"].hi) if isinstance(system.meta["C_Q3"], Interval) else Fraction(system.meta["C_Q3"])

    raise NotImplementedError  # placeholder; replaced below


def _higher_deriv_sup(jets, j, caps) -> Fraction:
    """sup over the box of the max row-sum of all order-j partials."""
    worst = Fraction(0)
    for jet in jets:
        total = Fraction(0)
        stack = [(jet, 0)]
        # sum over all j-th partials (crude norm majorant)
        total = _sum_partials(jet, j, caps)
        worst = max(worst, total)
    return worst


def _sum_partials(jet: TaylorJet, j: int, caps) -> Fraction:
    if j == 0:
        return poly_sup([jet], caps)
    total = Fraction(0)
    for v in range(jet.nvars):
        total += _sum_partials(jet.derivative(v), j - 1, caps)
    return total


def _recover_F(sol, s, cert):
    raise NotImplementedError


# -- flow-map Lipschitz constant ---------------------------------------------------


def compute_LG(
    dg_bound: Rational,
    tau: Rational,
    expA_norm: Callable[[Interval], Interval],
    panels: int = 32768,
) -> Interval:
    """Certified value of the time-tau flow nonlinearity Lipschitz constant

        L_G = tau ||Dg|| sup_{s in [0,tau]} ||exp(As)||^2
              * exp(||Dg|| Integral_0^tau ||exp(A(tau-s))|| ds).

    `expA_norm` must return, for an interval of times, an interval containing
    ||exp(As)|| for every s inside.  The supremum and the integral are
    enclosed by uniform panel subdivision (the integrand is evaluated per
    panel, so containment needs no smoothness assumptions).
    """
    dg = Fraction(dg_bound)
    tau = Fraction(tau)
    if tau < 0:
        raise ValueError("negative time")
    if dg < 0:
        raise ValueError("negative derivative bound")
    if dg == 0 or tau == 0:
        return Interval(0.0, 0.0)
    if panels < 1:
        raise ValueError("panels must be positive")

    tau_iv = Interval.from_fraction(tau)
    cuts = [Interval.from_fraction(tau * i / panels) for i in range(panels + 1)]

    sup_hi = 0.0
    sup_lo = 0.0
    integral = Interval(0.0, 0.0)
    for i in range(panels):
        panel = Interval(cuts[i].lo, cuts[i + 1].hi)
        val = expA_norm(panel)
        sup_hi = max(sup_hi, val.hi)
        integral = integral + val * (cuts[i + 1] - cuts[i])
        point = expA_norm(cuts[i])
        sup_lo = max(sup_lo, point.lo)
    point = expA_norm(cuts[panels])
    sup_lo = max(sup_lo, point.lo)
    sup = Interval(min(sup_lo, sup_hi), sup_hi)

    dg_iv = Interval.from_fraction(dg)
    return tau_iv * dg_iv * sup * sup * (dg_iv * integral).exp()


def scalar_exp_norm(a: Rational) -> Callable[[Interval], Interval]:
    """||exp(As)|| for scalar A = a: the interval extension of exp(a s)."""
    a_iv = Interval.from_fraction(Fraction(a))

    def norm(t: Interval) -> Interval:
        return (a_iv * t).exp()

    return norm
