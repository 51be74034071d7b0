"""Order-by-order solution of the conjugacy equation F o K = K o R.

The map F = A + g lives on the diagonalized phase space of a
:class:`~cmcert.splitting.LinearSplitting` (blocks ordered center, unstable,
stable), optionally with parameter variables prepended.  K = iota + (k_c,
k_u, k_s) maps the center space into phase space, R = A_c + r is the
conjugate dynamics on the center space, and k_c is prescribed (that freedom
is what puts R into normal form).

At each graded degree d >= 2 the homological equation decouples:

* the center component is an explicit formula for the degree-d part of r;
* the unstable/stable components are linear systems
  (A_block - S_d) k_d = rhs_d, where S_d substitutes the linear map
  (lambda, A_c z) into a degree-d homogeneous jet -- Sylvester-type systems
  assembled per degree and solved exactly over Q.

The grading is plain total degree or the weighted degree with parameter
weight 2 (phase ~ sqrt(parameter)); the recursion is identical, only the
slicing changes.  A singular system is a resonance; with a diagonal center
block the offending monomial is named exactly.

Parameter-linear terms of F must vanish (D_lambda F(0,0) = 0); systems with
a nonzero parameter derivative go through
:func:`cmcert.splitting.extend_with_parameters` first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

from . import linalg as la
from .intervals import Box
from .jets import (
    TaylorJet,
    jet_compose,
    monomials_of_degree,
    monomials_of_weighted_degree,
)
from .linalg import Matrix
from .splitting import LinearSplitting


class ResonanceError(ValueError):
    """A homological linear system is singular at some degree."""


@dataclass(frozen=True)
class ConjugacySolution:
    order: int
    grading: str                      # 'total' or 'weighted'
    num_params: int
    K_jets: tuple[TaylorJet, ...]     # phase components of K (dim many)
    R_jets: tuple[TaylorJet, ...]     # center components of R (block dim many)
    T_jets: tuple[TaylorJet, ...]     # jet of R^{-1}
    kc_jets: tuple[TaylorJet, ...]    # the prescribed styling choice
    blocks: dict[str, tuple[int, ...]]

    @property
    def center_dim(self) -> int:
        return len(self.blocks["c"])

    def weights(self) -> tuple[int, ...]:
        k, mc = self.num_params, self.center_dim
        w = 2 if self.grading == "weighted" else 1
        return (w,) * k + (1,) * mc

    def k_block(self, key: str) -> tuple[TaylorJet, ...]:
        return tuple(self.K_jets[i] for i in self.blocks[key])

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "grading": self.grading,
            "num_params": self.num_params,
            "blocks": {k: list(v) for k, v in self.blocks.items()},
            "K": [j.to_dict() for j in self.K_jets],
            "R": [j.to_dict() for j in self.R_jets],
            "T": [j.to_dict() for j in self.T_jets],
            "kc": [j.to_dict() for j in self.kc_jets],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(data: dict) -> "ConjugacySolution":
        return ConjugacySolution(
            order=data["order"],
            grading=data["grading"],
            num_params=data["num_params"],
            K_jets=tuple(TaylorJet.from_dict(d) for d in data["K"]),
            R_jets=tuple(TaylorJet.from_dict(d) for d in data["R"]),
            T_jets=tuple(TaylorJet.from_dict(d) for d in data["T"]),
            kc_jets=tuple(TaylorJet.from_dict(d) for d in data["kc"]),
            blocks={k: tuple(v) for k, v in data["blocks"].items()},
        )


def _weights(num_params: int, center_dim: int, grading: str) -> tuple[int, ...]:
    w = 2 if grading == "weighted" else 1
    return (w,) * num_params + (1,) * center_dim


def _graded_monomials(
    nvars: int, degree: int, weights: Sequence[int]
) -> list[tuple[int, ...]]:
    if all(w == 1 for w in weights):
        return list(monomials_of_degree(nvars, degree))
    return list(monomials_of_weighted_degree(nvars, degree, weights))


def _substitution_matrix(
    monos: Sequence[tuple[int, ...]],
    num_params: int,
    a_c: Matrix,
    max_order: int,
) -> Matrix:
    """Matrix of p |-> p o (lambda, A_c z) on the span of the given monomials."""
    mc = len(a_c)
    col_of = {m: j for j, m in enumerate(monos)}
    cols: list[list[Fraction]] = []
    for mono in monos:
        lam, phase = mono[:num_params], mono[num_params:]
        # expand prod_j (sum_i a_c[j][i] z_i)^{phase_j} exactly
        poly: dict[tuple[int, ...], Fraction] = {(0,) * mc: Fraction(1)}
        for j, e in enumerate(phase):
            for _ in range(e):
                nxt: dict[tuple[int, ...], Fraction] = {}
                for idx, c in poly.items():
                    for i in range(mc):
                        if a_c[j][i] == 0:
                            continue
                        nidx = list(idx)
                        nidx[i] += 1
                        key = tuple(nidx)
                        nxt[key] = nxt.get(key, Fraction(0)) + c * a_c[j][i]
                poly = nxt
        col = [Fraction(0)] * len(monos)
        for idx, c in poly.items():
            target = lam + idx
            col[col_of[target]] = c
        cols.append(col)
    return tuple(tuple(cols[j][i] for j in range(len(monos))) for i in range(len(monos)))


def _check_linear_part(
    F_jets: Sequence[TaylorJet], s: LinearSplitting, num_params: int
) -> None:
    m = s.dim
    for i, jet in enumerate(F_jets):
        if jet.constant_term() != 0:
            raise ValueError(f"F component {i} has a nonzero constant term")
        for v in range(num_params):
            idx = [0] * jet.nvars
            idx[v] = 1
            if jet.coeff(idx) != 0:
                raise ValueError(
                    "F has a nonzero parameter-linear part; extend the system "
                    "with extend_with_parameters first"
                )
        for j in range(m):
            idx = [0] * jet.nvars
            idx[num_params + j] = 1
            if jet.coeff(idx) != s.A_diag[i][j]:
                raise ValueError(
                    f"linear part of F[{i}] in variable x{j} is {jet.coeff(idx)}, "
                    f"expected A_diag entry {s.A_diag[i][j]}"
                )


def solve_order_by_order(
    F_jets: Sequence[TaylorJet],
    s: LinearSplitting,
    kc: Sequence[TaylorJet] | TaylorJet,
    order: int,
    grading: str = "total",
) -> ConjugacySolution:
    """Solve the conjugacy equation through the given graded order.

    F_jets: the full map in diagonalized coordinates (one jet per phase
    component, parameter variables first), with linear part exactly A_diag
    and no constant or parameter-linear terms.  kc: prescribed center
    styling, jets in (parameters, center variables), zero through degree 1.
    """
    if grading not in ("total", "weighted"):
        raise ValueError("grading must be 'total' or 'weighted'")
    if order < 1:
        raise ValueError("order must be >= 1")
    m = s.dim
    if len(F_jets) != m:
        raise ValueError(f"need {m} F components, got {len(F_jets)}")
    num_params = F_jets[0].num_params
    if any(j.num_params != num_params or j.num_phase != m for j in F_jets):
        raise ValueError("F component jets have inconsistent layouts")
    _check_linear_part(F_jets, s, num_params)

    c_idx, u_idx, s_idx = s.blocks["c"], s.blocks["u"], s.blocks["s"]
    mc = len(c_idx)
    if mc == 0:
        raise ValueError("splitting has no center block")
    if isinstance(kc, TaylorJet):
        kc = (kc,)
    kc = tuple(kc)
    if len(kc) != mc:
        raise ValueError(f"kc needs {mc} components, got {len(kc)}")
    nred = num_params + mc
    for comp in kc:
        if comp.num_params != num_params or comp.num_phase != mc:
            raise ValueError("kc jets must live on (parameters, center variables)")
        if comp.constant_term() != 0:
            raise ValueError("kc must vanish at the origin")
        for v in range(nred):
            idx = [0] * nred
            idx[v] = 1
            if comp.coeff(idx) != 0:
                raise ValueError("kc must have zero linear part")

    weights = _weights(num_params, mc, grading)
    a_c = la.submatrix(s.A_diag, c_idx, c_idx)
    a_u = la.submatrix(s.A_diag, u_idx, u_idx)
    a_s = la.submatrix(s.A_diag, s_idx, s_idx)
    if u_idx:
        la.inverse(a_u)  # raises if A_u singular
    la.inverse(a_c)      # raises if A_c singular

    zero = TaylorJet.zero(num_params, mc, order)

    # K phase components: identity on the center block plus kc, unknowns
    # elsewhere; R starts from A_c z.
    K = [zero for _ in range(m)]
    for pos, i in enumerate(c_idx):
        var = TaylorJet.variable(num_params, mc, order, num_params + pos)
        K[i] = var + kc[pos].truncate(order)
    R = []
    for pos in range(mc):
        lin = zero
        for q in range(mc):
            if a_c[pos][q] != 0:
                lin = lin + TaylorJet.variable(
                    num_params, mc, order, num_params + q
                ).scale(a_c[pos][q])
        R.append(lin)

    def residual_jets(K_cur, R_cur) -> list[TaylorJet]:
        return conjugacy_residual_jets(
            F_jets, K_cur, R_cur, num_params, mc, order, weights
        )

    diag_center = _is_diagonal_matrix(a_c)

    for d in range(2, order + 1):
        monos = _graded_monomials(nred, d, weights)
        if not monos:
            continue
        res = residual_jets(K, R)
        sub = _substitution_matrix(monos, num_params, a_c, order)

        # center block: explicit update r_d := E_d,c
        for pos, i in enumerate(c_idx):
            part = _graded_slice(res[i], d, weights)
            R[pos] = R[pos] + part

        # hyperbolic blocks: solve (S_d - A_block) k_d = E_d
        for block_idx, a_blk in ((u_idx, a_u), (s_idx, a_s)):
            if not block_idx:
                continue
            rhs_parts = [_graded_slice(res[i], d, weights) for i in block_idx]
            sol = _solve_homological(
                monos, sub, a_blk, rhs_parts, d, diag_center, a_c, num_params
            )
            for pos, i in enumerate(block_idx):
                K[i] = K[i] + TaylorJet(num_params, mc, order, sol[pos])

    # exactness check: residual vanishes through the requested order
    res = residual_jets(K, R)
    for i, jet in enumerate(res):
        if not jet.is_zero():
            raise AssertionError(
                f"conjugacy residual component {i} nonzero: {jet!r}"
            )

    T = invert_R_jets(R, num_params, order, weights)
    return ConjugacySolution(
        order=order,
        grading=grading,
        num_params=num_params,
        K_jets=tuple(K),
        R_jets=tuple(R),
        T_jets=tuple(T),
        kc_jets=kc,
        blocks={k: tuple(v) for k, v in s.blocks.items()},
    )


def _graded_slice(jet: TaylorJet, degree: int, weights: Sequence[int]) -> TaylorJet:
    if all(w == 1 for w in weights):
        return jet.graded_part(degree)
    return jet.graded_part(degree, weights)


def _is_diagonal_matrix(m: Matrix) -> bool:
    return all(
        m[i][j] == 0 for i in range(len(m)) for j in range(len(m)) if i != j
    )


def _solve_homological(
    monos, sub, a_blk, rhs_parts, degree, diag_center, a_c, num_params
):
    """Solve (S_d - A_blk) k = rhs exactly; returns per-component coeff dicts."""
    nb = len(a_blk)
    nm = len(monos)
    if diag_center and _is_diagonal_matrix(a_blk):
        # decoupled per monomial: (mu^alpha - a_blk[p][p]) k = rhs
        out = [dict() for _ in range(nb)]
        mu = [a_c[i][i] for i in range(len(a_c))]
        for j, mono in enumerate(monos):
            factor = Fraction(1)
            for q, e in enumerate(mono[num_params:]):
                factor *= mu[q] ** e
            for p in range(nb):
                denom = factor - a_blk[p][p]
                if denom == 0:
                    raise ResonanceError(
                        f"resonance obstruction at order {degree}: monomial "
                        f"{mono} resonates with eigenvalue {a_blk[p][p]}"
                    )
                val = rhs_parts[p].coeff(mono)
                if val != 0:
                    out[p][mono] = val / denom
        return out

    # general case: one exact linear solve of size nb * nm
    size = nb * nm
    rows = []
    rhs_vec = []
    for p in range(nb):
        for j in range(nm):
            row = [Fraction(0)] * size
            for jj in range(nm):
                row[p * nm + jj] += sub[j][jj]
            for pp in range(nb):
                if a_blk[p][pp] != 0:
                    row[pp * nm + j] -= a_blk[p][pp]
            rows.append(tuple(row))
            rhs_vec.append(rhs_parts[p].coeff(monos[j]))
    try:
        sol = la.solve(tuple(rows), rhs_vec)
    except ZeroDivisionError as exc:
        raise ResonanceError(
            f"resonance obstruction at order {degree}: homological system singular"
        ) from exc
    out = [dict() for _ in range(nb)]
    for p in range(nb):
        for j in range(nm):
            v = sol[p * nm + j]
            if v != 0:
                out[p][monos[j]] = v
    return out


def conjugacy_residual_jets(
    F_jets: Sequence[TaylorJet],
    K: Sequence[TaylorJet],
    R: Sequence[TaylorJet],
    num_params: int,
    mc: int,
    order: int,
    weights: Sequence[int],
) -> list[TaylorJet]:
    """Jets of F o K - K o R, truncated at the graded order."""
    weighted = not all(w == 1 for w in weights)
    fk = [jet_compose(f, list(K), order) for f in F_jets]
    # K o R: substitute the R components for the center variables
    kr = [jet_compose(k, list(R), order) for k in K]
    out = []
    for a, b in zip(fk, kr):
        diff = a - b
        if weighted:
            diff = diff.truncate_weighted(order, weights)
        out.append(diff)
    return out


def invert_R_jets(
    R: Sequence[TaylorJet],
    num_params: int,
    order: int,
    weights: Sequence[int] | None = None,
) -> tuple[TaylorJet, ...]:
    """Jet T of R^{-1} with R o T = T o R = id through the order.

    Series reversion order by order: the linear part inverts exactly, and at
    degree d the defect of R o T feeds back through the inverse linear part.
    """
    mc = len(R)
    if mc == 0:
        raise ValueError("empty map")
    nred = num_params + mc
    if weights is None:
        weights = (1,) * nred
    lin = [[R[i].coeff(_unit(nred, num_params + j)) for j in range(mc)]
           for i in range(mc)]
    for i in range(mc):
        for v in range(num_params):
            if R[i].coeff(_unit(nred, v)) != 0:
                raise ValueError("R must not have parameter-linear terms")
    lin_inv = la.inverse(la.mat(lin))  # raises if linear part singular

    T = []
    for i in range(mc):
        jet = TaylorJet.zero(num_params, mc, order)
        for j in range(mc):
            if lin_inv[i][j] != 0:
                jet = jet + TaylorJet.variable(
                    num_params, mc, order, num_params + j
                ).scale(lin_inv[i][j])
        T.append(jet)

    for d in range(2, order + 1):
        # defect of R o T at graded degree d
        rt = [jet_compose(r, T, order) for r in R]
        defects = []
        for j in range(mc):
            target = TaylorJet.variable(num_params, mc, order, num_params + j)
            defects.append(_graded_slice(rt[j] - target, d, weights))
        if all(dft.is_zero() for dft in defects):
            continue
        for i in range(mc):
            corr = TaylorJet.zero(num_params, mc, order)
            for j in range(mc):
                if lin_inv[i][j] != 0:
                    corr = corr + defects[j].scale(lin_inv[i][j])
            T[i] = T[i] - corr
    return tuple(T)


def _unit(n: int, v: int) -> tuple[int, ...]:
    idx = [0] * n
    idx[v] = 1
    return tuple(idx)


def invert_R_jet(R_jet: TaylorJet, order: int) -> TaylorJet:
    """Single-component convenience wrapper around :func:`invert_R_jets`."""
    (t,) = invert_R_jets([R_jet], R_jet.num_params, order)
    return t


# -- normal-form targeting -----------------------------------------------------


def normal_form_kc(
    F_jets: Sequence[TaylorJet],
    s: LinearSplitting,
    targets: Sequence[tuple[int, tuple[int, ...]]],
    order: int,
    grading: str = "total",
) -> tuple[TaylorJet, ...]:
    """Choose kc so the targeted monomials of R vanish.

    Targets are (center component, multi-index) pairs in the reduced
    variables.  Solved degree by degree: within each graded degree the
    linear map from the kc coefficients at the targeted positions to the
    corresponding R coefficients is inverted exactly; a singular map is a
    resonance and is reported with the offending monomial.
    """
    num_params = F_jets[0].num_params
    mc = len(s.blocks["c"])
    nred = num_params + mc
    weights = _weights(num_params, mc, grading)

    def wdeg(mono: tuple[int, ...]) -> int:
        return sum(e * w for e, w in zip(mono, weights))

    by_degree: dict[int, list[tuple[int, tuple[int, ...]]]] = {}
    for comp, mono in targets:
        if comp >= mc or len(mono) != nred:
            raise ValueError(f"bad target ({comp}, {mono})")
        by_degree.setdefault(wdeg(mono), []).append((comp, tuple(mono)))

    kc = [TaylorJet.zero(num_params, mc, order) for _ in range(mc)]
    for d in sorted(by_degree):
        if d > order:
            raise ValueError(f"target degree {d} exceeds the solve order {order}")
        batch = by_degree[d]
        base = solve_order_by_order(F_jets, s, kc, d, grading)
        base_vals = [base.R_jets[comp].coeff(mono) for comp, mono in batch]

        # sensitivities: unit perturbations of kc at the target positions
        cols = []
        for comp, mono in batch:
            pert = [k for k in kc]
            pert[comp] = pert[comp] + TaylorJet.monomial(
                num_params, mc, order, mono, 1
            )
            sol = solve_order_by_order(F_jets, s, pert, d, grading)
            cols.append(
                [
                    sol.R_jets[c2].coeff(m2) - bv
                    for (c2, m2), bv in zip(batch, base_vals)
                ]
            )
        sens = tuple(tuple(cols[j][i] for j in range(len(batch)))
                     for i in range(len(batch)))
        try:
            corr = la.solve(sens, [-v for v in base_vals])
        except ZeroDivisionError as exc:
            raise ResonanceError(
                f"resonant normal-form target at degree {d}: "
                f"{[m for _, m in batch]} (kc coefficient drops out)"
            ) from exc
        for (comp, mono), c in zip(batch, corr):
            if c != 0:
                kc[comp] = kc[comp] + TaylorJet.monomial(num_params, mc, order, mono, c)

    # verify: re-solve and check the targets vanished
    final = solve_order_by_order(F_jets, s, kc, order, grading)
    for comp, mono in targets:
        got = final.R_jets[comp].coeff(mono)
        if got != 0:
            raise AssertionError(f"target {mono} not annihilated: {got}")
    return tuple(kc)


# -- numerical residual check ----------------------------------------------------


def conjugacy_residual_numeric(
    F: Callable[[Sequence[float]], Sequence[float]],
    sol: ConjugacySolution,
    samples: Box,
    count: int,
    seed: int = 0,
) -> tuple[float, tuple[float, ...]]:
    """Max of ||F(K(z)) - K(R(z))|| / ||z||^(order+1) over random samples.

    The samples live in the reduced (parameter, center) box; the exact-zero
    sample is skipped.  Returns the maximum scaled residual and its location.
    """
    import random

    rng = random.Random(seed)
    worst = 0.0
    worst_at: tuple[float, ...] = tuple(0.0 for _ in range(samples.dim))
    npow = sol.order + 1
    for _ in range(count):
        z = samples.sample(rng)
        norm = max(abs(v) for v in z)
        if norm == 0.0:
            continue
        kz = [jet.eval_float(z) for jet in sol.K_jets]
        fz = F(kz)
        rz = list(z[: sol.num_params]) + [jet.eval_float(z) for jet in sol.R_jets]
        krz = [jet.eval_float(rz) for jet in sol.K_jets]
        res = max(abs(a - b) for a, b in zip(fz, krz))
        scaled = res / norm**npow
        if scaled > worst:
            worst, worst_at = scaled, z
    return worst, worst_at
