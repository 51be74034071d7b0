"""Exact linear algebra over the rationals.

Matrices are tuples of tuples of ``Fraction``.  Everything here is small
(dimensions <= 6 in practice), so plain Gaussian elimination with exact
pivoting is both simplest and fastest.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence, Union

Rational = Union[int, Fraction]
Matrix = tuple[tuple[Fraction, ...], ...]
Vector = tuple[Fraction, ...]


def mat(rows: Sequence[Sequence[Rational]]) -> Matrix:
    m = tuple(tuple(Fraction(x) for x in row) for row in rows)
    if m and any(len(r) != len(m[0]) for r in m):
        raise ValueError("ragged matrix")
    return m


def vec(entries: Sequence[Rational]) -> Vector:
    return tuple(Fraction(x) for x in entries)


def identity(n: int) -> Matrix:
    return tuple(
        tuple(Fraction(1) if i == j else Fraction(0) for j in range(n))
        for i in range(n)
    )


def zeros(rows: int, cols: int) -> Matrix:
    return tuple((Fraction(0),) * cols for _ in range(rows))


def mat_add(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_scale(a: Matrix, s: Rational) -> Matrix:
    s = Fraction(s)
    return tuple(tuple(x * s for x in row) for row in a)


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    if a and b and len(a[0]) != len(b):
        raise ValueError("inner dimension mismatch")
    bt = tuple(zip(*b))
    return tuple(
        tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a
    )


def mat_vec(a: Matrix, v: Sequence[Rational]) -> Vector:
    if a and len(a[0]) != len(v):
        raise ValueError("dimension mismatch")
    v = vec(v)
    return tuple(sum(x * y for x, y in zip(row, v)) for row in a)


def transpose(a: Matrix) -> Matrix:
    return tuple(zip(*a))


def submatrix(a: Matrix, rows: Sequence[int], cols: Sequence[int]) -> Matrix:
    return tuple(tuple(a[i][j] for j in cols) for i in rows)


def solve(a: Matrix, b: Sequence[Rational]) -> Vector:
    """Exact solution of a x = b; raises on singular a."""
    n = len(a)
    if n == 0 or len(a[0]) != n or len(b) != n:
        raise ValueError("solve needs a square system")
    aug = [list(row) + [Fraction(x)] for row, x in zip(a, vec(b))]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("singular system")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return tuple(row[n] for row in aug)


def inverse(a: Matrix) -> Matrix:
    n = len(a)
    if n == 0 or len(a[0]) != n:
        raise ValueError("inverse of non-square matrix")
    cols = [solve(a, [Fraction(1) if i == j else Fraction(0) for i in range(n)])
            for j in range(n)]
    return transpose(tuple(cols))


def nullspace(a: Matrix) -> list[Vector]:
    """Basis of the kernel, each vector normalized to last nonzero entry 1."""
    if not a:
        return []
    rows = [list(r) for r in a]
    n_rows, n_cols = len(rows), len(rows[0])
    pivots: list[int] = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, n_rows) if rows[i][c] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(n_rows):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    free = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * n_cols
        v[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -rows[i][fc]
        basis.append(_normalize_last(tuple(v)))
    return basis


def _normalize_last(v: Vector) -> Vector:
    last = next((x for x in reversed(v) if x != 0), None)
    if last is None:
        return v
    return tuple(x / last for x in v)


def charpoly(a: Matrix) -> list[Fraction]:
    """Coefficients of det(xI - A), highest degree first (monic).

    Faddeev-LeVerrier: exact, no pivoting headaches.
    """
    n = len(a)
    if n == 0 or len(a[0]) != n:
        raise ValueError("charpoly of non-square matrix")
    coeffs = [Fraction(1)]
    m = zeros(n, n)
    for k in range(1, n + 1):
        m = mat_mul(a, m)
        m = tuple(
            tuple(m[i][j] + (coeffs[k - 1] if i == j else 0) for j in range(n))
            for i in range(n)
        )
        am = mat_mul(a, m)
        trace = sum(am[i][i] for i in range(n))
        coeffs.append(Fraction(-trace, k))
    return coeffs


def poly_eval(coeffs: Sequence[Fraction], x: Rational) -> Fraction:
    acc = Fraction(0)
    for c in coeffs:
        acc = acc * x + c
    return acc


def rational_roots(coeffs: Sequence[Fraction]) -> list[tuple[Fraction, int]]:
    """Rational roots with multiplicities of a polynomial over Q.

    Coefficients highest-first.  Clears denominators and applies the rational
    root theorem with repeated deflation.
    """
    coeffs = [Fraction(c) for c in coeffs]
    while coeffs and coeffs[0] == 0:
        coeffs = coeffs[1:]
    if len(coeffs) <= 1:
        return []
    roots: dict[Fraction, int] = {}
    work = list(coeffs)
    while len(work) > 1:
        # strip zero roots
        if work[-1] == 0:
            roots[Fraction(0)] = roots.get(Fraction(0), 0) + 1
            work = work[:-1]
            continue
        den = 1
        for c in work:
            den = den * c.denominator // _gcd(den, c.denominator)
        ints = [int(c * den) for c in work]
        lead, const = ints[0], ints[-1]
        found = None
        for p in _divisors(abs(const)):
            for q in _divisors(abs(lead)):
                for cand in (Fraction(p, q), Fraction(-p, q)):
                    if poly_eval(work, cand) == 0:
                        found = cand
                        break
                if found is not None:
                    break
            if found is not None:
                break
        if found is None:
            break
        roots[found] = roots.get(found, 0) + 1
        work = _deflate(work, found)
    return sorted(roots.items())


def _deflate(coeffs: list[Fraction], root: Fraction) -> list[Fraction]:
    out = [coeffs[0]]
    for c in coeffs[1:-1]:
        out.append(c + out[-1] * root)
    return out


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _divisors(n: int) -> list[int]:
    if n == 0:
        return [1]
    out = []
    d = 1
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            if d != n // d:
                out.append(n // d)
        d += 1
    return sorted(out)


def inf_norm(a: Matrix) -> Fraction:
    """Induced infinity norm: max absolute row sum (exact)."""
    if not a:
        return Fraction(0)
    return max(sum(abs(x) for x in row) for row in a)


def vec_inf_norm(v: Sequence[Rational]) -> Fraction:
    return max((abs(Fraction(x)) for x in v), default=Fraction(0))
