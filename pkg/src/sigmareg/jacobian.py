"""System Jacobian, singularity classification and kernel vectors."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np
import sympy
from sympy import Add, Expr, fraction, gcd_list, lcm_list
from sympy.polys.polyerrors import PolificationFailed
from sympy.polys.polytools import parallel_poly_from_expr

from . import expr as ex
from .frontend import DaeSystem
from .sigma import Offsets, SignatureMatrix, max_matching

GENERIC = "generically nonsingular"
IDENTICAL = "identically singular"
STRUCTURAL = "structurally singular"

DET_BOUND = 12


class NoKernelError(ValueError):
    """The matrix has full rank; no null vector exists."""


@dataclass(frozen=True)
class SystemJacobian:
    entries: tuple
    offsets: Offsets
    classification: str
    det: Expr | None

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def singular(self) -> bool:
        return self.classification != GENERIC


@dataclass(frozen=True)
class NullVector:
    u: tuple
    side: str  # "left": Jᵀu = 0, "right": Ju = 0


# --------------------------------------------------------------------------
# construction


def jacobian_entries(sys: DaeSystem, off: Offsets, relations: Sequence = ()) -> list:
    rows = []
    for i, f in enumerate(sys.exprs):
        row = []
        for j in range(sys.n):
            k = off.d[j] - off.c[i]
            if k >= 0 and sys.hod(f, j) == k:
                entry = ex.partial(f, sys.column_atom(j, k))
                if relations:
                    entry = reduce_modulo(entry, relations)
                row.append(entry)
            else:
                row.append(sympy.Integer(0))
        rows.append(row)
    return rows


def system_jacobian(
    sys: DaeSystem, sig: SignatureMatrix, off: Offsets, relations: Sequence = (), det_bound: int = DET_BOUND
) -> SystemJacobian:
    del sig  # entries depend on the offsets alone
    entries = jacobian_entries(sys, off, relations)
    cls, det = classify(entries, det_bound=det_bound)
    if det is not None and relations:
        det = reduce_modulo(det, relations)
        if det == 0 and cls == GENERIC:
            cls = IDENTICAL
    return SystemJacobian(tuple(tuple(r) for r in entries), off, cls, det)


# --------------------------------------------------------------------------
# classification


def structurally_singular(m) -> bool:
    allowed = [[ex.normalize(e) != 0 for e in row] for row in m]
    return sum(1 for j in max_matching(allowed) if j >= 0) < len(m)


def _sampled_matrix(m, sampler) -> mpmath.matrix:
    n = len(m)
    out = mpmath.matrix(n, n)
    for i in range(n):
        for j in range(len(m[i])):
            out[i, j] = sampler.value(sympy.sympify(m[i][j]))
    return out


def _mp_det(a: mpmath.matrix):
    """Gaussian elimination with partial pivoting (mpmath's LU rejects exactly singular input)."""
    n = a.rows
    a = a.copy()
    det = mpmath.mpf(1)
    for k in range(n):
        p = max(range(k, n), key=lambda r: abs(a[r, k]))
        if a[p, k] == 0:
            return mpmath.mpf(0)
        if p != k:
            for c in range(n):
                a[p, c], a[k, c] = a[k, c], a[p, c]
            det = -det
        det *= a[k, k]
        for r in range(k + 1, n):
            f = a[r, k] / a[k, k]
            for c in range(k, n):
                a[r, c] -= f * a[k, c]
    return det


def _det_crosscheck(m, det, seed=None, repeats: int = 2) -> None:
    """Compare the symbolic determinant with a 50-digit numeric one at random points."""
    rng = random.Random(ex.current_seed() if seed is None else seed)
    with mpmath.workdps(50):
        for _ in range(repeats):
            s = ex._Sampler(rng)
            try:
                num = _mp_det(_sampled_matrix(m, s))
                sym = s.value(sympy.sympify(det))
            except ZeroDivisionError:
                continue
            scale = max(mpmath.mpf(1), abs(num), abs(sym))
            if abs(num - sym) > mpmath.mpf(10) ** -25 * scale:
                raise ex.IdentityCheckError("symbolic determinant disagrees with numeric evaluation")


def classify(m, det_bound: int = DET_BOUND, seed=None) -> tuple:
    """(classification, det or None)."""
    m = [[ex.normalize(e) for e in row] for row in m]
    if structurally_singular(m):
        return STRUCTURAL, (sympy.Integer(0) if len(m) <= det_bound else None)
    if len(m) <= det_bound:
        det = bareiss_det(m)
        _det_crosscheck(m, det, seed)
        return (IDENTICAL if det == 0 else GENERIC), det
    rank = len(_rref(m)[1])
    return (IDENTICAL if rank < len(m) else GENERIC), None


def is_singular(m) -> str:
    return classify(m)[0]


# --------------------------------------------------------------------------
# determinants


def bareiss_det(m) -> Expr:
    """Fraction-free Bareiss elimination over the polynomial ring of the entries."""
    n = len(m)
    if n == 0:
        return sympy.Integer(1)
    rows, scale = [], sympy.Integer(1)
    for row in m:
        parts = [fraction(ex.normalize(e)) for e in row]
        den = lcm_list([q for _, q in parts]) if parts else sympy.Integer(1)
        scale *= den
        rows.append([sympy.cancel(p * den / q) for p, q in parts])
    flat = [e for row in rows for e in row]
    try:
        polys, _ = parallel_poly_from_expr(flat, domain="QQ")
    except PolificationFailed:  # all entries are numbers
        z = sympy.Dummy()
        polys = [sympy.Poly(e, z, domain="QQ") for e in flat]
    a = [polys[i * n : (i + 1) * n] for i in range(n)]
    sign, prev = 1, None
    for k in range(n - 1):
        if a[k][k].is_zero:
            swap = next((r for r in range(k + 1, n) if not a[r][k].is_zero), None)
            if swap is None:
                return sympy.Integer(0)
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                num = a[i][j] * a[k][k] - a[i][k] * a[k][j]
                a[i][j] = num if prev is None else num.exquo(prev)
        prev = a[k][k]
    det = a[n - 1][n - 1].as_expr() * sign
    return ex.normalize(det / scale)


def cofactor_det(m) -> Expr:
    """Laplace expansion along the first row (test oracle, small n)."""
    n = len(m)
    if n == 0:
        return sympy.Integer(1)
    if n == 1:
        return ex.normalize(m[0][0])
    total = sympy.Integer(0)
    for j in range(n):
        if m[0][j] == 0:
            continue
        minor = [row[:j] + row[j + 1 :] for row in m[1:]]
        total += (-1) ** j * m[0][j] * cofactor_det(minor)
    return ex.normalize(total)


def numeric_det(m, point) -> float:
    vals = np.array([[complex(ex.evaluate(e, point)).real for e in row] for row in m], dtype=float)
    return float(np.linalg.det(vals)) if len(m) else 1.0


def evaluate_matrix(m, point) -> np.ndarray:
    return np.array([[float(ex.evaluate(e, point)) for e in row] for row in m], dtype=float)


# --------------------------------------------------------------------------
# kernels


def _size(e: Expr) -> int:
    return len(Add.make_args(fraction(e)[0]))


def _rref(m):
    """Reduced row echelon form over the rational-function field.

    Pivot rule: the nonzero entry with fewest monomials among the remaining
    rows and unused columns, ties broken by lowest (row, column).
    """
    a = [[ex.normalize(e) for e in row] for row in m]
    rows, cols = len(a), len(a[0]) if a else 0
    pivots, r, used = [], 0, set()
    while r < rows:
        best = None
        for i in range(r, rows):
            for j in range(cols):
                if j in used or a[i][j] == 0:
                    continue
                key = (_size(a[i][j]), i, j)
                if best is None or key < best:
                    best = key
        if best is None:
            break
        _, i, j = best
        a[r], a[i] = a[i], a[r]
        piv = a[r][j]
        a[r] = [ex.normalize(e / piv) for e in a[r]]
        for k in range(rows):
            if k != r and a[k][j] != 0:
                fac = a[k][j]
                a[k] = [ex.normalize(x - fac * y) for x, y in zip(a[k], a[r])]
        pivots.append((r, j))
        used.add(j)
        r += 1
    return a, pivots


def simplest_form(v: Sequence) -> tuple:
    """Clear denominators, remove the common factor, fix the sign of the first nonzero entry."""
    v = [ex.normalize(e) for e in v]
    dens = [fraction(e)[1] for e in v if e != 0]
    if not dens:
        return tuple(v)
    den = lcm_list(dens)
    v = [ex.normalize(e * den) for e in v]
    g = gcd_list([e for e in v if e != 0])
    if g != 0 and g != 1:
        v = [ex.normalize(e / g) for e in v]
    first = next(e for e in v if e != 0)
    if first.could_extract_minus_sign():
        v = [ex.normalize(-e) for e in v]
    return tuple(v)


def null_vector(m, side: str = "right") -> NullVector:
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    mat = [list(r) for r in m]
    if side == "left":
        mat = [list(col) for col in zip(*mat)]
    n = len(mat[0]) if mat else 0
    a, pivots = _rref(mat)
    free = [j for j in range(n) if j not in {c for _, c in pivots}]
    if not free:
        raise NoKernelError("matrix is nonsingular")
    f = free[0]
    v = [sympy.Integer(0)] * n
    v[f] = sympy.Integer(1)
    for r, c in pivots:
        v[c] = -a[r][f]
    return NullVector(simplest_form(v), side)


def kernel_residual(m, u: Sequence, side: str) -> list:
    mat = [list(r) for r in m]
    if side == "left":
        mat = [list(col) for col in zip(*mat)]
    return [ex.normalize(sum((x * y for x, y in zip(row, u)), sympy.Integer(0))) for row in mat]


def is_kernel_vector(m, u: Sequence, side: str) -> bool:
    return all(ex.is_identically_zero(r) for r in kernel_residual(m, u, side))


# --------------------------------------------------------------------------
# constraint-aware reduction


def _gens_order(gens) -> list:
    def key(g):
        if isinstance(g, ex.VarSym):
            return (0, g.base, g.order)
        return (1, str(g), 0)

    return sorted(gens, key=key)


def reduce_modulo(e, relations: Sequence) -> Expr:
    """Normal form of ``e`` modulo the ideal generated by declared relations (each ``= 0``)."""
    e = ex.normalize(e)
    if e == 0 or not relations:
        return e
    num, den = fraction(e)
    rels = [ex.normalize(r) for r in relations]
    rel_nums = [fraction(r)[0] for r in rels]
    _, info = parallel_poly_from_expr([num, den, *rel_nums])
    gens = _gens_order(info["gens"])
    basis = sympy.groebner(rel_nums, *gens, order="grevlex", domain="QQ")
    num_r = basis.reduce(num)[1]
    den_r = basis.reduce(den)[1]
    if ex.normalize(den_r) == 0:
        raise ZeroDivisionError("denominator vanishes modulo the declared relations")
    return ex.normalize(num_r / den_r)
