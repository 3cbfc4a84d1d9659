"""Linear-combination conversion step.

Given a left null vector u of the system Jacobian, one equation f_l is
replaced by a combination of suitably differentiated equations, which
strictly lowers Val(Σ) when the sufficient condition holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import sympy

from . import expr as ex
from .frontend import DaeSystem, Equation
from .sigma import Offsets, SignatureMatrix, signature_matrix


class ConversionRefused(ValueError):
    """A conversion step was requested although its preconditions fail."""


class ConversionError(AssertionError):
    """A performed step violated a guaranteed property (implementation bug)."""


@dataclass(frozen=True)
class LcAnalysis:
    u: tuple
    I: tuple
    theta: int | None
    L: tuple
    condition_ok: bool
    slack: tuple  # per column: (hod(x_j, u), d_j - theta)
    offsets: Offsets
    reason: str = ""


@dataclass(frozen=True)
class ConversionStep:
    method: str
    u: tuple
    pivot: int
    replaced: tuple
    added: tuple
    equivalence_condition: Any
    always_nonzero: bool
    val_before: float
    val_after: float
    before: DaeSystem = field(repr=False, compare=False)
    analysis: Any = field(default=None, repr=False, compare=False)
    details: dict = field(default_factory=dict, repr=False, compare=False)


def _nonzero_constant(e) -> bool:
    e = sympy.sympify(e)
    return e.is_Rational is True and e != 0


def choose_pivot(u: Sequence, L: Sequence[int]) -> int:
    """Prefer a nonzero constant u_l, then the smallest index."""
    consts = [l for l in L if _nonzero_constant(u[l])]
    if consts:
        return min(consts)
    return min(l for l in L if ex.normalize(u[l]) != 0)


def lc_analyze(sys: DaeSystem, sig: SignatureMatrix, off: Offsets, u: Sequence) -> LcAnalysis:
    u = tuple(ex.normalize(x) for x in u)
    I = tuple(i for i, x in enumerate(u) if x != 0)
    if not I:
        return LcAnalysis(u, I, None, (), False, (), off, "u is the zero vector")
    theta = min(off.c[i] for i in I)
    L = tuple(i for i in I if off.c[i] == theta)
    slack = tuple(
        (ex.hod_vector(u, sys.columns[j], sys.column_kind(j)), off.d[j] - theta) for j in range(sys.n)
    )
    bad = [j for j, (h, bound) in enumerate(slack) if not h < bound]
    reason = ""
    if len(I) < 2:
        reason = "u has a single nonzero entry"
    elif bad:
        reason = "; ".join(f"hod({sys.columns[j]}, u) = {_fmt(slack[j][0])} is not < d - theta = {slack[j][1]}" for j in bad)
    return LcAnalysis(u, I, theta, L, len(I) >= 2 and not bad, slack, off, reason)


def _fmt(v) -> str:
    return "-inf" if v == ex.NEG_INF else str(int(v))


def combination(sys: DaeSystem, u: Sequence, off: Offsets, theta: int) -> sympy.Expr:
    """Σ u_i f_i^(c_i - θ) over the nonzero entries of u."""
    total = sympy.Integer(0)
    for i, ui in enumerate(u):
        if ex.normalize(ui) != 0:
            total += ui * ex.total_derivative(sys.exprs[i], off.c[i] - theta)
    return ex.normalize(total)


def replaced_name(name: str) -> str:
    return name if name.endswith("_bar") else name + "_bar"


def orient(u: Sequence, l: int) -> tuple:
    """Scale u by ±1 so that u_l has a positive leading coefficient."""
    if sympy.sympify(u[l]).could_extract_minus_sign():
        return tuple(ex.normalize(-x) for x in u)
    return tuple(u)


def lc_step(sys: DaeSystem, analysis: LcAnalysis, l: int | None = None, sig: SignatureMatrix | None = None):
    """Replace f_l by the combination; returns (converted system, step record)."""
    sig = sig or signature_matrix(sys)
    if not analysis.condition_ok:
        raise ConversionRefused("LC condition fails: " + analysis.reason)
    if l is None:
        l = choose_pivot(analysis.u, analysis.L)
    if l not in analysis.L:
        raise ConversionRefused(f"pivot {l + 1} is not in L = {[i + 1 for i in analysis.L]}")
    u = analysis.u
    fbar = combination(sys, u, analysis.offsets, analysis.theta)
    eqs = list(sys.equations)
    new_name = replaced_name(eqs[l].name)
    eqs[l] = Equation(new_name, fbar)
    new = sys.with_equations(eqs)
    new_sig = signature_matrix(new)
    if new_sig.well_posed and not new_sig.val < sig.val:
        raise ConversionError(f"Val did not decrease ({sig.val} -> {new_sig.val})")
    step = ConversionStep(
        method="LC",
        u=u,
        pivot=l,
        replaced=(sys.equations[l].name,),
        added=(new_name,),
        equivalence_condition=u[l],
        always_nonzero=_nonzero_constant(u[l]),
        val_before=sig.val,
        val_after=new_sig.val,
        before=sys,
        analysis=analysis,
        details={"theta": analysis.theta, "I": analysis.I, "L": analysis.L},
    )
    new = new.with_equations(new.equations, provenance=step)
    return new, step


def detect_ill_posed(converted: DaeSystem) -> bool:
    return not signature_matrix(converted).well_posed


def lc_recover(converted: DaeSystem, step: ConversionStep) -> DaeSystem:
    """Rebuild f_l from the converted system: f_l = (f̄_l − Σ_{i≠l} u_i f_i^(c_i−θ)) / u_l."""
    l, u = step.pivot, step.u
    if ex.normalize(u[l]) == 0:
        raise ValueError("u_l vanishes identically")
    off, theta = step.analysis.offsets, step.analysis.theta
    rest = sympy.Integer(0)
    for i, ui in enumerate(u):
        if i != l and ex.normalize(ui) != 0:
            rest += ui * ex.total_derivative(converted.exprs[i], off.c[i] - theta)
    f_l = ex.normalize((converted.exprs[l] - rest) / u[l])
    eqs = list(converted.equations)
    eqs[l] = Equation(step.replaced[0], f_l)
    return step.before.with_equations(eqs)


def row_locality(before: SignatureMatrix, after: SignatureMatrix, l: int) -> bool:
    return all(before.entries[i] == after.entries[i] for i in range(before.n) if i != l)
