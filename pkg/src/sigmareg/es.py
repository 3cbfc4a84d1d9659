"""Expression-substitution conversion step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import expr as ex
from .frontend import DaeSystem, Equation
from .lc import ConversionError, ConversionRefused, ConversionStep, _fmt, _nonzero_constant, choose_pivot
from .sigma import Offsets, SignatureMatrix, dominates, finite, from_entries, signature_matrix


@dataclass(frozen=True)
class EsAnalysis:
    u: tuple
    L: tuple
    s: int
    I: tuple
    C: int | None
    cond_hod_ok: bool
    cond_order_ok: bool
    hod_slack: tuple  # per column: (hod(x_j, u), bound)
    order_slack: tuple  # per j in L: (j, d_j - C)
    offsets: Offsets
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.s >= 2 and self.cond_hod_ok and self.cond_order_ok


def es_analyze(sys: DaeSystem, sig: SignatureMatrix, off: Offsets, u: Sequence) -> EsAnalysis:
    u = tuple(ex.normalize(x) for x in u)
    n = sys.n
    L = tuple(j for j, x in enumerate(u) if x != 0)
    I = tuple(i for i in range(n) if any(finite(sig[i, j]) and off.d[j] - off.c[i] == sig[i, j] for j in L))
    if not L or not I:
        return EsAnalysis(u, L, len(L), I, None, False, False, (), (), off, "empty index set")
    C = max(off.c[i] for i in I)
    hod_slack = []
    for j in range(n):
        bound = off.d[j] - C - (1 if j in L else 0)
        hod_slack.append((ex.hod_vector(u, sys.columns[j], sys.column_kind(j)), bound))
    order_slack = tuple((j, off.d[j] - C) for j in L)
    hod_ok = all(h <= b for h, b in hod_slack)
    order_ok = all(v >= 0 for _, v in order_slack)
    reasons = []
    if len(L) < 2:
        reasons.append("u has a single nonzero entry")
    for j, (h, b) in enumerate(hod_slack):
        if not h <= b:
            reasons.append(f"hod({sys.columns[j]}, u) = {_fmt(h)} exceeds {b}")
    for j, v in order_slack:
        if v < 0:
            reasons.append(f"d_{j + 1} - C = {v} < 0")
    return EsAnalysis(u, L, len(L), I, C, hod_ok, order_ok, tuple(hod_slack), order_slack, off, "; ".join(reasons))


def _identifiers(sys: DaeSystem) -> set:
    names = set(sys.columns) | set(sys.inputs) | {c for c, _ in sys.constants} | {f for f, _ in sys.functions}
    return names | {"t"}


def aux_names(sys: DaeSystem, cols: Sequence[int]) -> dict:
    taken = _identifiers(sys)
    for prefix in ("y", "w", "v", "z", "aux"):
        names = {j: f"{prefix}{j + 1}" for j in cols}
        if not taken & set(names.values()):
            return names
    k = 1
    while True:
        names = {j: f"aux{k}_{j + 1}" for j in cols}
        if not taken & set(names.values()):
            return names
        k += 1


def es_step(sys: DaeSystem, analysis: EsAnalysis, l: int | None = None, keep_pivot_aux: bool = False, sig=None):
    """Introduce auxiliaries for x_j^(d_j−C), j ∈ L\\{l}; returns (converted system, step record)."""
    sig = sig or signature_matrix(sys)
    if not analysis.ok:
        raise ConversionRefused("ES conditions fail: " + analysis.reason)
    if l is None:
        l = choose_pivot(analysis.u, analysis.L)
    if l not in analysis.L:
        raise ConversionRefused(f"pivot {l + 1} is not in L = {[j + 1 for j in analysis.L]}")
    u, off, C, n = analysis.u, analysis.offsets, analysis.C, sys.n
    others = [j for j in analysis.L if j != l]
    new_cols = sorted(others + ([l] if keep_pivot_aux else []))
    names = aux_names(sys, new_cols)
    ratio = {j: ex.normalize(u[j] / u[l]) for j in others}
    xl = sys.column_atom(l, off.d[l] - C)
    y = {j: ex.AuxSym(names[j]) for j in new_cols}
    repl = {j: ex.normalize(y[j] + ratio[j] * xl) for j in others}

    eqs = list(sys.equations)
    table = []
    for i in analysis.I:
        subs = {}
        for j in others:
            order = off.d[j] - off.c[i]
            if finite(sig[i, j]) and sig[i, j] == order:
                subs[sys.column_atom(j, order)] = ex.total_derivative(repl[j], C - off.c[i])
                table.append((i, j, order))
        if subs:
            eqs[i] = Equation(eqs[i].name, ex.normalize(eqs[i].expr.xreplace(subs)))
    added = []
    for j in new_cols:
        body = -y[j] + sys.column_atom(j, off.d[j] - C)
        if j != l:
            body -= ratio[j] * xl
        name = f"g_{sys.columns[j]}"
        added.append(name)
        eqs.append(Equation(name, ex.normalize(body)))
    new = sys.with_equations(eqs, aux=sys.aux + tuple(names[j] for j in new_cols))
    new_sig = signature_matrix(new)
    if new_sig.well_posed and not new_sig.val < sig.val:
        raise ConversionError(f"Val did not decrease ({sig.val} -> {new_sig.val})")
    d_bar = tuple(off.d) + (C,) * len(new_cols)
    c_bar = tuple(off.c) + (C,) * len(new_cols)
    hod_bound_ok = all(
        ex.hod(repl[j], sys.columns[k], sys.column_kind(k)) <= off.d[k] - C - (1 if k in others else 0)
        for j in others
        for k in range(n)
    )
    if not hod_bound_ok:
        raise ConversionError("replacement expression exceeds the HOD bound")
    step = ConversionStep(
        method="ES",
        u=u,
        pivot=l,
        replaced=tuple(sys.equations[i].name for i in sorted({i for i, _, _ in table})),
        added=tuple(added),
        equivalence_condition=u[l],
        always_nonzero=_nonzero_constant(u[l]),
        val_before=sig.val,
        val_after=new_sig.val,
        before=sys,
        analysis=analysis,
        details={
            "C": C,
            "aux": {j: names[j] for j in new_cols},
            "ratio": ratio,
            "substitutions": tuple(table),
            "c_bar": c_bar,
            "d_bar": d_bar,
            "keep_pivot_aux": keep_pivot_aux,
            "n": n,
            "offsets_dominate": dominates(new_sig, c_bar, d_bar),
        },
    )
    return new.with_equations(new.equations, provenance=step), step


def es_sigma_blockcheck(converted: DaeSystem, step: ConversionStep, entries=None) -> bool:
    """Check the block relations of the converted signature matrix against d̄, c̄."""
    sig = from_entries(entries) if entries is not None else signature_matrix(converted)
    det = step.details
    n, l, C = det["n"], step.pivot, det["C"]
    L = set(step.analysis.L)
    aux_cols = sorted(det["aux"])  # original column index j for each new column, in order
    new_col = {j: n + k for k, j in enumerate(aux_cols)}
    d_bar, c_bar = det["d_bar"], det["c_bar"]
    N = n + len(aux_cols)
    if sig.n != N:
        return False

    def rel(i, j):
        return None if not finite(sig[i, j]) else sig[i, j] - (d_bar[j] - c_bar[i])

    for i in range(n):
        for j in range(N):
            r = rel(i, j)
            if j < n:
                limit = -1 if j in L else 0
                if r is not None and r > limit:
                    return False
            elif aux_cols[j - n] == l:
                if r is not None:
                    return False
            elif r is not None and r > 0:
                return False
    for k, r_col in enumerate(aux_cols):
        i = n + k
        for j in range(N):
            r = rel(i, j)
            if j < n:
                if j == r_col or (j == l and r_col != l):
                    if r != 0:
                        return False
                elif r_col == l:
                    if r is not None:
                        return False
                elif j in L:
                    if r is not None and r >= 0:
                        return False
                elif r is not None and r > 0:
                    return False
            else:
                if j == new_col[r_col]:
                    if r != 0:
                        return False
                elif r is not None:
                    return False
    return True


def es_recover(converted: DaeSystem, step: ConversionStep) -> DaeSystem:
    """Substitute the auxiliary definitions back into the first n equations."""
    l, det = step.pivot, step.details
    if ex.normalize(step.u[l]) == 0:
        raise ValueError("u_l vanishes identically")
    before, C, off = step.before, det["C"], step.analysis.offsets
    xl = before.column_atom(l, off.d[l] - C)
    defs = {}
    for j, name in det["aux"].items():
        body = before.column_atom(j, off.d[j] - C)
        if j != l:
            body = body - det["ratio"][j] * xl
        defs[name] = ex.normalize(body)
    eqs = []
    for eq in converted.equations[: det["n"]]:
        subs = {}
        for a in eq.expr.free_symbols:
            if isinstance(a, ex.AuxSym) and a.base in defs:
                subs[a] = ex.total_derivative(defs[a.base], a.order)
        eqs.append(Equation(eq.name, ex.normalize(eq.expr.xreplace(subs))))
    return before.with_equations(eqs)


def pivot_aux_absent(converted: DaeSystem, step: ConversionStep) -> bool:
    """y_l never occurs in the first n equations (meaningful with keep_pivot_aux)."""
    name = step.details["aux"].get(step.pivot)
    if name is None:
        return True
    return all(ex.hod(e.expr, name, ex.AuxSym) == ex.NEG_INF for e in converted.equations[: step.details["n"]])
