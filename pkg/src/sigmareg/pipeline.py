"""End-to-end driver: analysis, iterated regularization, solution scheme, success check."""

from __future__ import annotations

import sys as _sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy

from . import es as es_mod
from . import expr as ex
from . import jacobian as jc
from . import lc as lc_mod
from . import sigma as sg
from .frontend import DaeSystem

SUCCESS = "success"
ILL_POSED = "structurally ill-posed"
STUCK = "conversion-stuck"
CANCELLATION = "symbolic-cancellation-detected"
SA_FAILED = "sa-failed"

POLICIES = {
    "lc-first": ("LC", "ES"),
    "es-first": ("ES", "LC"),
    "lc-only": ("LC",),
    "es-only": ("ES",),
}


@dataclass
class Iteration:
    system: DaeSystem
    sigma: sg.SignatureMatrix
    offsets: sg.Offsets | None
    jacobian: jc.SystemJacobian | None

    @property
    def val(self):
        return self.sigma.val

    @property
    def index(self):
        return sg.structural_index(self.sigma, self.offsets) if self.offsets else None

    @property
    def dof(self):
        return sg.dof(self.sigma) if self.sigma.well_posed else None

    @property
    def classification(self):
        return self.jacobian.classification if self.jacobian else None

    @property
    def index_reliable(self) -> bool:
        return self.jacobian is not None and not self.jacobian.singular


@dataclass
class AnalysisReport:
    iterations: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    verdict: str = ""
    cancellation: sg.FormalReport | None = None
    refusals: list = field(default_factory=list)  # (method, reason) of the last failed attempt
    messages: list = field(default_factory=list)

    @property
    def final(self) -> Iteration:
        return self.iterations[-1]

    @property
    def system(self) -> DaeSystem:
        return self.final.system

    @property
    def ledger(self) -> list:
        return [(s.equivalence_condition, s.always_nonzero) for s in self.steps]

    @property
    def cancellation_detected(self) -> bool:
        return self.cancellation is not None and self.cancellation.alternative == "ii"

    @property
    def val_trace(self) -> list:
        return [it.val for it in self.iterations]


def _iteration(sys: DaeSystem, offsets=None, relations=(), det_bound=jc.DET_BOUND) -> Iteration:
    sig = sg.signature_matrix(sys)
    if not sig.well_posed:
        return Iteration(sys, sig, None, None)
    if offsets is None:
        off = sg.canonical_offsets(sig)
    else:
        off = sg.Offsets(tuple(offsets[0]), tuple(offsets[1]), False)
        if not sg.validate_offsets(sig, off.c, off.d):
            raise ValueError("supplied offsets are not valid for this signature matrix")
    jac = jc.system_jacobian(sys, sig, off, relations, det_bound)
    return Iteration(sys, sig, off, jac)


def analyze(sys: DaeSystem, offsets=None, relations: Sequence = (), det_bound: int = jc.DET_BOUND) -> AnalysisReport:
    """Single structural-analysis pass, no conversion."""
    rep = AnalysisReport()
    rep.cancellation = sg.formal_vs_true(sys)
    if rep.cancellation_detected:
        rep.messages.append(
            "formal signature matrix has Val %s > true Val %s: %s; re-analyzed on the simplified system"
            % (_v(rep.cancellation.formal.val), _v(rep.cancellation.true.val), CANCELLATION)
        )
    it = _iteration(sys, offsets, relations, det_bound)
    rep.iterations.append(it)
    if not it.sigma.well_posed:
        rep.verdict = ILL_POSED
    elif it.jacobian.singular:
        rep.verdict = SA_FAILED
        rep.messages.append(f"system Jacobian is {it.classification}; structural index {it.index} is unreliable")
    else:
        rep.verdict = SUCCESS
    return rep


def _v(v) -> str:
    return "-inf" if v == ex.NEG_INF else str(int(v))


def _try_lc(sys, it, u, pivot, auto):
    analysis = lc_mod.lc_analyze(sys, it.sigma, it.offsets, u)
    if not analysis.condition_ok:
        return None, analysis.reason
    l = lc_mod.choose_pivot(analysis.u, analysis.L) if pivot is None else pivot
    if l not in analysis.L:
        return None, f"pivot {l + 1} not in L = {[i + 1 for i in analysis.L]}"
    if auto:
        analysis = lc_mod.lc_analyze(sys, it.sigma, it.offsets, lc_mod.orient(analysis.u, l))
    return lc_mod.lc_step(sys, analysis, l, it.sigma), ""


def _try_es(sys, it, u, pivot, keep):
    analysis = es_mod.es_analyze(sys, it.sigma, it.offsets, u)
    if not analysis.ok:
        return None, analysis.reason
    l = lc_mod.choose_pivot(analysis.u, analysis.L) if pivot is None else pivot
    if l not in analysis.L:
        return None, f"pivot {l + 1} not in L = {[j + 1 for j in analysis.L]}"
    return es_mod.es_step(sys, analysis, l, keep, it.sigma), ""


def regularize(
    sys: DaeSystem,
    policy: str = "lc-first",
    max_iters: int | None = None,
    pivots: Sequence | None = None,
    vectors: Sequence | None = None,
    relations: Sequence = (),
    det_bound: int = jc.DET_BOUND,
    keep_pivot_aux: bool = False,
    check_kernel: bool = True,
) -> AnalysisReport:
    """Iterate conversion steps until SA succeeds, the system is ill posed, or no step applies.

    ``pivots`` and ``vectors`` give optional per-step overrides (0-based pivot,
    user-supplied null vector); ``None`` entries fall back to the defaults.
    With ``check_kernel=False`` a supplied vector that is not a null vector is
    still used (a plain row replacement); the step is then refused only if
    Val fails to decrease.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    rep = analyze(sys, relations=relations, det_bound=det_bound)
    if rep.verdict in (SUCCESS, ILL_POSED):
        return rep
    limit = int(rep.final.val) if max_iters is None else max_iters
    cur = sys
    while True:
        it = rep.final
        if not it.jacobian.singular:
            rep.verdict = SUCCESS
            break
        k = len(rep.steps)
        if k >= limit:
            rep.verdict = STUCK
            rep.messages.append(f"iteration limit {limit} reached")
            break
        pivot = pivots[k] if pivots and k < len(pivots) else None
        given = vectors[k] if vectors and k < len(vectors) else None
        rep.refusals = []
        result = None
        for method in POLICIES[policy]:
            side = "left" if method == "LC" else "right"
            if given is not None:
                u = tuple(ex.normalize(x) for x in given)
                if len(u) != cur.n:
                    rep.refusals.append((method, f"supplied u has {len(u)} entries, expected {cur.n}"))
                    continue
                if not jc.is_kernel_vector(it.jacobian.entries, u, side):
                    if check_kernel:
                        rep.refusals.append((method, f"supplied u is not a {side} null vector of J"))
                        continue
                    rep.messages.append(f"step {k + 1}: supplied u is not a {side} null vector of J")
            else:
                try:
                    u = jc.null_vector(it.jacobian.entries, side).u
                except jc.NoKernelError:
                    rep.refusals.append((method, "no kernel vector"))
                    continue
            try:
                if method == "LC":
                    result, why = _try_lc(cur, it, u, pivot, given is None)
                else:
                    result, why = _try_es(cur, it, u, pivot, keep_pivot_aux)
            except lc_mod.ConversionError as err:
                if given is None or check_kernel:
                    raise
                result, why = None, str(err)
            if result is not None:
                break
            rep.refusals.append((method, why))
        if result is None:
            rep.verdict = STUCK
            for method, why in rep.refusals:
                rep.messages.append(f"{method} refused: {why}")
            break
        cur, step = result
        rep.steps.append(step)
        nxt = _iteration(cur, None, relations, det_bound)
        rep.iterations.append(nxt)
        if not nxt.sigma.well_posed:
            rep.verdict = ILL_POSED
            rep.messages.append("converted system has Val = -inf: the original DAE is structurally ill posed")
            break
    return rep


def recover_chain(rep: AnalysisReport) -> DaeSystem:
    """Undo every logged step, returning a system that should equal the original."""
    cur = rep.system
    for step in reversed(rep.steps):
        cur = lc_mod.lc_recover(cur, step) if step.method == "LC" else es_mod.es_recover(cur, step)
    return cur


# --------------------------------------------------------------------------
# solution scheme


@dataclass(frozen=True)
class Stage:
    k: int
    equations: tuple  # (i, order)
    unknowns: tuple  # (j, order)


@dataclass(frozen=True)
class SolutionScheme:
    stages: tuple
    kd: int

    def render(self, sys: DaeSystem) -> str:
        lines = []
        for st in self.stages:
            eqs = ", ".join(_der(sys.equations[i].name, o) for i, o in st.equations)
            unk = ", ".join(_der(sys.columns[j], o) for j, o in st.unknowns)
            lines.append(f"k = {st.k:>3}:  solve {eqs or '-'}  for {unk or '-'}")
        return "\n".join(lines)


def _der(name: str, order: int) -> str:
    return name if order == 0 else f"{name}^({order})"


def solution_scheme(sys: DaeSystem, off: sg.Offsets, K: int = 0) -> SolutionScheme:
    n = len(off.c)
    kd = -max(off.d)
    stages = []
    for k in range(kd, K + 1):
        eqs = tuple((i, off.c[i] + k) for i in range(n) if off.c[i] + k >= 0)
        unk = tuple((j, off.d[j] + k) for j in range(n) if off.d[j] + k >= 0)
        stages.append(Stage(k, eqs, unk))
    return SolutionScheme(tuple(stages), kd)


# --------------------------------------------------------------------------
# success check


@dataclass
class SuccessCheck:
    residuals: dict  # k -> list of (equation index, order, value)
    det: float
    tol_r: float
    tol_s: float
    success: bool
    reason: str = ""


def _scaled_residual(e, point) -> tuple:
    e = sympy.sympify(e)
    val = complex(ex.evaluate(e, point))
    scale = sum(abs(complex(ex.evaluate(t, point))) for t in sympy.Add.make_args(sympy.expand(sympy.numer(e))))
    return val.real if val.imag == 0 else val, max(1.0, scale)


def success_check(
    sys: DaeSystem,
    off: sg.Offsets,
    point: dict,
    tol_r: float = 1e-9,
    tol_s: float | None = None,
    jacobian: jc.SystemJacobian | None = None,
) -> SuccessCheck:
    point = {**sys.constant_values(), **point}
    residuals, ok, reasons = {}, True, []
    for st in solution_scheme(sys, off, 0).stages:
        rows = []
        for i, order in st.equations:
            val, scale = _scaled_residual(ex.total_derivative(sys.exprs[i], order), point)
            rows.append((i, order, val))
            if abs(val) > tol_r * scale:
                ok = False
                reasons.append(f"residual of {_der(sys.equations[i].name, order)} is {val:.3e}")
        residuals[st.k] = rows
    entries = jacobian.entries if jacobian is not None else jc.jacobian_entries(sys, off)
    mat = jc.evaluate_matrix(entries, point)
    det = float(np.linalg.det(mat)) if len(mat) else 1.0
    if tol_s is None:
        tol_s = 1e3 * np.finfo(float).eps * (float(np.abs(mat).sum(axis=1).max()) if len(mat) else 1.0)
    if abs(det) <= tol_s:
        ok = False
        reasons.append(f"|det J| = {abs(det):.3e} is not above {tol_s:.3e}")
    classification = jacobian.classification if jacobian is not None else jc.classify(entries)[0]
    if classification != jc.GENERIC:
        ok = False
        reasons.append(f"system Jacobian is {classification}")
    return SuccessCheck(residuals, det, tol_r, tol_s, ok, "; ".join(reasons))


def eprint(*args) -> None:
    print(*args, file=_sys.stderr)
