"""Signature matrices, highest-value transversals and offsets."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Sequence

from .expr import NEG_INF
from .frontend import DaeSystem


def finite(v) -> bool:
    return v != NEG_INF


@dataclass(frozen=True)
class SignatureMatrix:
    entries: tuple
    val: float
    hvt: tuple | None

    @property
    def n(self) -> int:
        return len(self.entries)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    @property
    def well_posed(self) -> bool:
        return self.hvt is not None

    def as_lists(self) -> list:
        return [[v if finite(v) else None for v in row] for row in self.entries]


@dataclass(frozen=True)
class Offsets:
    c: tuple
    d: tuple
    canonical: bool = True


# --------------------------------------------------------------------------
# matching and assignment


def max_matching(allowed: Sequence[Sequence[bool]]) -> list:
    """Maximum bipartite matching (augmenting paths); returns row -> column or -1."""
    n = len(allowed)
    m = len(allowed[0]) if n else 0
    col_of = [-1] * n
    row_of = [-1] * m

    def augment(i, seen):
        for j in range(m):
            if allowed[i][j] and not seen[j]:
                seen[j] = True
                if row_of[j] < 0 or augment(row_of[j], seen):
                    row_of[j], col_of[i] = i, j
                    return True
        return False

    for i in range(n):
        augment(i, [False] * m)
    return col_of


def _lap_max(entries, rows, cols) -> int | None:
    """Maximum-weight perfect assignment value over finite cells, or None.

    Shortest-augmenting-path Hungarian method on costs -σ; −∞ cells are not
    edges of the graph and never enter the arithmetic.
    """
    n = len(rows)
    if n == 0:
        return 0
    sub = [[entries[i][j] for j in cols] for i in rows]
    allowed = [[finite(v) for v in row] for row in sub]
    if sum(1 for j in max_matching(allowed) if j >= 0) < n:
        return None
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row (1-based) assigned to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [None] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta, j1 = None, None
            for j in range(1, n + 1):
                if used[j]:
                    continue
                if allowed[i0 - 1][j - 1]:
                    cur = -sub[i0 - 1][j - 1] - u[i0] - v[j]
                    if minv[j] is None or cur < minv[j]:
                        minv[j], way[j] = cur, j0
                if minv[j] is not None and (delta is None or minv[j] < delta):
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                elif minv[j] is not None:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return sum(sub[p[j] - 1][j - 1] for j in range(1, n + 1))


def hvt(entries) -> tuple:
    """(Val, transversal) with the lexicographically smallest row→column map among maximizers."""
    n = len(entries)
    best = _lap_max(entries, list(range(n)), list(range(n)))
    if best is None:
        return NEG_INF, None
    rows, cols, chosen, remaining = list(range(n)), list(range(n)), [], best
    for i in range(n):
        rows.remove(i)
        for j in list(cols):
            if not finite(entries[i][j]):
                continue
            rest = [c for c in cols if c != j]
            sub = _lap_max(entries, rows, rest)
            if sub is not None and sub + entries[i][j] == remaining:
                chosen.append((i, j))
                cols, remaining = rest, sub
                break
    return best, tuple(chosen)


def hvt_bruteforce(entries) -> tuple:
    n = len(entries)
    best, best_perm = NEG_INF, None
    for perm in itertools.permutations(range(n)):
        if all(finite(entries[i][perm[i]]) for i in range(n)):
            s = sum(entries[i][perm[i]] for i in range(n))
            if s > best:
                best, best_perm = s, perm
    if best_perm is None:
        return NEG_INF, None
    return best, tuple((i, best_perm[i]) for i in range(n))


def all_hvts(entries, val) -> list:
    n = len(entries)
    out = []
    for perm in itertools.permutations(range(n)):
        if all(finite(entries[i][perm[i]]) for i in range(n)):
            if sum(entries[i][perm[i]] for i in range(n)) == val:
                out.append(tuple((i, perm[i]) for i in range(n)))
    return out


# --------------------------------------------------------------------------
# signature matrices


def from_entries(entries) -> SignatureMatrix:
    entries = tuple(tuple(row) for row in entries)
    val, t = hvt(entries)
    return SignatureMatrix(entries, val, t)


def signature_matrix(sys: DaeSystem) -> SignatureMatrix:
    rows = [[sys.hod(f, j) for j in range(sys.n)] for f in sys.exprs]
    return from_entries(rows)


def formal_signature(sys: DaeSystem) -> SignatureMatrix:
    """Σ̃ from the formal HOD recorded while parsing (true HOD where unavailable)."""
    rows = []
    for eq in sys.equations:
        if eq.formal_hod is None:
            rows.append([sys.hod(eq.expr, j) for j in range(sys.n)])
        else:
            rows.append([eq.formal_hod.get(name, NEG_INF) for name in sys.columns])
    return from_entries(rows)


# --------------------------------------------------------------------------
# offsets


def canonical_offsets(sig: SignatureMatrix) -> Offsets:
    if not sig.well_posed:
        raise ValueError("structurally ill-posed: no finite transversal")
    n = sig.n
    col = dict(sig.hvt)
    c = [0] * n
    while True:
        d = [max(sig[i, j] + c[i] for i in range(n) if finite(sig[i, j])) for j in range(n)]
        new_c = [d[col[i]] - sig[i, col[i]] for i in range(n)]
        if new_c == c:
            break
        c = new_c
    off = Offsets(tuple(int(x) for x in c), tuple(int(x) for x in d), True)
    assert validate_offsets(sig, off.c, off.d)
    return off


def dominates(sig: SignatureMatrix, c, d) -> bool:
    """c ≥ 0, d ≥ 0 and d_j − c_i ≥ σ_ij on all finite entries."""
    n = sig.n
    if len(c) != n or len(d) != n or min(c, default=0) < 0 or min(d, default=0) < 0:
        return False
    return all(d[j] - c[i] >= sig[i, j] for i in range(n) for j in range(n) if finite(sig[i, j]))


def validate_offsets(sig: SignatureMatrix, c, d) -> bool:
    if not sig.well_posed or not dominates(sig, c, d):
        return False
    return all(d[j] - c[i] == sig[i, j] for i, j in sig.hvt)


def structural_index(sig: SignatureMatrix, off: Offsets) -> int:
    if not sig.well_posed:
        raise ValueError("structurally ill-posed")
    return max(off.c) + (1 if min(off.d) == 0 else 0)


def dof(sig: SignatureMatrix) -> int:
    if not sig.well_posed:
        raise ValueError("structurally ill-posed")
    return int(sig.val)


# --------------------------------------------------------------------------
# formal versus true signature


@dataclass(frozen=True)
class FormalReport:
    formal: SignatureMatrix
    true: SignatureMatrix
    alternative: str  # "identical", "i" (equal Val) or "ii" (formal Val larger)
    formal_jacobian_structurally_singular: bool | None


def formal_vs_true(sys: DaeSystem) -> FormalReport:
    from .jacobian import jacobian_entries, structurally_singular

    formal, true = formal_signature(sys), signature_matrix(sys)
    if formal.entries == true.entries:
        return FormalReport(formal, true, "identical", None)
    alt = "ii" if formal.val > true.val else "i"
    singular = None
    if formal.well_posed:
        off = canonical_offsets(formal)
        singular = structurally_singular(jacobian_entries(sys, off))
    return FormalReport(formal, true, alt, singular)


# --------------------------------------------------------------------------
# tableau rendering


def _cell(v, star: bool) -> str:
    return ("-" if not finite(v) else str(int(v))) + ("*" if star else "")


def render_tableau(sig: SignatureMatrix, row_names, col_names, off: Offsets | None = None, det: str | None = None) -> str:
    stars = set(sig.hvt or ())
    grid = [[""] + list(col_names) + (["c_i"] if off else [])]
    for i, name in enumerate(row_names):
        row = [name] + [_cell(sig[i, j], (i, j) in stars) for j in range(sig.n)]
        if off:
            row.append(str(off.c[i]))
        grid.append(row)
    if off:
        grid.append(["d_j"] + [str(x) for x in off.d] + [""])
    widths = [max(len(r[k]) for r in grid) for k in range(len(grid[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in grid]
    lines.append("Val = " + (str(int(sig.val)) if sig.well_posed else "-inf"))
    if det is not None:
        lines.append("det(J) = " + det)
    return "\n".join(lines)


_CELL = re.compile(r"^(-|-?\d+)(\*?)$")


def parse_tableau(text: str) -> SignatureMatrix:
    """Recover Σ (and the marked HVT) from :func:`render_tableau` output."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    n = len(header) - (1 if header[-1] == "c_i" else 0)
    entries, stars = [], []
    for i, ln in enumerate(lines[1 : 1 + n]):
        toks = ln.split()[1 : 1 + n]
        row = []
        for j, tok in enumerate(toks):
            m = _CELL.match(tok)
            if not m:
                raise ValueError(f"bad tableau cell {tok!r}")
            row.append(NEG_INF if m.group(1) == "-" else int(m.group(1)))
            if m.group(2):
                stars.append((i, j))
        entries.append(tuple(row))
    sig = from_entries(entries)
    return SignatureMatrix(sig.entries, sig.val, tuple(stars) if stars else sig.hvt)


def sigma_json(sig: SignatureMatrix, off: Offsets | None) -> dict:
    return {
        "sigma": sig.as_lists(),
        "hvt": [list(p) for p in sig.hvt] if sig.hvt else None,
        "val": int(sig.val) if sig.well_posed else None,
        "c": list(off.c) if off else None,
        "d": list(off.d) if off else None,
        "index": structural_index(sig, off) if off else None,
        "dof": dof(sig) if sig.well_posed else None,
    }
