"""Command-line interface: ``sigma-reg parse|analyze|convert|scheme|check|corpus``.

Exit codes: 0 success, 1 usage/parse error (or failing corpus expectations),
2 structural analysis failed without conversion, 3 conversion stuck, 4 ill posed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import sympy

from . import expr as ex
from . import frontend as fe
from . import jacobian as jc
from . import pipeline as pl
from . import sigma as sg

EXIT = {pl.SUCCESS: 0, pl.SA_FAILED: 2, pl.STUCK: 3, pl.ILL_POSED: 4}
METHODS = {"lc": "lc-only", "es": "es-only", "auto": "lc-first", "es-first": "es-first"}


class UsageError(Exception):
    pass


def _load(path: str) -> fe.DaeSystem:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err.strerror}") from None
    return fe.parse(text)


def _relations(args, system) -> list:
    return [fe.parse_expression(r, system) for r in args.relation or ()]


def _offsets(text: str | None, n: int):
    if not text:
        return None
    try:
        c, d = text.split(";")
        c = tuple(int(v) for v in c.split(","))
        d = tuple(int(v) for v in d.split(","))
    except ValueError:
        raise UsageError("--offsets expects 'c1,...,cn;d1,...,dn'") from None
    if len(c) != n or len(d) != n:
        raise UsageError(f"--offsets needs {n} values on each side")
    return c, d


# --------------------------------------------------------------------------
# rendering


def _det_text(jac) -> str | None:
    if jac is None:
        return None
    if jac.det is None:
        return f"not expanded (n > {jc.DET_BOUND}); {jac.classification}"
    return ex.serialize(jac.det)


def iteration_json(it: pl.Iteration) -> dict:
    out = sg.sigma_json(it.sigma, it.offsets)
    out["rows"] = [e.name for e in it.system.equations]
    out["columns"] = list(it.system.columns)
    out["classification"] = it.classification
    out["classification_basis"] = "generic-algebra"
    out["det"] = ex.serialize(it.jacobian.det) if it.jacobian and it.jacobian.det is not None else None
    out["index_reliable"] = it.index_reliable
    return out


def step_json(step) -> dict:
    out = {
        "method": step.method,
        "u": [ex.serialize(x) for x in step.u],
        "pivot": step.pivot + 1,
        "replaced": list(step.replaced),
        "added": list(step.added),
        "equivalence_condition": ex.serialize(step.equivalence_condition) + " != 0",
        "always_nonzero": step.always_nonzero,
        "val_before": int(step.val_before),
        "val_after": int(step.val_after) if step.val_after != ex.NEG_INF else None,
    }
    if step.method == "ES":
        out["C"] = step.details["C"]
        out["aux"] = {step.before.columns[j]: y for j, y in sorted(step.details["aux"].items())}
    else:
        out["theta"] = step.details["theta"]
    return out


def report_json(rep: pl.AnalysisReport) -> dict:
    canc = rep.cancellation
    return {
        "system": rep.system.name,
        "verdict": rep.verdict,
        "iterations": [iteration_json(it) for it in rep.iterations],
        "steps": [step_json(s) for s in rep.steps],
        "equivalence": [
            {"condition": ex.serialize(c) + " != 0", "always_nonzero": a} for c, a in rep.ledger
        ],
        "cancellation": None
        if canc is None
        else {
            "alternative": canc.alternative,
            "formal_val": int(canc.formal.val) if canc.formal.well_posed else None,
            "true_val": int(canc.true.val) if canc.true.well_posed else None,
            "formal_jacobian_structurally_singular": canc.formal_jacobian_structurally_singular,
        },
        "messages": list(rep.messages),
        "final_system": fe.to_json(rep.system),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def iteration_text(it: pl.Iteration, tableau: bool = True) -> str:
    sys_ = it.system
    lines = []
    if tableau:
        lines.append(
            sg.render_tableau(
                it.sigma, [e.name for e in sys_.equations], sys_.columns, it.offsets, _det_text(it.jacobian)
            )
        )
    if it.offsets is None:
        lines.append("structurally ill-posed: no finite transversal")
        return "\n".join(lines)
    note = "" if it.index_reliable else "  (unreliable: system Jacobian is singular)"
    lines.append(f"structural index = {it.index}{note}")
    lines.append(f"DOF = {it.dof}")
    lines.append(f"Jacobian: {it.classification} (generic-algebra classification)")
    return "\n".join(lines)


def step_text(k: int, step) -> str:
    d = step_json(step)
    lines = [f"step {k}: {step.method}, pivot {d['pivot']}, u = ({', '.join(d['u'])})"]
    if step.method == "ES":
        aux = ", ".join(f"{y} for {x}" for x, y in d["aux"].items())
        lines.append(f"  C = {d['C']}; new variables: {aux}")
    else:
        lines.append(f"  theta = {d['theta']}")
    lines.append(f"  replaced {', '.join(d['replaced'])}; added {', '.join(d['added'])}")
    flag = "always holds" if step.always_nonzero else "must be checked"
    lines.append(f"  equivalent if {d['equivalence_condition']} ({flag})")
    lines.append(f"  Val {d['val_before']} -> {d['val_after'] if d['val_after'] is not None else '-inf'}")
    return "\n".join(lines)


def _paint(text: str, ok: bool, color: bool) -> str:
    if not color:
        return text
    return f"\033[{'32' if ok else '31'}m{text}\033[0m"


def report_text(rep: pl.AnalysisReport, tableau: bool, color: bool) -> str:
    out = []
    for k, it in enumerate(rep.iterations):
        if k:
            out.append(step_text(k, rep.steps[k - 1]))
        out.append(iteration_text(it, tableau))
    out.extend(rep.messages)
    out.append("verdict: " + _paint(rep.verdict, rep.verdict == pl.SUCCESS, color))
    return "\n".join(out)


# --------------------------------------------------------------------------
# subcommands


def cmd_parse(args) -> int:
    system = _load(args.file)
    print(fe.render(system, "json" if args.json else "text"), end="" if not args.json else "\n")
    return 0


def _emit(args, rep) -> None:
    if args.json:
        print(_dumps(report_json(rep)))
    else:
        print(report_text(rep, args.tableau, args.color))


def cmd_analyze(args) -> int:
    system = _load(args.file)
    rep = pl.analyze(system, _offsets(args.offsets, system.n), _relations(args, system))
    _emit(args, rep)
    return EXIT[rep.verdict]


def cmd_convert(args) -> int:
    system = _load(args.file)
    # vectors are parsed against the original declarations
    vectors = [fe.parse_vector(text, system) for text in args.u] if args.u else None
    pivots = [p - 1 for p in args.pivot] if args.pivot else None
    rep = pl.regularize(
        system,
        policy=METHODS[args.method],
        max_iters=args.max_iters,
        pivots=pivots,
        vectors=vectors,
        relations=_relations(args, system),
        keep_pivot_aux=args.keep_pivot_aux,
        check_kernel=not args.allow_non_null,
    )
    _emit(args, rep)
    if args.output:
        Path(args.output).write_text(fe.render(rep.system))
    return EXIT[rep.verdict]


def cmd_scheme(args) -> int:
    system = _load(args.file)
    rep = pl.analyze(system, _offsets(args.offsets, system.n))
    it = rep.final
    if it.offsets is None:
        print("structurally ill-posed: no solution scheme", file=sys.stderr)
        return EXIT[pl.ILL_POSED]
    scheme = pl.solution_scheme(system, it.offsets, args.stages)
    if args.json:
        print(
            _dumps(
                {
                    "kd": scheme.kd,
                    "stages": [
                        {
                            "k": st.k,
                            "equations": [[system.equations[i].name, o] for i, o in st.equations],
                            "unknowns": [[system.columns[j], o] for j, o in st.unknowns],
                        }
                        for st in scheme.stages
                    ],
                }
            )
        )
    else:
        print(scheme.render(system))
        if rep.verdict != pl.SUCCESS:
            print(f"warning: system Jacobian is {it.classification}; the scheme fails at stage 0")
    return EXIT[rep.verdict]


def cmd_check(args) -> int:
    system = _load(args.file)
    try:
        point = fe.parse_point(Path(args.point).read_text(), system)
    except OSError as err:
        raise UsageError(f"cannot read {args.point}: {err.strerror}") from None
    rep = pl.analyze(system, _offsets(args.offsets, system.n))
    it = rep.final
    if it.offsets is None:
        print("structurally ill-posed", file=sys.stderr)
        return EXIT[pl.ILL_POSED]
    try:
        res = pl.success_check(system, it.offsets, point, args.tol_r, args.tol_s, it.jacobian)
    except ex.EvaluationError as err:
        raise UsageError(str(err)) from None
    if args.json:
        print(
            _dumps(
                {
                    "success": res.success,
                    "det": res.det,
                    "tol_r": res.tol_r,
                    "tol_s": res.tol_s,
                    "index": it.index,
                    "residuals": {
                        str(k): [[system.equations[i].name, o, float(abs(v))] for i, o, v in rows]
                        for k, rows in res.residuals.items()
                    },
                    "reason": res.reason,
                }
            )
        )
    else:
        for k, rows in res.residuals.items():
            worst = max((abs(v) for _, _, v in rows), default=0.0)
            print(f"stage {k:>3}: {len(rows)} equations, max |residual| = {float(worst):.3e}")
        print(f"det J = {res.det:.6e} (tol_s = {res.tol_s:.3e})")
        print(f"structural index = {it.index}")
        print("verdict: " + _paint("success" if res.success else "failure", res.success, args.color))
        if res.reason:
            print(res.reason)
    return 0 if res.success else EXIT[pl.SA_FAILED]


# --------------------------------------------------------------------------
# corpus


@dataclass
class CorpusRow:
    file: str
    key: str
    expected: str
    actual: str
    ok: bool


SIDE_KEYS = {"policy", "relation", "val0", "val", "index", "dof", "verdict", "det", "iterations", "pivots"}


def bundled_corpus() -> Path:
    return Path(str(resources.files("sigmareg") / "corpus"))


def read_sidecar(path: Path) -> dict:
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path.name}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SIDE_KEYS:
            raise ValueError(f"{path.name}:{lineno}: unknown key {key!r}")
        if key == "relation":
            out.setdefault(key, []).append(value)
        else:
            out[key] = value
    return out


def _same_expr(expected: str, actual, system) -> bool:
    if actual is None:
        return expected == "none"
    try:
        want = fe.parse_expression(expected, system)
    except fe.ParseError:
        return False
    return ex.normalize(sympy.sympify(actual) - want) == 0


def corpus_run(directory) -> list:
    """Run every ``*.dae`` with a ``*.expect`` sidecar; one row per checked key."""
    rows = []
    for dae in sorted(Path(directory).glob("*.dae")):
        side = dae.with_suffix(".expect")
        if not side.exists():
            continue
        try:
            spec = read_sidecar(side)
            system = fe.parse(dae.read_text())
            rels = [fe.parse_expression(r, system) for r in spec.get("relation", [])]
            pivots = [int(p) - 1 for p in spec["pivots"].split(",")] if "pivots" in spec else None
            policy = spec.get("policy", "lc-first")
            if policy not in pl.POLICIES and policy != "none":
                raise ValueError(f"{side.name}: unknown policy {policy!r}")
        except (ValueError, fe.ParseError) as err:
            rows.append(CorpusRow(dae.name, "config", "valid sidecar", str(err), False))
            continue
        if policy == "none":
            rep = pl.analyze(system, relations=rels)
        else:
            rep = pl.regularize(system, policy=policy, pivots=pivots, relations=rels)
        it = rep.final
        actual = {
            "val0": _v(rep.iterations[0].val),
            "val": _v(it.val),
            "index": str(it.index) if it.offsets else "none",
            "dof": str(it.dof) if it.dof is not None else "none",
            "verdict": rep.verdict,
            "iterations": str(len(rep.steps)),
        }
        for key, want in spec.items():
            if key in ("policy", "relation", "pivots"):
                continue
            if key == "det":
                det = it.jacobian.det if it.jacobian else None
                got = ex.serialize(det) if det is not None else "none"
                rows.append(CorpusRow(dae.name, key, want, got, _same_expr(want, det, it.system)))
            else:
                rows.append(CorpusRow(dae.name, key, want, actual[key], actual[key] == want))
    return rows


def _v(v) -> str:
    return "-inf" if v == ex.NEG_INF else str(int(v))


def cmd_corpus(args) -> int:
    directory = args.dir or bundled_corpus()
    rows = corpus_run(directory)
    if args.json:
        print(_dumps([r.__dict__ for r in rows]))
    else:
        width = max((len(r.file) for r in rows), default=4)
        for r in rows:
            mark = _paint("pass" if r.ok else "FAIL", r.ok, args.color)
            print(f"{r.file:<{width}}  {r.key:<10} {mark}  expected {r.expected}  got {r.actual}")
        print(f"{sum(r.ok for r in rows)}/{len(rows)} expectations pass")
    return 0 if all(r.ok for r in rows) else 1


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--no-color", dest="color", action="store_false", help="disable ANSI colors")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized identity checks")
    common.add_argument("--tableau", action="store_true", default=True, help="print signature tableaus (default)")
    common.add_argument("--no-tableau", dest="tableau", action="store_false")

    p = argparse.ArgumentParser(prog="sigma-reg", description="Structural analysis and regularization of DAEs.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", parents=[common], help="parse and re-render a system")
    s.add_argument("file")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("analyze", parents=[common], help="run structural analysis")
    s.add_argument("file")
    s.add_argument("--relation", action="append", help="expression known to vanish (repeatable)")
    s.add_argument("--offsets", help="user offsets 'c1,...,cn;d1,...,dn'")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("convert", parents=[common], help="regularize by LC/ES conversion steps")
    s.add_argument("file")
    s.add_argument("--method", choices=sorted(METHODS), default="auto")
    s.add_argument("--pivot", type=int, action="append", help="1-based pivot for the next step (repeatable)")
    s.add_argument("--u", action="append", help="null vector '(e1, ..., en)' for the next step (repeatable)")
    s.add_argument("--max-iters", type=int)
    s.add_argument("--relation", action="append", help="expression known to vanish (repeatable)")
    s.add_argument("--keep-pivot-aux", action="store_true", help="ES: keep g_l and y_l")
    s.add_argument("--allow-non-null", action="store_true", help="accept a supplied u that is not a null vector")
    s.add_argument("--output", help="write the converted system to this file")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("scheme", parents=[common], help="print the stage-wise solution scheme")
    s.add_argument("file")
    s.add_argument("--stages", type=int, default=0, help="last stage K")
    s.add_argument("--offsets", help="user offsets 'c1,...,cn;d1,...,dn'")
    s.set_defaults(func=cmd_scheme)

    s = sub.add_parser("check", parents=[common], help="numeric success check at a point")
    s.add_argument("file")
    s.add_argument("--point", required=True, help="file of '<atom> = <number>' lines")
    s.add_argument("--tol-r", type=float, default=1e-9)
    s.add_argument("--tol-s", type=float)
    s.add_argument("--offsets", help="user offsets 'c1,...,cn;d1,...,dn'")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("corpus", parents=[common], help="check a directory of systems against sidecars")
    s.add_argument("dir", nargs="?", help="defaults to the bundled corpus")
    s.set_defaults(func=cmd_corpus)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 0 if err.code == 0 else 1
    if args.color and not sys.stdout.isatty():
        args.color = False
    ex.set_seed(args.seed)
    try:
        return args.func(args)
    except (fe.ParseError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
