"""DAE text format: parsing into :class:`DaeSystem` and rendering back.

Grammar (``#`` starts a comment)::

    system <ident>;
    var <ident>{, <ident>};
    aux <ident>{, <ident>};            # auxiliary variables of converted systems
    fun <ident>(<arity>){, ...};
    input <ident>{, <ident>};
    const <ident> [= <rational>]{, ...};
    eq <ident>: <expression>;

Expressions use ``+ - * / ^``, ``der(e[,k])``, postfix ``'`` on variables
and inputs, ``sin cos exp ln``, ``t``, ``F(e,...)`` and ``D(F,i)(e,...)``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Mapping

import sympy
from sympy import Expr, Symbol

from . import expr as ex

TRANSCENDENTALS = {"sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp, "ln": sympy.log}
RESERVED = {"t", "der", "D", "system", "var", "aux", "fun", "input", "const", "eq"} | set(TRANSCENDENTALS)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        super().__init__(f"line {line}, column {col}: {msg}" if line else msg)


@dataclass(frozen=True)
class Equation:
    name: str
    expr: Expr
    formal_hod: Mapping[str, int] | None = None


@dataclass(frozen=True)
class DaeSystem:
    name: str
    states: tuple
    equations: tuple
    aux: tuple = ()
    functions: tuple = ()
    inputs: tuple = ()
    constants: tuple = ()
    provenance: Any = field(default=None, compare=False)

    @property
    def columns(self) -> tuple:
        return self.states + self.aux

    @property
    def n(self) -> int:
        return len(self.columns)

    @property
    def exprs(self) -> list:
        return [e.expr for e in self.equations]

    def column_atom(self, j: int, order: int = 0):
        name = self.columns[j]
        return ex.StateSym(name, order) if j < len(self.states) else ex.AuxSym(name, order)

    def column_kind(self, j: int) -> type:
        return ex.StateSym if j < len(self.states) else ex.AuxSym

    def hod(self, e, j: int):
        return ex.hod(e, self.columns[j], self.column_kind(j))

    def constant_values(self) -> dict:
        return {Symbol(k): v for k, v in self.constants if v is not None}

    def with_equations(self, equations, aux=None, provenance=None) -> "DaeSystem":
        return replace(
            self,
            equations=tuple(equations),
            aux=self.aux if aux is None else tuple(aux),
            provenance=provenance,
        )

    def folded(self) -> "DaeSystem":
        """Substitute the numeric values of constants that have one."""
        vals = {k: ex._to_sympy_number(v) for k, v in self.constant_values().items()}
        eqs = [Equation(e.name, ex.normalize(e.expr.xreplace(vals)), e.formal_hod) for e in self.equations]
        consts = tuple((k, v) for k, v in self.constants if v is None)
        return replace(self, equations=tuple(eqs), constants=consts)

    def same_as(self, other: "DaeSystem") -> bool:
        return (
            self.name == other.name
            and self.states == other.states
            and self.aux == other.aux
            and self.functions == other.functions
            and self.inputs == other.inputs
            and self.constants == other.constants
            and [e.name for e in self.equations] == [e.name for e in other.equations]
            and all(ex.normalize(a.expr - b.expr) == 0 for a, b in zip(self.equations, other.equations))
        )


# --------------------------------------------------------------------------
# tokenizer

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^(),;:='])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list:
    out, pos, line, start = [], 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, start = line + 1, m.end()
        elif kind != "ws":
            text = m.group()
            out.append(_Tok(kind, "^" if text == "**" else text, line, m.start() - start + 1))
        pos = m.end()
    out.append(_Tok("eof", "", line, pos - start + 1))
    return out


# --------------------------------------------------------------------------
# parser


@dataclass
class _Node:
    expr: Expr
    fhod: dict


def _merge(*maps) -> dict:
    out: dict = {}
    for m in maps:
        for k, v in m.items():
            out[k] = max(out.get(k, v), v)
    return out


class _Parser:
    def __init__(self, src: str, symtab: dict | None = None):
        self.toks = _tokenize(src)
        self.i = 0
        self.sym = symtab if symtab is not None else {}

    # token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind != "eof":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        tok = self.tok
        if not self.accept(text):
            self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}")
        return tok

    def ident(self) -> str:
        tok = self.tok
        if tok.kind != "ident":
            self.error(f"expected identifier, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok.text

    def integer(self) -> int:
        neg = self.accept("-")
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            self.error("expected integer")
        self.i += 1
        return -int(tok.text) if neg else int(tok.text)

    def rational(self) -> Fraction:
        neg = self.accept("-")
        tok = self.tok
        if tok.kind != "num":
            self.error("expected number")
        self.i += 1
        val = Fraction(tok.text)
        if self.accept("/"):
            den = self.tok
            if den.kind != "num":
                self.error("expected number")
            self.i += 1
            val /= Fraction(den.text)
        return -val if neg else val

    # expressions
    def expression(self) -> _Node:
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            rhs = self.term()
            node = _Node(node.expr + rhs.expr if op == "+" else node.expr - rhs.expr, _merge(node.fhod, rhs.fhod))
        return node

    def term(self) -> _Node:
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op, tok = self.tok.text, self.tok
            self.i += 1
            rhs = self.unary()
            if op == "/":
                if ex.normalize(rhs.expr) == 0:
                    self.error("division by an identically zero expression", tok)
                value = node.expr / rhs.expr
            else:
                value = node.expr * rhs.expr
            node = _Node(value, _merge(node.fhod, rhs.fhod))
        return node

    def unary(self) -> _Node:
        if self.accept("-"):
            node = self.unary()
            return _Node(-node.expr, node.fhod)
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> _Node:
        base = self.postfix()
        if self.tok.text == "^":
            tok = self.tok
            self.i += 1
            expo = self.unary()
            if not (expo.expr.is_Integer):
                self.error("only integer exponents are supported", tok)
            if expo.expr < 0 and ex.normalize(base.expr) == 0:
                self.error("division by an identically zero expression", tok)
            return _Node(base.expr ** expo.expr, base.fhod)
        return base

    def postfix(self) -> _Node:
        start = self.tok
        node = self.primary()
        primes = 0
        while self.accept("'"):
            primes += 1
        if primes:
            if not isinstance(node.expr, ex._OrderedSym):
                self.error("prime notation applies only to variables and inputs", start)
            atom = node.expr.shifted(primes)
            fh = {k: v + primes for k, v in node.fhod.items()}
            node = _Node(atom, fh)
        return node

    def args(self) -> list:
        self.expect("(")
        out = [self.expression()]
        while self.accept(","):
            out.append(self.expression())
        self.expect(")")
        return out

    def primary(self) -> _Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return _Node(sympy.Rational(Fraction(tok.text)), {})
        if self.accept("("):
            node = self.expression()
            self.expect(")")
            return node
        if tok.kind != "ident":
            self.error(f"unexpected {tok.text or 'end of input'!r}")
        name = self.ident()
        if name == "t":
            return _Node(ex.TIME, {})
        if name == "der":
            self.expect("(")
            inner = self.expression()
            k = 1
            if self.accept(","):
                k = self.integer()
                if k < 0:
                    self.error("derivative order must be nonnegative")
            self.expect(")")
            return _Node(ex.total_derivative(inner.expr, k), {v: o + k for v, o in inner.fhod.items()})
        if name == "D" and self.tok.text == "(":
            self.expect("(")
            fname = self.ident()
            info = self.sym.get(fname)
            if not info or info[0] != "fun":
                self.error(f"undeclared function {fname!r}", tok)
            idx = []
            while self.accept(","):
                idx.append(self.integer())
            self.expect(")")
            if not idx or any(i < 1 or i > info[1] for i in idx):
                self.error(f"bad partial index for {fname!r}", tok)
            return self.apply(ex.ufunc(fname, info[1], idx), info[1], tok)
        if name in TRANSCENDENTALS:
            self.expect("(")
            arg = self.expression()
            self.expect(")")
            return _Node(TRANSCENDENTALS[name](arg.expr), arg.fhod)
        info = self.sym.get(name)
        if info is None:
            self.error(f"undeclared identifier {name!r}", tok)
        kind = info[0]
        if kind == "var":
            return _Node(ex.StateSym(name), {name: 0})
        if kind == "aux":
            return _Node(ex.AuxSym(name), {name: 0})
        if kind == "input":
            if self.tok.text == "(" and self.toks[self.i + 1].text == "t" and self.toks[self.i + 2].text == ")":
                self.i += 3
            return _Node(ex.InputSym(name), {})
        if kind == "const":
            return _Node(Symbol(name), {})
        if kind == "fun":
            return self.apply(ex.ufunc(name, info[1]), info[1], tok)
        self.error(f"unexpected identifier {name!r}", tok)

    def apply(self, cls, arity: int, tok: _Tok) -> _Node:
        args = self.args()
        if len(args) != arity:
            self.error(f"arity mismatch: {cls.__name__} takes {arity} arguments, got {len(args)}", tok)
        return _Node(cls(*[ex.normalize(a.expr) for a in args]), _merge(*[a.fhod for a in args]))

    # declarations
    def declare(self, name: str, kind, tok: _Tok):
        if name in RESERVED:
            self.error(f"{name!r} is reserved", tok)
        if name in self.sym:
            self.error(f"duplicate declaration of {name!r}", tok)
        self.sym[name] = kind

    def name_list(self, kind: str) -> list:
        names = []
        while True:
            tok = self.tok
            name = self.ident()
            self.declare(name, (kind,), tok)
            names.append(name)
            if not self.accept(","):
                break
        self.expect(";")
        return names

    def system(self) -> DaeSystem:
        name, states, aux, funs, inputs, consts, eqs = None, [], [], [], [], [], []
        eq_names = set()
        while self.tok.kind != "eof":
            tok = self.tok
            kw = self.ident()
            if kw == "system":
                if name is not None:
                    self.error("duplicate system statement", tok)
                name = self.ident()
                self.expect(";")
            elif kw == "var":
                states += self.name_list("var")
            elif kw == "aux":
                aux += self.name_list("aux")
            elif kw == "input":
                inputs += self.name_list("input")
            elif kw == "fun":
                while True:
                    ftok = self.tok
                    fname = self.ident()
                    self.expect("(")
                    arity = self.integer()
                    self.expect(")")
                    if arity < 1:
                        self.error("arity must be positive", ftok)
                    self.declare(fname, ("fun", arity), ftok)
                    funs.append((fname, arity))
                    if not self.accept(","):
                        break
                self.expect(";")
            elif kw == "const":
                while True:
                    ctok = self.tok
                    cname = self.ident()
                    self.declare(cname, ("const",), ctok)
                    consts.append((cname, self.rational() if self.accept("=") else None))
                    if not self.accept(","):
                        break
                self.expect(";")
            elif kw == "eq":
                ename = self.ident()
                if ename in eq_names:
                    self.error(f"duplicate equation name {ename!r}", tok)
                eq_names.add(ename)
                self.expect(":")
                node = self.expression()
                self.expect(";")
                eqs.append(Equation(ename, ex.normalize(node.expr), dict(node.fhod)))
            else:
                self.error(f"unknown statement {kw!r}", tok)
        if name is None:
            raise ParseError("missing 'system <name>;' statement", 1, 1)
        if len(eqs) != len(states) + len(aux):
            raise ParseError(
                f"non-square system: {len(eqs)} equations for {len(states) + len(aux)} variables", self.tok.line, 1
            )
        return DaeSystem(name, tuple(states), tuple(eqs), tuple(aux), tuple(funs), tuple(inputs), tuple(consts))


def parse(source: str) -> DaeSystem:
    return _Parser(source).system()


def symbol_table(sys: DaeSystem) -> dict:
    tab = {s: ("var",) for s in sys.states}
    tab.update({s: ("aux",) for s in sys.aux})
    tab.update({s: ("input",) for s in sys.inputs})
    tab.update({c: ("const",) for c, _ in sys.constants})
    tab.update({f: ("fun", a) for f, a in sys.functions})
    return tab


def parse_expression(text: str, sys: DaeSystem) -> Expr:
    p = _Parser(text, symbol_table(sys))
    node = p.expression()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return ex.normalize(node.expr)


def parse_vector(text: str, sys: DaeSystem) -> list:
    """Parse ``(e1, e2, ...)`` or ``e1, e2, ...`` into expressions."""
    p = _Parser(text, symbol_table(sys))
    wrapped = p.accept("(")
    out = [p.expression()]
    while p.accept(","):
        out.append(p.expression())
    if wrapped:
        p.expect(")")
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return [ex.normalize(n.expr) for n in out]


def parse_point(text: str, sys: DaeSystem) -> dict:
    """Parse ``<atom> = <number>`` lines into a value point (constants included)."""
    point: dict = dict(sys.constant_values())
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected '<atom> = <number>'", lineno, 1)
        lhs, rhs = line.split("=", 1)
        try:
            atom = parse_expression(lhs, sys)
            value = sympy.sympify(parse_expression(rhs, symbol_table_free()))
        except ParseError as err:
            raise ParseError(str(err), lineno, 1) from None
        if not (atom.is_Symbol or isinstance(atom, ex.UFunc)):
            raise ParseError(f"left-hand side {lhs.strip()!r} is not an atom", lineno, 1)
        if not value.is_Number:
            raise ParseError(f"right-hand side {rhs.strip()!r} is not a number", lineno, 1)
        point[atom] = Fraction(int(value.p), int(value.q)) if value.is_Rational else float(value)
    return point


def symbol_table_free() -> DaeSystem:
    return DaeSystem("_", (), ())


# --------------------------------------------------------------------------
# rendering


def _fmt_rational(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def render(sys: DaeSystem, format: str = "text") -> str:
    if format == "json":
        return json.dumps(to_json(sys), indent=2, sort_keys=True)
    lines = [f"system {sys.name};", "var " + ", ".join(sys.states) + ";"]
    if sys.aux:
        lines.append("aux " + ", ".join(sys.aux) + ";")
    if sys.functions:
        lines.append("fun " + ", ".join(f"{f}({a})" for f, a in sys.functions) + ";")
    if sys.inputs:
        lines.append("input " + ", ".join(sys.inputs) + ";")
    if sys.constants:
        parts = [c if v is None else f"{c} = {_fmt_rational(v)}" for c, v in sys.constants]
        lines.append("const " + ", ".join(parts) + ";")
    for e in sys.equations:
        lines.append(f"eq {e.name}: {ex.serialize(e.expr)};")
    return "\n".join(lines) + "\n"


def to_json(sys: DaeSystem) -> dict:
    return {
        "name": sys.name,
        "variables": list(sys.states),
        "aux": list(sys.aux),
        "functions": [{"name": f, "arity": a} for f, a in sys.functions],
        "inputs": list(sys.inputs),
        "constants": [{"name": c, "value": None if v is None else _fmt_rational(v)} for c, v in sys.constants],
        "equations": [{"name": e.name, "expr": ex.serialize(e.expr)} for e in sys.equations],
    }


JSON_SCHEMA = {
    "type": "object",
    "required": ["name", "variables", "aux", "functions", "inputs", "constants", "equations"],
    "properties": {
        "name": {"type": "string"},
        "variables": {"type": "array", "items": {"type": "string"}},
        "aux": {"type": "array", "items": {"type": "string"}},
        "functions": {
            "type": "array",
            "items": {"type": "object", "required": ["name", "arity"]},
        },
        "inputs": {"type": "array", "items": {"type": "string"}},
        "constants": {"type": "array", "items": {"type": "object", "required": ["name", "value"]}},
        "equations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "expr"],
                "properties": {"name": {"type": "string"}, "expr": {"type": "string"}},
            },
        },
    },
}
