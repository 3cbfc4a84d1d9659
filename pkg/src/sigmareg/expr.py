"""Symbolic expression kernel.

Expressions are plain sympy expressions built from a small set of atom
kinds:

* ``TIME`` -- the independent variable ``t``;
* :class:`StateSym` / :class:`AuxSym` -- a state (or auxiliary) variable
  together with a derivative order, printed with trailing primes;
* :class:`InputSym` -- a driving function of ``t`` and its derivatives;
* plain ``Symbol`` -- a named constant;
* applications of declared uninterpreted functions (see :func:`ufunc`)
  and of ``sin``, ``cos``, ``exp``, ``log``.

The canonical normal form is :func:`normalize`: function arguments are
normalized recursively and the result is brought into canceled rational
form.  Transcendental and uninterpreted-function atoms are treated as
algebraically independent, so identities such as ``sin^2 + cos^2 = 1``
are not applied.
"""

from __future__ import annotations

import logging
import math
import random
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

import mpmath
import sympy
from sympy import Expr, Function, Symbol, cancel, sympify
from sympy.printing.str import StrPrinter

log = logging.getLogger(__name__)

NEG_INF = float("-inf")

TIME = Symbol("t")


class IdentityCheckError(AssertionError):
    """Normal form says zero but random evaluation disagrees."""


class EvaluationError(ValueError):
    """Raised for missing bindings or a vanishing denominator."""


class _OrderedSym(Symbol):
    """Symbol carrying a base name and a derivative order (number of primes)."""

    kind = "?"

    def __new__(cls, name: str, order: int = 0):
        if order < 0:
            raise ValueError("derivative order must be nonnegative")
        return Symbol.__new__(cls, name + "'" * order)

    @property
    def base(self) -> str:
        return self.name.rstrip("'")

    @property
    def order(self) -> int:
        return len(self.name) - len(self.base)

    def shifted(self, p: int = 1) -> "_OrderedSym":
        return type(self)(self.name, p)


class StateSym(_OrderedSym):
    kind = "state"


class AuxSym(_OrderedSym):
    kind = "aux"


class InputSym(_OrderedSym):
    kind = "input"


VarSym = (StateSym, AuxSym)


def state(name: str, order: int = 0) -> StateSym:
    return StateSym(name, order)


def aux(name: str, order: int = 0) -> AuxSym:
    return AuxSym(name, order)


def driving(name: str, order: int = 0) -> InputSym:
    return InputSym(name, order)


class UFunc(Function):
    """Application of a declared function or one of its partial derivatives."""

    base: str = ""
    partial: tuple = ()

    @classmethod
    def eval(cls, *args):
        return None

    def fdiff(self, argindex=1):
        return ufunc(self.base, len(self.args), self.partial + (argindex,))(*self.args)


@lru_cache(maxsize=None)
def _ufunc_class(name: str, arity: int, partial: tuple) -> type:
    label = name if not partial else "D(%s,%s)" % (name, ",".join(map(str, partial)))
    return type(label, (UFunc,), {"base": name, "partial": partial, "nargs": arity})


def ufunc(name: str, arity: int, partial: Iterable[int] = ()) -> type:
    """Function class for ``name`` differentiated in the given argument slots (1-based)."""
    return _ufunc_class(name, arity, tuple(sorted(partial)))


# --------------------------------------------------------------------------
# normal form and calculus


def normalize(e) -> Expr:
    """Canonical canceled rational form; function arguments normalized first."""
    e = sympify(e)
    if e.is_Atom:
        if e in (sympy.zoo, sympy.nan):
            raise ZeroDivisionError("division by an identically zero expression")
        return e
    apps = {f: f.func(*[normalize(a) for a in f.args]) for f in e.atoms(Function)}
    if apps:
        e = e.xreplace(apps)
    if e.has(sympy.zoo, sympy.nan):
        raise ZeroDivisionError("division by an identically zero expression")
    out = cancel(e)
    if out.has(sympy.zoo, sympy.nan):
        raise ZeroDivisionError("division by an identically zero expression")
    return out


def variable_atoms(e: Expr) -> set:
    return {a for a in e.free_symbols if isinstance(a, VarSym)}


def _ordered_atoms(e: Expr) -> list:
    return sorted((a for a in e.free_symbols if isinstance(a, _OrderedSym)), key=sympy.default_sort_key)


def _d1(e: Expr) -> Expr:
    out = e.diff(TIME)
    for a in _ordered_atoms(e):
        out += e.diff(a) * a.shifted()
    return normalize(out)


def total_derivative(e, p: int = 1) -> Expr:
    if p < 0:
        raise ValueError("differentiation order must be nonnegative")
    e = normalize(e)
    for _ in range(p):
        e = _d1(e)
    return e


def partial(e, a: _OrderedSym) -> Expr:
    return normalize(sympify(e).diff(a))


def hod(e, name: str, kind: type = StateSym):
    """Highest derivative order of variable ``name`` occurring in ``e`` (or -inf)."""
    best = NEG_INF
    for a in sympify(e).free_symbols:
        if type(a) is kind and a.base == name:
            best = max(best, a.order)
    return best


def hod_vector(u: Iterable, name: str, kind: type = StateSym):
    return max((hod(x, name, kind) for x in u), default=NEG_INF)


def hod_map(e) -> dict:
    """Map variable base name -> highest order, over states and auxiliaries."""
    out: dict = {}
    for a in sympify(e).free_symbols:
        if isinstance(a, VarSym):
            out[a.base] = max(out.get(a.base, -1), a.order)
    return out


def is_constant(e) -> bool:
    return sympify(e).is_Rational is True


# --------------------------------------------------------------------------
# evaluation


def _to_sympy_number(v):
    if isinstance(v, Fraction):
        return sympy.Rational(v.numerator, v.denominator)
    if isinstance(v, int):
        return sympy.Integer(v)
    if isinstance(v, float):
        return sympy.Float(v)
    return sympify(v)


def evaluate(e, point: Mapping):
    """Evaluate at a value point; exact Fraction when possible, float otherwise."""
    e = sympify(e)
    apps = {k: _to_sympy_number(v) for k, v in point.items() if isinstance(k, Function)}
    syms = {k: _to_sympy_number(v) for k, v in point.items() if not isinstance(k, Function)}
    if apps:
        e = e.xreplace(apps)
    val = e.xreplace(syms)
    missing = [a for a in val.free_symbols]
    if missing or val.atoms(UFunc):
        names = sorted(str(a) for a in missing) + sorted(str(f) for f in val.atoms(UFunc))
        raise EvaluationError("missing binding for " + ", ".join(names))
    if val.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo):
        raise EvaluationError("denominator vanishes at the value point")
    if val.is_Rational:
        return Fraction(int(val.p), int(val.q))
    num = complex(val.evalf(30))
    if not math.isfinite(num.real):
        raise EvaluationError("non-finite value at the value point")
    return num.real if abs(num.imag) <= 1e-12 * max(1.0, abs(num.real)) else num


# --------------------------------------------------------------------------
# randomized identity testing

RAND_BOUND = 10**4
RAND_REPEATS = 5


def random_rational(rng: random.Random, bound: int = RAND_BOUND) -> Fraction:
    return Fraction(rng.randint(-bound, bound), rng.randint(1, bound))


class _Sampler:
    """High-precision numeric evaluation with random values for free atoms.

    Uninterpreted function applications receive independent random values
    keyed by their normalized form; transcendentals are evaluated for real.
    """

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.values: dict = {}

    def _atom(self, key):
        if key not in self.values:
            r = random_rational(self.rng)
            self.values[key] = mpmath.mpf(r.numerator) / r.denominator
        return self.values[key]

    def value(self, e, magnitude=False):
        if e.is_Symbol:
            return self._atom(e)
        if e.is_Rational:
            v = mpmath.mpf(int(e.p)) / int(e.q)
            return abs(v) if magnitude else v
        if e.is_Number:
            v = mpmath.mpf(str(e))
            return abs(v) if magnitude else v
        if e is sympy.E:
            return mpmath.e
        if e.is_Add:
            vals = [self.value(a, magnitude) for a in e.args]
            return sum(abs(v) for v in vals) if magnitude else sum(vals)
        if e.is_Mul:
            out = mpmath.mpf(1)
            for a in e.args:
                out *= self.value(a, magnitude)
            return abs(out) if magnitude else out
        if e.is_Pow:
            b = self.value(e.base, magnitude)
            return b ** int(e.exp)
        if isinstance(e, UFunc):
            return self._atom(normalize(e))
        arg = self.value(e.args[0])
        fn = {sympy.sin: mpmath.sin, sympy.cos: mpmath.cos, sympy.exp: mpmath.exp, sympy.log: mpmath.log}.get(e.func)
        if fn is None:
            raise TypeError("unsupported operator %s" % e.func)
        v = fn(arg)
        return abs(v) if magnitude else v


_seed = [0]


def set_seed(seed: int) -> None:
    """Default seed for every randomized identity check."""
    _seed[0] = seed


def current_seed() -> int:
    return _seed[0]


def numerically_zero(e, *, seed=None, repeats: int = RAND_REPEATS) -> bool:
    """True when ``e`` vanishes at ``repeats`` random points (50-digit arithmetic)."""
    e = sympify(e)
    rng = random.Random(current_seed() if seed is None else seed)
    with mpmath.workdps(50):
        for _ in range(repeats):
            s = _Sampler(rng)
            try:
                v = s.value(e)
                scale = s.value(e, magnitude=True)
            except ZeroDivisionError:
                continue
            if abs(v) > mpmath.mpf(10) ** -35 * max(1, abs(scale)):
                return False
    return True


def is_identically_zero(e, *, check: bool = True, seed=None) -> bool:
    e = sympify(e)
    zero = normalize(e) == 0
    if check:
        agrees = numerically_zero(e, seed=seed)
        if zero and not agrees:
            raise IdentityCheckError("normal form is zero but %s is not at random points" % e)
        if not zero and agrees:
            log.info("nonzero normal form vanishes numerically (hidden identity): %s", e)
    return zero


# --------------------------------------------------------------------------
# serialization


class _Printer(StrPrinter):
    def _print_log(self, expr):
        return "ln(%s)" % self._print(expr.args[0])

    def _print_Exp1(self, expr):
        return "exp(1)"

    def _print_Pow(self, expr, rational=False):
        return super()._print_Pow(expr, rational).replace("**", "^")


_PRINTER = _Printer({"order": "lex"})


def serialize(e) -> str:
    """Deterministic text form, parseable by the DAE frontend."""
    return _PRINTER.doprint(sympify(e)).replace("**", "^")
