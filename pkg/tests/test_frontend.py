import json
from fractions import Fraction

import pytest
import sympy

from sigmareg import expr as ex
from sigmareg import frontend as fe
from sigmareg import sigma as sg

BASIC = """
system demo;
var x, y;
fun F(2);
input u;
const a = 1/2, b;
eq e1: der(x, 2) + a*x*y - u(t);
eq e2: F(x, y') + b*exp(t) + 1e-3;
"""


def test_parse_declarations():
    s = fe.parse(BASIC)
    assert s.name == "demo" and s.states == ("x", "y")
    assert s.functions == (("F", 2),) and s.inputs == ("u",)
    assert s.constants == (("a", Fraction(1, 2)), ("b", None))
    assert [e.name for e in s.equations] == ["e1", "e2"]
    assert s.hod(s.exprs[0], 0) == 2 and s.hod(s.exprs[1], 1) == 1
    assert s.constant_values() == {sympy.Symbol("a"): Fraction(1, 2)}


def test_primes_and_der_agree():
    a = fe.parse("system p; var x; eq e: x'' + der(x, 2);")
    assert ex.normalize(a.exprs[0] - 2 * ex.state("x", 2)) == 0


def test_power_operators_are_synonyms():
    a = fe.parse("system p; var x; eq e: x^3 - x**3;")
    assert a.exprs[0] == 0


def test_derivative_of_ufunc_partial_syntax():
    s = fe.parse(
        "system p; var x, y; fun F(2); eq e: D(F,1)(x, y)*x' + D(F,2)(x,y)*y' - der(F(x, y)); eq g: y;"
    )
    assert s.exprs[0] == 0


@pytest.mark.parametrize(
    "src, fragment",
    [
        ("var x; eq e: x;", "system"),
        ("system s; var x; eq e: x +;", "line 1"),
        ("system s; var x; eq e: z;", "z"),
        ("system s; var x, y; eq e: x;", "equations"),
        ("system s; var x; fun F(2); eq e: F(x);", "F"),
        ("system s; var x; eq e: x $ 1;", "unexpected character"),
        ("system s; var x, x; eq e: x; eq g: x;", "x"),
    ],
)
def test_parse_errors_are_located(src, fragment):
    with pytest.raises(fe.ParseError) as err:
        fe.parse(src)
    assert fragment in str(err.value)


def test_parse_error_line_and_column():
    with pytest.raises(fe.ParseError) as err:
        fe.parse("system s;\nvar x;\neq e: x * ;\n")
    assert err.value.line == 3 and err.value.col > 0


def test_render_round_trip_text_and_json(load):
    for name in ("pendulum", "fgxy", "esexam1", "transamp", "algsys"):
        s = load(name)
        again = fe.parse(fe.render(s))
        assert again.same_as(s)
        data = json.loads(fe.render(s, "json"))
        assert data == fe.to_json(s)
        assert [e["name"] for e in data["equations"]] == [e.name for e in s.equations]


def test_formal_hod_records_unsimplified_orders(load):
    s = load("algsys")
    formal = sg.formal_signature(s)
    true = sg.signature_matrix(s)
    assert formal.entries[0] == (1, 1)
    assert true.entries[0] == (0, 0)


def test_parse_point_includes_constants(load):
    s = load("pendulum")
    pt = fe.parse_point("x = 3\ny = -4  # comment\nx'' = 1/2\n", s)
    assert pt[ex.state("x")] == 3 and pt[ex.state("y")] == -4
    assert pt[ex.state("x", 2)] == Fraction(1, 2)
    assert pt[sympy.Symbol("L")] == 5
    with pytest.raises(fe.ParseError):
        fe.parse_point("x + y = 1", s)
    with pytest.raises(fe.ParseError):
        fe.parse_point("x = y", s)


def test_parse_vector(load):
    s = load("pendulum")
    v = fe.parse_vector("(1, -x, 2*y')", s)
    assert v == [1, -ex.state("x"), 2 * ex.state("y", 1)]


def test_folded_substitutes_valued_constants():
    s = fe.parse(BASIC).folded()
    assert s.constants == (("b", None),)
    assert not s.exprs[0].has(sympy.Symbol("a"))
