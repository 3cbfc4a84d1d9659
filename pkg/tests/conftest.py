import pytest
import sympy

from sigmareg import expr as ex
from sigmareg import families


@pytest.fixture(scope="session")
def load():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = families.load(name)
        return cache[name]

    return get


def atoms(*names, order=0):
    return [ex.state(n, order) for n in names]


def rat(v):
    return sympy.Rational(v.numerator, v.denominator) if hasattr(v, "numerator") else sympy.nsimplify(v)


def unit(n, *ix):
    return tuple(1 if k in ix else 0 for k in range(n))


def robot_reference_u():
    x3 = ex.state("x3")
    a = 2 / (2 - sympy.cos(x3) ** 2)
    b = sympy.cos(x3) / (2 - sympy.cos(x3) ** 2)
    return (1, 0, a / (a + b), 0, 0)


def _conversion_runs():
    from sigmareg import pipeline as pl

    L = families.load
    runs = {
        "coupled/lc": pl.regularize(L("coupled")),
        "coupled/es": pl.regularize(L("coupled"), policy="es-only", pivots=[2]),
        "esexam1/auto": pl.regularize(L("esexam1")),
        "esexam1/es-l1": pl.regularize(L("esexam1"), policy="es-only", pivots=[0]),
        "xyzt": pl.regularize(L("xyzt")),
        "modpenda": pl.regularize(L("modpenda")),
        "modpendb/es": pl.regularize(L("modpendb"), policy="es-only"),
        "modpendb/lc": pl.regularize(L("modpendb")),
        "pendmess2": pl.regularize(L("pendmess2")),
        "linconst01_1": pl.regularize(L("linconst01_1"), vectors=[(0, 1, 1, 1)]),
        "robotarm/auto": pl.regularize(L("robotarm")),
        "robotarm/reference": pl.regularize(L("robotarm"), vectors=[robot_reference_u()], pivots=[2], check_kernel=False),
        "transamp": pl.regularize(L("transamp"), vectors=[unit(8, 0, 1), unit(8, 3, 4), unit(8, 6, 7)]),
    }
    for p in (0, 1, 3):
        runs[f"fgxy/{p}"] = pl.regularize(L("fgxy"), policy="lc-only", pivots=[p])
    return runs


@pytest.fixture(scope="session")
def conversion_runs():
    return _conversion_runs()


@pytest.fixture(scope="session")
def all_steps(conversion_runs):
    return [(name, k, step, rep) for name, rep in conversion_runs.items() for k, step in enumerate(rep.steps)]


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
