from fractions import Fraction

import pytest
import sympy

from sigmareg import expr as ex
from sigmareg import families
from sigmareg import jacobian as jc
from sigmareg import pipeline as pl

x, y, lam = ex.state("x"), ex.state("y"), ex.state("lam")


def pendulum_point():
    return {
        x: 5,
        y: 0,
        lam: 0,
        ex.state("x", 1): 0,
        ex.state("y", 1): 0,
        ex.state("x", 2): 0,
        ex.state("y", 2): Fraction(49, 5),
    }


def test_analyze_verdicts(load):
    assert pl.analyze(load("pendulum")).verdict == pl.SUCCESS
    assert pl.analyze(load("coupled")).verdict == pl.SA_FAILED
    rep = pl.analyze(load("pendmess1"), relations=[x**2 + y**2 - sympy.Symbol("L") ** 2])
    assert rep.verdict == pl.SA_FAILED and rep.final.classification == jc.STRUCTURAL


def test_analyze_with_user_offsets(load):
    s = load("pendulum")
    rep = pl.analyze(s, offsets=((1, 1, 3), (3, 3, 1)))
    assert rep.final.index == 3 and rep.verdict == pl.SUCCESS
    with pytest.raises(ValueError):
        pl.analyze(s, offsets=((0, 0, 0), (2, 2, 0)))


def test_regularize_verdicts(conversion_runs):
    assert conversion_runs["coupled/lc"].verdict == pl.SUCCESS
    assert conversion_runs["coupled/es"].verdict == pl.STUCK
    assert conversion_runs["pendmess2"].verdict == pl.ILL_POSED
    assert conversion_runs["modpenda"].val_trace == [9, 6, 5, 2]


def test_supplied_non_kernel_vector_is_refused_unless_allowed(load, conversion_runs):
    from .conftest import robot_reference_u

    rep = pl.regularize(load("robotarm"), vectors=[robot_reference_u()], pivots=[2])
    assert rep.verdict == pl.STUCK
    assert any("not a left null vector" in m for m in rep.messages)
    allowed = conversion_runs["robotarm/reference"]
    assert allowed.verdict == pl.SUCCESS
    assert any("supplied u is not a left null vector" in m for m in allowed.messages)


def test_iteration_limit(load):
    rep = pl.regularize(load("modpenda"), max_iters=1)
    assert rep.verdict == pl.STUCK and len(rep.steps) == 1
    assert "iteration limit 1 reached" in rep.messages


def test_unknown_policy(load):
    with pytest.raises(ValueError):
        pl.regularize(load("pendulum"), policy="sideways")


def test_recover_chain(conversion_runs):
    for name in ("coupled/lc", "modpenda", "coupled/es", "transamp"):
        rep = conversion_runs[name]
        back = pl.recover_chain(rep)
        orig = rep.iterations[0].system
        for a, b in zip(back.exprs, orig.exprs):
            assert ex.normalize(a - b) == 0, name


def test_solution_scheme_pendulum(load):
    s = load("pendulum")
    rep = pl.analyze(s)
    sch = pl.solution_scheme(s, rep.final.offsets)
    assert sch.kd == -2
    assert [st.k for st in sch.stages] == [-2, -1, 0]
    assert sch.stages[0].equations == ((2, 0),) and sch.stages[0].unknowns == ((0, 0), (1, 0))
    assert sch.stages[2].equations == ((0, 0), (1, 0), (2, 2))
    assert sch.stages[2].unknowns == ((0, 2), (1, 2), (2, 0))
    assert "solve f3^(2)" not in sch.render(s)
    assert "k =  -2:  solve f3  for x, y" in sch.render(s)


def test_solution_scheme_linconst(load):
    s = load("linconst01_2")
    rep = pl.analyze(s)
    sch = pl.solution_scheme(s, rep.final.offsets, K=1)
    assert sch.stages[-1].k == 1
    assert sum(len(st.equations) for st in sch.stages if st.k <= 0) >= s.n


def test_success_check_pendulum(load):
    s = load("pendulum")
    rep = pl.analyze(s)
    res = pl.success_check(s, rep.final.offsets, pendulum_point())
    assert res.success, res.reason
    assert res.det == pytest.approx(-50)


def test_success_check_detects_inconsistent_point(load):
    s = load("pendulum")
    rep = pl.analyze(s)
    pt = pendulum_point()
    pt[x] = 4
    res = pl.success_check(s, rep.final.offsets, pt)
    assert not res.success and "residual of f3" in res.reason


def test_success_check_fails_on_singular_jacobian(load):
    s = load("linconst01_1")
    rep = pl.analyze(s)
    atoms = {}
    for k in range(4):
        for name in s.columns:
            atoms[ex.state(name, k)] = 0
    for name in s.inputs:
        for k in range(4):
            atoms[ex.InputSym(name, k)] = 0
    atoms[ex.TIME] = 0
    res = pl.success_check(s, rep.final.offsets, atoms, jacobian=rep.final.jacobian)
    assert not res.success and "singular" in res.reason


def test_cancellation_message(load):
    rep = pl.analyze(load("algsys"))
    assert rep.cancellation_detected
    assert any(pl.CANCELLATION in m for m in rep.messages)


def test_reissig_family_original_index():
    for k in range(1, 4):
        rep = pl.analyze(families.reissig(k))
        assert rep.final.index == k + 1 and rep.final.jacobian.det == 1
