from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_feasible_lp, vertex_enumeration_max

from mobisynth.errors import InfeasibleError, UnboundedError
from mobisynth.lp import LinearProgram, solve_lp


def lp(c, A_ub=(), b_ub=(), A_eq=(), b_eq=(), lb=None, ub=None):
    n = len(c)
    return LinearProgram(np.array(c, float), np.array(A_ub, float).reshape(-1, n), np.array(b_ub, float),
                         np.array(A_eq, float).reshape(-1, n), np.array(b_eq, float),
                         np.zeros(n) if lb is None else np.array(lb, float),
                         np.full(n, 100.0) if ub is None else np.array(ub, float))


def test_textbook_problem():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
    res = solve_lp(lp([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18]))
    assert res.objective == pytest.approx(36)
    assert res.x == pytest.approx([2, 6])


def test_equality_and_bounds():
    res = solve_lp(lp([1, 1], A_eq=[[1, -1]], b_eq=[2], lb=[0, 0], ub=[5, 10]))
    assert res.x == pytest.approx([5, 3])


def test_nonzero_lower_bounds():
    res = solve_lp(lp([-1, -1], [[-1, -1]], [-10], lb=[3, 4], ub=[20, 20]))
    assert res.objective == pytest.approx(-10)
    assert res.x[0] >= 3 - 1e-9 and res.x[1] >= 4 - 1e-9


def test_infeasible_names_constraints():
    prog = LinearProgram(np.zeros(1), np.array([[1.0], [-1.0]]), np.array([1.0, -5.0]), np.zeros((0, 1)),
                         np.zeros(0), np.zeros(1), np.full(1, 10.0), ("cap", "floor"), (), ("x",))
    with pytest.raises(InfeasibleError) as ei:
        solve_lp(prog)
    assert ei.value.violated


def test_inverted_variable_range_is_infeasible():
    with pytest.raises(InfeasibleError):
        solve_lp(lp([1], lb=[5], ub=[1]))


def test_bounds_must_be_finite():
    with pytest.raises(ValueError):
        lp([1], lb=[0], ub=[np.inf])


def test_unbounded_error_type_exists():
    # every accepted LP has finite bounds, so unboundedness cannot occur
    assert issubclass(UnboundedError, Exception)


def test_degenerate_vertex_terminates():
    # many constraints through the optimum
    A = [[1, 0], [0, 1], [1, 1], [2, 1], [1, 2]]
    b = [1, 1, 2, 3, 3]
    res = solve_lp(lp([1, 1], A, b))
    assert res.objective == pytest.approx(2)


def test_solution_is_a_vertex_and_feasible():
    rng = np.random.default_rng(5)
    for _ in range(20):
        prog = random_feasible_lp(rng, 3, 4, 1)
        res = solve_lp(prog)
        assert prog.violations(res.x) == []


@pytest.mark.parametrize("seed", range(25))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    prog = random_feasible_lp(rng, n, int(rng.integers(1, 5)), int(rng.integers(0, 2)))
    assert solve_lp(prog).objective == pytest.approx(vertex_enumeration_max(prog), abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_optimum_dominates_feasible_samples(seed):
    rng = np.random.default_rng(seed)
    prog = random_feasible_lp(rng, 3, 3, 0)
    best = solve_lp(prog).objective
    pts = rng.uniform(prog.lb, prog.ub, (500, 3))
    ok = np.all(pts @ prog.A_ub.T <= prog.b_ub, axis=1)
    if ok.any():
        assert best >= (pts[ok] @ prog.c).max() - 1e-9
