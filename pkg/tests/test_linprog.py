from itertools import combinations

import numpy as np
import pytest

from kazemcm.linprog import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    solve_lp,
)


def brute_force_min(c, A, b):
    """Vertex enumeration oracle for min c.x s.t. A x >= b, x >= 0."""
    m, n = A.shape
    rows = np.vstack([A, np.eye(n)])
    rhs = np.concatenate([b, np.zeros(n)])
    best = np.inf
    for idx in combinations(range(m + n), n):
        M = rows[list(idx)]
        try:
            x = np.linalg.solve(M, rhs[list(idx)])
        except np.linalg.LinAlgError:
            continue
        if np.all(A @ x >= b - 1e-9) and np.all(x >= -1e-9):
            best = min(best, float(c @ x))
    return best


class TestSolveLp:
    def test_min_x_above_three(self):
        p = LpProblem(n_vars=1, objective=np.array([1.0]))
        p.add_row([(0, 1.0)], lo=3.0)
        s = solve_lp(p)
        assert s.status == OPTIMAL
        assert s.x[0] == pytest.approx(3.0)

    def test_simplex_face(self):
        p = LpProblem(n_vars=2, objective=np.ones(2), var_lo=np.zeros(2))
        p.add_row([(0, 1.0), (1, 1.0)], lo=1.0)
        s = solve_lp(p)
        assert s.status == OPTIMAL
        assert s.objective == pytest.approx(1.0)

    def test_infeasible(self):
        p = LpProblem(n_vars=1, objective=np.array([1.0]))
        p.add_row([(0, 1.0)], lo=3.0)
        p.add_row([(0, 1.0)], hi=1.0)
        assert solve_lp(p).status == INFEASIBLE

    def test_unbounded(self):
        p = LpProblem(n_vars=1, objective=np.array([-1.0]), var_lo=np.zeros(1))
        assert solve_lp(p).status == UNBOUNDED

    def test_equality_row(self):
        p = LpProblem(n_vars=2, objective=np.array([1.0, 2.0]), var_lo=np.zeros(2))
        p.add_row([(0, 1.0), (1, 1.0)], lo=4.0, hi=4.0)
        s = solve_lp(p)
        assert s.status == OPTIMAL
        assert s.x[0] == pytest.approx(4.0)
        assert s.objective == pytest.approx(4.0)

    def test_free_variables(self):
        # min |shift|-style problem: min y s.t. y >= x - 2, y >= 2 - x
        p = LpProblem(n_vars=2, objective=np.array([0.0, 1.0]))
        p.add_row([(1, 1.0), (0, -1.0)], lo=-2.0)
        p.add_row([(1, 1.0), (0, 1.0)], lo=2.0)
        s = solve_lp(p)
        assert s.status == OPTIMAL
        assert s.objective == pytest.approx(0.0)
        assert s.x[0] == pytest.approx(2.0)

    def test_variable_upper_bounds(self):
        p = LpProblem(
            n_vars=2,
            objective=np.array([-1.0, -1.0]),
            var_lo=np.zeros(2),
            var_hi=np.array([3.0, 5.0]),
        )
        s = solve_lp(p)
        assert s.status == OPTIMAL
        assert s.objective == pytest.approx(-8.0)

    def test_random_lps_match_vertex_enumeration(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n, m = 5, 8
            A = rng.normal(size=(m, n))
            x0 = rng.random(n)
            b = A @ x0 - rng.random(m)  # feasible at x0
            c = rng.random(n) + 0.1  # bounded with x >= 0
            p = LpProblem(n_vars=n, objective=c, var_lo=np.zeros(n))
            for i in range(m):
                p.add_row([(j, A[i, j]) for j in range(n)], lo=b[i])
            s = solve_lp(p)
            expected = brute_force_min(c, A, b)
            assert s.status == OPTIMAL
            assert s.objective == pytest.approx(expected, abs=1e-6)

    def test_constraints_satisfied_at_optimum(self):
        rng = np.random.default_rng(3)
        n, m = 4, 6
        A = rng.normal(size=(m, n))
        b = A @ rng.random(n) - rng.random(m)
        p = LpProblem(n_vars=n, objective=rng.random(n) + 0.1, var_lo=np.zeros(n))
        for i in range(m):
            p.add_row([(j, A[i, j]) for j in range(n)], lo=b[i])
        s = solve_lp(p)
        assert s.status == OPTIMAL
        assert np.all(A @ s.x >= b - 1e-8)
        assert np.all(s.x >= -1e-8)

    def test_degenerate_problem_terminates(self):
        # many redundant constraints through the same vertex
        p = LpProblem(n_vars=2, objective=np.array([1.0, 1.0]), var_lo=np.zeros(2))
        for scale in (1.0, 2.0, 3.0, 4.0):
            p.add_row([(0, scale), (1, scale)], lo=scale)
        s = solve_lp(p)
        assert s.status == OPTIMAL
        assert s.objective == pytest.approx(1.0)
