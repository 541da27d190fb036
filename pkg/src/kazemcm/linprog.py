"""Dense two-phase primal simplex.

Small, self-contained solver for the LP classifiers. Problems are stated
with per-row and per-variable bounds; internally everything is converted
to equality standard form (free variables split, slacks/surplus added)
and solved on a tableau. Dantzig pricing with a permanent switch to
Bland's rule once the objective stalls, which guarantees termination on
degenerate problems.
"""

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-7
STALL_LIMIT = 50
DEFAULT_MAX_ITERS = 20000
REFACTOR_EVERY = 30

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
_NUMERIC_FAILURE = "numeric-failure"  # internal; triggers a Bland retry


@dataclass
class LpProblem:
    """min objective . x subject to row_lo <= A x <= row_hi and
    var_lo <= x <= var_hi. Rows are sparse: lists of (col, coef)."""

    n_vars: int
    objective: np.ndarray
    rows: list = field(default_factory=list)  # (entries, lo, hi)
    var_lo: np.ndarray = None
    var_hi: np.ndarray = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64)
        if self.objective.shape != (self.n_vars,):
            raise ValueError("objective length must equal n_vars")
        if self.var_lo is None:
            self.var_lo = np.full(self.n_vars, -np.inf)
        if self.var_hi is None:
            self.var_hi = np.full(self.n_vars, np.inf)
        self.var_lo = np.asarray(self.var_lo, dtype=np.float64)
        self.var_hi = np.asarray(self.var_hi, dtype=np.float64)

    def add_row(self, entries, lo=-np.inf, hi=np.inf):
        self.rows.append((list(entries), float(lo), float(hi)))


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str


def _to_standard_form(p: LpProblem):
    """Equality standard form min c.z, A z = b, z >= 0.

    Returns (c, A, b, recover) where recover maps a z vector back to the
    original variables.
    """
    n = p.n_vars
    # variable substitutions: x_j = shift_j + sum of +/- z columns
    cols_pos = np.full(n, -1)
    cols_neg = np.full(n, -1)
    shift = np.zeros(n)
    sign = np.ones(n)
    extra_rows = []  # upper bounds for doubly-bounded vars
    ncols = 0
    for j in range(n):
        lo, hi = p.var_lo[j], p.var_hi[j]
        if np.isinf(lo) and np.isinf(hi):
            cols_pos[j] = ncols
            cols_neg[j] = ncols + 1
            ncols += 2
        elif not np.isinf(lo):
            shift[j] = lo
            cols_pos[j] = ncols
            ncols += 1
            if not np.isinf(hi):
                extra_rows.append(([(j, 1.0)], lo, hi))
        else:  # only hi finite: x = hi - z
            shift[j] = hi
            sign[j] = -1.0
            cols_pos[j] = ncols
            ncols += 1

    all_rows = list(p.rows) + extra_rows
    eq_rows = []  # (dense coefs over structural cols, rhs, slack sign)
    for entries, lo, hi in all_rows:
        if np.isinf(lo) and np.isinf(hi):
            continue
        if not np.isinf(lo) and not np.isinf(hi) and lo != hi:
            sides = [(lo, +1), (hi, -1)]  # a.x >= lo and a.x <= hi
        elif lo == hi:
            sides = [(lo, 0)]
        elif not np.isinf(lo):
            sides = [(lo, +1)]
        else:
            sides = [(hi, -1)]
        for rhs, kind in sides:
            eq_rows.append((entries, rhs, kind))

    m = len(eq_rows)
    nslack = sum(1 for _, _, kind in eq_rows if kind != 0)
    A = np.zeros((m, ncols + nslack))
    b = np.zeros(m)
    slack_at = ncols
    for i, (entries, rhs, kind) in enumerate(eq_rows):
        rhs_adj = rhs
        for j, coef in entries:
            rhs_adj -= coef * shift[j]
            A[i, cols_pos[j]] += coef * sign[j]
            if cols_neg[j] >= 0:
                A[i, cols_neg[j]] -= coef
        b[i] = rhs_adj
        if kind == +1:  # a.x >= rhs -> a.x - s = rhs
            A[i, slack_at] = -1.0
            slack_at += 1
        elif kind == -1:  # a.x <= rhs -> a.x + s = rhs
            A[i, slack_at] = 1.0
            slack_at += 1

    c = np.zeros(ncols + nslack)
    for j in range(n):
        cj = p.objective[j]
        c[cols_pos[j]] += cj * sign[j]
        if cols_neg[j] >= 0:
            c[cols_neg[j]] -= cj

    obj_shift = float(p.objective @ shift)

    def recover(z):
        x = shift.copy()
        for j in range(n):
            x[j] += sign[j] * z[cols_pos[j]]
            if cols_neg[j] >= 0:
                x[j] -= z[cols_neg[j]]
        return x

    return c, A, b, recover, obj_shift


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    piv_row = T[row]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, piv_row)
    basis[row] = col


def _build_tableau(c, A, b, basis):
    """Fresh tableau for a given basis, or None if the basis matrix is
    singular or the basic solution is not (near-)feasible."""
    m, ncols = A.shape
    B = A[:, basis]
    try:
        binv_a = np.linalg.solve(B, A)
        xb = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:
        return None
    if xb.min() < -1e-7:
        return None
    np.clip(xb, 0.0, None, out=xb)
    cb = c[basis]
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :ncols] = binv_a
    T[:m, -1] = xb
    T[-1, :ncols] = c - cb @ binv_a
    T[-1, -1] = -float(cb @ xb)
    return T


def _simplex_core(T, basis, ncols, max_iters, factor, stop_at_zero=False,
                  bland_start=False, refactor_every=REFACTOR_EVERY):
    """Minimize the objective in the last tableau row over the first
    ncols columns. Returns a status string.

    stop_at_zero terminates once the objective reaches zero (used for
    phase 1, whose optimum is known to be 0 when feasible; without the
    early exit, degenerate pivots at the feasible point can churn
    forever in floating point).

    factor is the (c, A, b) triple the tableau was built from; rank-one
    tableau updates accumulate error on large problems, so the tableau
    is rebuilt from the basis every refactor_every pivots and before any
    optimal/unbounded verdict. A failed rebuild (singular or infeasible
    basis) aborts with a numeric-failure status so the caller can retry
    on a more conservative path.
    """
    m = T.shape[0] - 1
    stall = 0
    bland = bland_start
    last_obj = T[-1, -1]
    verified = False
    since_refactor = 0

    def refactor():
        nonlocal since_refactor
        fresh = _build_tableau(*factor, basis)
        if fresh is None:
            return False
        T[:, :] = fresh
        since_refactor = 0
        return True

    for _ in range(max_iters):
        if stop_at_zero and T[-1, -1] >= -1e-9:
            if not verified:
                if not refactor():
                    return _NUMERIC_FAILURE
                verified = True
                continue
            return OPTIMAL
        if since_refactor >= refactor_every:
            if not refactor():
                return _NUMERIC_FAILURE
        reduced = T[-1, :ncols]
        if bland:
            elig = np.where(reduced < -FEAS_TOL)[0]
            if elig.size == 0:
                if not verified:
                    if not refactor():
                        return _NUMERIC_FAILURE
                    verified = True
                    continue
                return OPTIMAL
            col = int(elig[0])
        else:
            col = int(np.argmin(reduced))
            if reduced[col] >= -FEAS_TOL:
                if not verified:
                    if not refactor():
                        return _NUMERIC_FAILURE
                    verified = True
                    continue
                return OPTIMAL
        ratios = np.full(m, np.inf)
        positive = T[:m, col] > PIVOT_TOL
        ratios[positive] = T[:m, -1][positive] / T[:m, col][positive]
        best = ratios.min()
        if not np.isfinite(best):
            if not verified:
                if not refactor():
                    return _NUMERIC_FAILURE
                verified = True
                continue
            return UNBOUNDED
        tying = np.where(ratios <= best * (1 + 1e-9) + 1e-12)[0]
        if bland:
            # anti-cycling: among tying rows pick the smallest basis index
            row = int(min(tying, key=lambda r: basis[r]))
        else:
            # numerical stability: pick the largest pivot element
            row = int(max(tying, key=lambda r: T[r, col]))
        _pivot(T, basis, row, col)
        verified = False
        since_refactor += 1
        obj = T[-1, -1]
        if obj <= last_obj + 1e-12:  # degenerate pivot, no progress
            stall += 1
            if stall >= STALL_LIMIT:
                bland = True
        else:
            stall = 0
        last_obj = obj
    return ITERATION_LIMIT


def solve_lp(p: LpProblem, max_iters: int = DEFAULT_MAX_ITERS) -> LpSolution:
    """Two-phase simplex solve; status is optimal / infeasible /
    unbounded / iteration-limit."""
    c, A, b, recover, obj_shift = _to_standard_form(p)
    m, ntot = A.shape
    if m == 0:
        # unconstrained standard-form problem over z >= 0
        if np.any(c < -FEAS_TOL):
            return LpSolution(x=recover(np.zeros(ntot)), objective=-np.inf, status=UNBOUNDED)
        z = np.zeros(ntot)
        return LpSolution(x=recover(z), objective=float(c @ z) + obj_shift, status=OPTIMAL)

    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(ntot), np.ones(m)])

    # second attempt runs Bland's rule from the first pivot with very
    # frequent refactorization: slower, but numerically conservative
    for bland_start, refactor_every in ((False, REFACTOR_EVERY), (True, 10)):
        # phase 1: artificial basis
        T = np.zeros((m + 1, ntot + m + 1))
        T[:m, :ntot] = A
        T[:m, ntot : ntot + m] = np.eye(m)
        T[:m, -1] = b
        T[-1, ntot : ntot + m] = 1.0
        basis = list(range(ntot, ntot + m))
        # price out artificials
        T[-1] -= T[:m].sum(axis=0)

        status = _simplex_core(
            T, basis, ntot + m, max_iters, (c1, A1, b),
            stop_at_zero=True, bland_start=bland_start, refactor_every=refactor_every,
        )
        if status == _NUMERIC_FAILURE:
            continue
        if status == ITERATION_LIMIT:
            return LpSolution(x=recover(np.zeros(ntot)), objective=np.nan, status=ITERATION_LIMIT)
        if -T[-1, -1] > 1e-7:
            return LpSolution(x=recover(np.zeros(ntot)), objective=np.nan, status=INFEASIBLE)

        # drive any leftover artificials out of the basis
        for i in range(m):
            if basis[i] >= ntot:
                nz = np.where(np.abs(T[i, :ntot]) > PIVOT_TOL)[0]
                if nz.size:
                    _pivot(T, basis, i, int(nz[0]))

        rows_keep = [i for i in range(m) if basis[i] < ntot]
        # redundant rows (still basic artificial, zero row) are dropped
        basis2 = [basis[i] for i in rows_keep]
        A2 = A[rows_keep]
        b2 = b[rows_keep]
        T2 = _build_tableau(c, A2, b2, basis2)
        if T2 is None:
            continue

        status = _simplex_core(
            T2, basis2, ntot, max_iters, (c, A2, b2),
            bland_start=bland_start, refactor_every=refactor_every,
        )
        if status == _NUMERIC_FAILURE:
            continue
        z = np.zeros(ntot)
        for i, bi in enumerate(basis2):
            z[bi] = T2[i, -1]
        x = recover(z)
        objective = float(p.objective @ x)
        if status == UNBOUNDED:
            return LpSolution(x=x, objective=-np.inf, status=UNBOUNDED)
        if status == ITERATION_LIMIT:
            return LpSolution(x=x, objective=objective, status=ITERATION_LIMIT)
        return LpSolution(x=x, objective=objective, status=OPTIMAL)

    # both pivoting strategies lost the basis numerically
    return LpSolution(x=recover(np.zeros(ntot)), objective=np.nan, status=ITERATION_LIMIT)
