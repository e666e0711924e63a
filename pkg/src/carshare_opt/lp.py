"""Linear programming kernel.

A dense bounded-variable primal simplex (two phases, Dantzig pricing with a
Bland fallback under degeneracy) that returns primal values, row duals and
reduced costs. Large models are routed to HiGHS through
``scipy.optimize.linprog``; both backends return duals in the same sign
convention.

Sign convention (maximisation): at an optimum, duals of ``<=`` rows are
nonnegative, duals of ``>=`` rows are nonpositive, duals of ``=`` rows are
free, and ``objective == rhs @ duals + sum(bound_j * reduced_cost_j)`` over
nonbasic columns.
"""
from __future__ import annotations

import dataclasses
import enum
from typing import Iterable

import numpy as np
from scipy import optimize, sparse

LE = "<="
GE = ">="
EQ = "="
_SENSES = (LE, GE, EQ)

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
DEGENERACY_LIMIT = 50

# rows * cols above which "auto" hands the model to HiGHS
DENSE_SIZE_LIMIT = 60_000


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iterationLimit"


@dataclasses.dataclass(frozen=True)
class Row:
    index: np.ndarray
    value: np.ndarray
    sense: str
    rhs: float
    name: str = ""


def make_row(index: Iterable[int], value: Iterable[float], sense: str, rhs: float,
             name: str = "") -> Row:
    if sense not in _SENSES:
        raise ValueError(f"unknown row sense {sense!r}")
    idx = np.asarray(list(index) if not isinstance(index, np.ndarray) else index, dtype=np.int64)
    val = np.asarray(list(value) if not isinstance(value, np.ndarray) else value, dtype=float)
    if idx.shape != val.shape:
        raise ValueError("row index/value length mismatch")
    return Row(idx, val, sense, float(rhs), name)


@dataclasses.dataclass
class LinearProgram:
    """A maximisation LP (or MILP description when ``integer`` flags are set)."""

    objective: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(0))
    lower: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(0))
    upper: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(0))
    integer: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(0, dtype=bool))
    rows: list = dataclasses.field(default_factory=list)
    col_names: list = dataclasses.field(default_factory=list)
    objective_constant: float = 0.0

    @property
    def n_cols(self) -> int:
        return len(self.objective)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_columns(self, objective, lower, upper, integer=False, names=None) -> slice:
        """Append columns in place (model building); returns their index range."""
        objective = np.atleast_1d(np.asarray(objective, dtype=float))
        k = len(objective)
        start = self.n_cols
        self.objective = np.concatenate([self.objective, objective])
        self.lower = np.concatenate([self.lower, np.broadcast_to(np.asarray(lower, float), (k,))])
        self.upper = np.concatenate([self.upper, np.broadcast_to(np.asarray(upper, float), (k,))])
        self.integer = np.concatenate([self.integer, np.broadcast_to(np.asarray(integer, bool), (k,))])
        if names is None:
            names = [f"x{start + t}" for t in range(k)]
        self.col_names.extend(names)
        return slice(start, start + k)

    def add_constraint(self, index, value, sense, rhs, name="") -> int:
        """Append a row in place (model building); returns its row index."""
        row = make_row(index, value, sense, rhs, name)
        _check_row(row, self.n_cols)
        self.rows.append(row)
        return self.n_rows - 1

    def add_rows(self, indptr, indices, sense, rhs, data=None) -> np.ndarray:
        """Append many rows given in CSR form; ``data`` defaults to all ones.

        ``sense`` is one sense for every row. Returns the new row indices.
        """
        if sense not in _SENSES:
            raise ValueError(f"unknown row sense {sense!r}")
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.ones(len(indices)) if data is None else np.asarray(data, dtype=float)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (len(indptr) - 1,))
        if data.shape != indices.shape or indptr[-1] != len(indices):
            raise ValueError("inconsistent CSR row data")
        if len(indices) and (indices.min() < 0 or indices.max() >= self.n_cols):
            raise IndexError("rows reference a column outside the model")
        start = self.n_rows
        rows = [Row(indices[a:b], data[a:b], sense, float(r))
                for a, b, r in zip(indptr[:-1].tolist(), indptr[1:].tolist(), rhs.tolist())]
        self.rows.extend(rows)
        return np.arange(start, self.n_rows)

    def copy(self) -> "LinearProgram":
        return LinearProgram(self.objective.copy(), self.lower.copy(), self.upper.copy(),
                             self.integer.copy(), list(self.rows), list(self.col_names),
                             self.objective_constant)

    def with_bounds(self, lower, upper) -> "LinearProgram":
        lp = self.copy()
        lp.lower = np.asarray(lower, dtype=float).copy()
        lp.upper = np.asarray(upper, dtype=float).copy()
        return lp

    def dense_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_rows, self.n_cols))
        for i, row in enumerate(self.rows):
            np.add.at(a[i], row.index, row.value)
        return a

    def sparse_matrix(self) -> sparse.csr_matrix:
        if not self.rows:
            return sparse.csr_matrix((0, self.n_cols))
        indptr = np.cumsum([0] + [len(r.index) for r in self.rows])
        indices = np.concatenate([r.index for r in self.rows])
        data = np.concatenate([r.value for r in self.rows])
        m = sparse.csr_matrix((data, indices, indptr), shape=(self.n_rows, self.n_cols))
        m.sum_duplicates()
        return m

    def rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows], dtype=float)

    def senses(self) -> list:
        return [r.sense for r in self.rows]


def _check_row(row: Row, n_cols: int) -> None:
    if len(row.index) and (row.index.min() < 0 or row.index.max() >= n_cols):
        raise IndexError(f"row {row.name!r} references a column outside 0..{n_cols - 1}")


def add_row(lp: LinearProgram, row: Row) -> LinearProgram:
    """Return a copy of ``lp`` with ``row`` appended."""
    _check_row(row, lp.n_cols)
    out = lp.copy()
    out.rows.append(row)
    return out


@dataclasses.dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray
    row_duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int = 0
    backend: str = "simplex"

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def solve(lp: LinearProgram, method: str = "auto", max_iter: int | None = None) -> LpResult:
    """Solve the LP relaxation of ``lp`` (integrality flags are ignored)."""
    if method == "auto":
        method = "simplex" if lp.n_rows * max(lp.n_cols, 1) <= DENSE_SIZE_LIMIT else "highs"
    if method == "simplex":
        return _solve_simplex(lp, max_iter)
    if method == "highs":
        return _solve_highs(lp, max_iter)
    raise ValueError(f"unknown LP method {method!r}")


# ---------------------------------------------------------------- simplex


class _Tableau:
    """Dense tableau B^-1 [A | I | Art] with bounded variables."""

    def __init__(self, a, b, lo, up, senses):
        m, n = a.shape
        self.m, self.n = m, n
        slack_lo = np.array([0.0 if s == LE else (-np.inf if s == GE else 0.0) for s in senses])
        slack_up = np.array([np.inf if s == LE else 0.0 for s in senses])
        x_struct = np.where(np.isfinite(lo), lo, np.where(np.isfinite(up), up, 0.0))
        resid = b - a @ x_struct if m else np.zeros(0)

        slack_val = np.clip(resid, slack_lo, slack_up)
        need_art = np.abs(resid - slack_val) > FEAS_TOL
        art_rows = np.flatnonzero(need_art)
        k = len(art_rows)
        sign = np.ones(m)
        art_sign = np.sign(resid[art_rows] - slack_val[art_rows])

        total = n + m + k
        self.lo = np.concatenate([lo, slack_lo, np.zeros(k)])
        self.up = np.concatenate([up, slack_up, np.full(k, np.inf)])
        self.x = np.concatenate([x_struct, slack_val, np.abs(resid[art_rows] - slack_val[art_rows])])
        self.n_art = k

        full = np.zeros((m, total))
        full[:, :n] = a
        full[:, n:n + m] = np.eye(m)
        for t, r in enumerate(art_rows):
            full[r, n + m + t] = art_sign[t]
        self.original = full.copy()
        self.b = b.copy()

        head = np.arange(n, n + m)
        for t, r in enumerate(art_rows):
            head[r] = n + m + t
            sign[r] = art_sign[t]
        self.head = head
        self.T = full * sign[:, None]
        self.basic = np.zeros(total, dtype=bool)
        self.basic[head] = True

    def iterate(self, cost, max_iter):
        """Primal simplex on ``cost`` (maximise). Returns (status, iterations)."""
        degenerate = 0
        bland = False
        it = 0
        free_nb = ~np.isfinite(self.lo) & ~np.isfinite(self.up)
        while it < max_iter:
            d = cost - cost[self.head] @ self.T
            at_lo = np.isclose(self.x, self.lo, atol=FEAS_TOL, rtol=0) & np.isfinite(self.lo)
            at_up = np.isclose(self.x, self.up, atol=FEAS_TOL, rtol=0) & np.isfinite(self.up)
            movable = self.up - self.lo > FEAS_TOL
            inc = ~self.basic & movable & (d > OPT_TOL) & (~at_up | free_nb)
            dec = ~self.basic & movable & (d < -OPT_TOL) & (~at_lo | free_nb)
            cand = inc | dec
            if not cand.any():
                return LpStatus.OPTIMAL, it
            if bland:
                j = int(np.flatnonzero(cand)[0])
            else:
                j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            direction = 1.0 if inc[j] else -1.0

            col = self.T[:, j] * direction
            xb = self.x[self.head]
            lob = self.lo[self.head]
            upb = self.up[self.head]
            ratios = np.full(self.m, np.inf)
            pos = col > PIVOT_TOL
            neg = col < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[pos] = (xb[pos] - lob[pos]) / col[pos]
                ratios[neg] = (upb[neg] - xb[neg]) / (-col[neg])
            ratios = np.maximum(ratios, 0.0)
            own = self.up[j] - self.lo[j]
            t_min = ratios.min() if self.m else np.inf
            if not np.isfinite(t_min) and not np.isfinite(own):
                return LpStatus.UNBOUNDED, it
            it += 1
            if own <= t_min:
                step = own
                self.x[self.head] -= step * col
                self.x[j] = self.up[j] if direction > 0 else self.lo[j]
                p = -1
            else:
                step = t_min
                ties = np.flatnonzero(ratios <= t_min + PIVOT_TOL)
                if bland:
                    p = int(ties[np.argmin(self.head[ties])])
                else:
                    p = int(ties[np.argmax(np.abs(col[ties]))])
                leaving = self.head[p]
                self.x[self.head] -= step * col
                self.x[j] += direction * step
                # leaving variable sits exactly on the bound it reached
                self.x[leaving] = lob[p] if col[p] > 0 else upb[p]
                self._pivot(p, j)
            if step <= FEAS_TOL:
                degenerate += 1
                if degenerate >= DEGENERACY_LIMIT:
                    bland = True
            else:
                degenerate = 0
        return LpStatus.ITERATION_LIMIT, it

    def _pivot(self, p, j):
        T = self.T
        piv = T[p, j]
        T[p] /= piv
        colj = T[:, j].copy()
        colj[p] = 0.0
        T -= np.outer(colj, T[p])
        T[:, j] = 0.0
        T[p, j] = 1.0
        self.basic[self.head[p]] = False
        self.basic[j] = True
        self.head[p] = j

    def refine(self):
        """Recompute basic values from the original data to shed drift."""
        if self.m == 0:
            return
        B = self.original[:, self.head]
        nb = ~self.basic
        rhs = self.b - self.original[:, nb] @ self.x[nb]
        try:
            self.x[self.head] = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            pass

    def duals(self, cost):
        if self.m == 0:
            return np.zeros(0)
        B = self.original[:, self.head]
        try:
            return np.linalg.solve(B.T, cost[self.head])
        except np.linalg.LinAlgError:
            return cost[self.head] @ self.T[:, self.n:self.n + self.m]


def _solve_simplex(lp: LinearProgram, max_iter: int | None) -> LpResult:
    n, m = lp.n_cols, lp.n_rows
    lo = np.asarray(lp.lower, dtype=float)
    up = np.asarray(lp.upper, dtype=float)
    if np.any(lo > up + FEAS_TOL):
        return _empty_result(LpStatus.INFEASIBLE, n, m)
    a = lp.dense_matrix()
    b = lp.rhs()
    tab = _Tableau(a, b, lo, up, lp.senses())
    limit = max_iter if max_iter is not None else 50 * (n + m) + 1000
    total = tab.T.shape[1]
    iters = 0
    if tab.n_art:
        c1 = np.zeros(total)
        c1[n + m:] = -1.0
        status, iters = tab.iterate(c1, limit)
        if status is LpStatus.ITERATION_LIMIT:
            return _empty_result(status, n, m, iters)
        tab.refine()
        if tab.x[n + m:].sum() > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return _empty_result(LpStatus.INFEASIBLE, n, m, iters)
        tab.up[n + m:] = 0.0
        tab.x[n + m:] = np.clip(tab.x[n + m:], 0.0, 0.0)
    c2 = np.zeros(total)
    c2[:n] = lp.objective
    status, it2 = tab.iterate(c2, limit - iters)
    iters += it2
    if status is not LpStatus.OPTIMAL:
        return _empty_result(status, n, m, iters)
    tab.refine()
    x = tab.x[:n].copy()
    y = tab.duals(c2)
    a_full = tab.original
    d = c2 - y @ a_full if m else c2.copy()
    d[tab.head] = 0.0
    return LpResult(LpStatus.OPTIMAL, x, y, d[:n], float(lp.objective @ x + lp.objective_constant),
                    iters, "simplex")


def _empty_result(status, n, m, iters=0, backend="simplex") -> LpResult:
    return LpResult(status, np.full(n, np.nan), np.full(m, np.nan), np.full(n, np.nan),
                    np.nan, iters, backend)


# ---------------------------------------------------------------- HiGHS


def _solve_highs(lp: LinearProgram, max_iter: int | None) -> LpResult:
    n, m = lp.n_cols, lp.n_rows
    if n == 0:
        # linprog rejects empty models; only row feasibility is left to decide
        return dataclasses.replace(_solve_simplex(lp, max_iter), backend="highs")
    a = lp.sparse_matrix()
    b = lp.rhs()
    senses = np.array(lp.senses(), dtype=object)
    le = np.flatnonzero(senses == LE)
    ge = np.flatnonzero(senses == GE)
    eq = np.flatnonzero(senses == EQ)
    ub_rows = np.concatenate([le, ge])
    a_ub = sparse.vstack([a[le], -a[ge]]).tocsr() if len(ub_rows) else None
    b_ub = np.concatenate([b[le], -b[ge]]) if len(ub_rows) else None
    a_eq = a[eq] if len(eq) else None
    b_eq = b[eq] if len(eq) else None
    bounds = np.column_stack([np.where(np.isfinite(lp.lower), lp.lower, -np.inf),
                              np.where(np.isfinite(lp.upper), lp.upper, np.inf)])
    options = {"presolve": True}
    if max_iter is not None:
        options["maxiter"] = max_iter
    res = optimize.linprog(-lp.objective, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                           bounds=bounds, method="highs", options=options)
    if res.status == 2 and lp.objective.any():
        # presolve reports "infeasible or unbounded" as infeasible
        probe = optimize.linprog(np.zeros(n), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                                 bounds=bounds, method="highs")
        if probe.status == 0:
            return _empty_result(LpStatus.UNBOUNDED, n, m, backend="highs")
    if res.status != 0:
        status = {2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}.get(res.status, LpStatus.ITERATION_LIMIT)
        return _empty_result(status, n, m, backend="highs")
    y = np.zeros(m)
    if len(ub_rows):
        marg = res.ineqlin.marginals
        y[le] = -marg[:len(le)]
        y[ge] = marg[len(le):]
    if len(eq):
        y[eq] = -res.eqlin.marginals
    d = -(res.lower.marginals + res.upper.marginals)
    x = np.asarray(res.x, dtype=float)
    return LpResult(LpStatus.OPTIMAL, x, y, d, float(lp.objective @ x + lp.objective_constant),
                    int(getattr(res, "nit", 0)), "highs")


def check_optimality(lp: LinearProgram, res: LpResult, tol: float = 1e-6) -> list[str]:
    """Return a list of KKT violations for an optimal ``res`` (empty if clean)."""
    problems = []
    a = lp.dense_matrix()
    ax = a @ res.x if lp.n_rows else np.zeros(0)
    b = lp.rhs()
    for i, s in enumerate(lp.senses()):
        if s == LE and ax[i] > b[i] + tol:
            problems.append(f"row {i} violated")
        if s == GE and ax[i] < b[i] - tol:
            problems.append(f"row {i} violated")
        if s == EQ and abs(ax[i] - b[i]) > tol:
            problems.append(f"row {i} violated")
        y = res.row_duals[i]
        if s == LE and y < -tol or s == GE and y > tol:
            problems.append(f"row {i} dual sign")
        if abs(y) > tol and abs(ax[i] - b[i]) > tol:
            problems.append(f"row {i} complementary slackness")
    if np.any(res.x < lp.lower - tol) or np.any(res.x > lp.upper + tol):
        problems.append("bounds violated")
    d = lp.objective - res.row_duals @ a if lp.n_rows else lp.objective.copy()
    for j in range(lp.n_cols):
        at_lo = abs(res.x[j] - lp.lower[j]) <= tol
        at_up = abs(res.x[j] - lp.upper[j]) <= tol
        if d[j] > tol and not at_up:
            problems.append(f"col {j} reduced cost {d[j]:.3g} not at upper")
        if d[j] < -tol and not at_lo:
            problems.append(f"col {j} reduced cost {d[j]:.3g} not at lower")
    bound_term = sum(d[j] * (lp.upper[j] if d[j] > 0 else lp.lower[j])
                     for j in range(lp.n_cols) if abs(d[j]) > tol)
    dual_obj = b @ res.row_duals + bound_term + lp.objective_constant
    if abs(dual_obj - res.objective) > tol * (1 + abs(res.objective)):
        problems.append(f"duality gap {dual_obj - res.objective:.3g}")
    return problems


def vertex_enumeration(lp: LinearProgram) -> float:
    """Best objective over all basic feasible points (tiny LPs only, for testing).

    Every bound is turned into an explicit row; each choice of ``n`` linearly
    independent active constraints is solved for its point.
    """
    import itertools

    n = lp.n_cols
    a = lp.dense_matrix()
    b = lp.rhs()
    cons_a, cons_b, cons_s = [], [], []
    for i, s in enumerate(lp.senses()):
        cons_a.append(a[i]); cons_b.append(b[i]); cons_s.append(s)
    for j in range(n):
        e = np.zeros(n); e[j] = 1.0
        if np.isfinite(lp.lower[j]):
            cons_a.append(e); cons_b.append(lp.lower[j]); cons_s.append(GE)
        if np.isfinite(lp.upper[j]):
            cons_a.append(e); cons_b.append(lp.upper[j]); cons_s.append(LE)
    A = np.array(cons_a).reshape(-1, n)
    B = np.array(cons_b)
    best = -np.inf
    for combo in itertools.combinations(range(len(cons_s)), n):
        sub = A[list(combo)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, B[list(combo)])
        ax = A @ x
        ok = True
        for i, s in enumerate(cons_s):
            if s == LE and ax[i] > B[i] + 1e-8 or s == GE and ax[i] < B[i] - 1e-8 \
                    or s == EQ and abs(ax[i] - B[i]) > 1e-8:
                ok = False
                break
        if ok:
            best = max(best, float(lp.objective @ x))
    return best + lp.objective_constant
