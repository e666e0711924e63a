"""Second-stage evaluation: exact greedy recourse, bounds, LP relaxation and cuts."""
from __future__ import annotations

import dataclasses
from collections import deque

import numpy as np

from . import lp as lpk
from .domain import Cut, FirstStageSolution, RecourseSolution, RequestSet

BRUTE_MAX_REQUESTS = 8
BRUTE_MAX_VEHICLES = 4


def _parked(placement) -> dict:
    """Zone -> deque of vehicle ids parked there, lowest id first."""
    free: dict = {}
    for v, zone in enumerate(placement):
        free.setdefault(zone, deque()).append(v)
    return free


def greedy_recourse(requests: RequestSet, first_stage: FirstStageSolution) -> RecourseSolution:
    """Serve requests in customer order from vehicles parked at their origin.

    A request is served when the fee posted on its OD pair does not exceed
    its highest acceptable level and a vehicle is still free at its origin;
    the lowest-id free vehicle is taken. Returns the optimal second-stage
    assignment and profit.
    """
    origin, dest, lmax, revenue = requests._lists
    fees = first_stage.fees.tolist()
    free = _parked(first_stage.placement.tolist())
    assignment = []
    q = 0.0
    for r in range(len(origin)):
        o = origin[r]
        level = fees[o][dest[r]]
        if level <= lmax[r] and free.get(o):
            v = free[o].popleft()
            assignment.append((v, r, level))
            q += revenue[r][level]
    return RecourseSolution(tuple(assignment), q)


def greedy_value(requests: RequestSet, placement: list, fees: list) -> float:
    """Value-only version of :func:`greedy_recourse` on plain lists."""
    origin, dest, lmax, revenue = requests._lists
    count: dict = {}
    for zone in placement:
        count[zone] = count.get(zone, 0) + 1
    q = 0.0
    for r in range(len(origin)):
        o = origin[r]
        level = fees[o][dest[r]]
        if level <= lmax[r] and count.get(o, 0) > 0:
            count[o] -= 1
            q += revenue[r][level]
    return q


def upper_bound(requests: RequestSet) -> float:
    """Sum of positive top-level revenues; bounds the recourse of every first stage."""
    return float(np.maximum(requests.top_revenue(), 0.0).sum())


def lower_bound(requests: RequestSet) -> float:
    """Sum of negative lowest-level revenues; no first stage earns less."""
    if not len(requests):
        return 0.0
    return float(np.minimum(requests.revenue[:, 0], 0.0).sum())


# ---------------------------------------------------------------- LP relaxation


@dataclasses.dataclass
class SubproblemLP:
    """LP relaxation of the compact second-stage model with row bookkeeping.

    ``columns`` holds one ``(v, r, l)`` triple per column. ``rows_a[r]``,
    ``rows_b[v]`` and ``rows_c[r, v]`` are the rows of the one-service-per-
    request, one-request-per-vehicle and precedence constraints. The
    forced-service rows are described by the parallel arrays ``d_request``,
    ``d_vehicle``, ``d_level`` and ``rows_d``; the level-linking rows by
    ``e_request``, ``e_level`` and ``rows_e``.
    """

    lp: lpk.LinearProgram
    columns: np.ndarray
    rows_a: np.ndarray
    rows_b: np.ndarray
    rows_c: np.ndarray
    d_request: np.ndarray
    d_vehicle: np.ndarray
    d_level: np.ndarray
    rows_d: np.ndarray
    e_request: np.ndarray
    e_level: np.ndarray
    rows_e: np.ndarray


def _csr(blocks) -> tuple:
    """indptr/indices from a list of 2-D arrays whose rows are constraint rows."""
    lengths = [np.full(b.shape[0], b.shape[1]) for b in blocks]
    flat = [b.ravel() for b in blocks]
    lengths = np.concatenate(lengths) if lengths else np.zeros(0, dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    indices = np.concatenate(flat).astype(np.int64) if flat else np.zeros(0, dtype=np.int64)
    return indptr, indices


def build_subproblem_lp(requests: RequestSet, z, lam) -> SubproblemLP:
    """Build the LP relaxation at a (possibly fractional) first-stage point.

    ``z`` is (V, n) and ``lam`` is (n, n, L). Columns ``y[v, r, l]`` are laid
    out request by request, then vehicle, then level. They have no explicit
    upper bound: the one-service-per-request rows already imply ``y <= 1``,
    and leaving bounds out keeps every dual on a row.
    """
    z = np.asarray(z, dtype=float)
    lam = np.asarray(lam, dtype=float)
    n_veh = z.shape[0]
    n_req = len(requests)
    origin = requests.origin
    dest = requests.destination
    nl = np.asarray(requests.lmax, dtype=np.int64) + 1
    block = n_veh * nl
    base = np.concatenate([[0], np.cumsum(block)])[:-1].astype(np.int64)
    n_cols = int(block.sum())
    col_r = np.repeat(np.arange(n_req), block)
    within = np.arange(n_cols) - base[col_r]
    col_v = within // nl[col_r] if n_cols else within
    col_l = within % nl[col_r] if n_cols else within
    lp = lpk.LinearProgram()
    lp.add_columns(requests.revenue[col_r, col_l] if n_cols else np.zeros(0), 0.0, np.inf)
    vs = np.arange(n_veh)

    # c1: one service per request (its columns are contiguous)
    indptr = np.concatenate([[0], np.cumsum(block)]).astype(np.int64)
    rows_a = lp.add_rows(indptr, np.arange(n_cols), lpk.LE, 1.0)
    # c2: one request per vehicle
    order = np.argsort(col_v, kind="stable")
    counts = np.bincount(col_v, minlength=n_veh) if n_cols else np.zeros(n_veh, dtype=np.int64)
    rows_b = lp.add_rows(np.concatenate([[0], np.cumsum(counts)]), order, lpk.LE, 1.0)

    def vehicle_blocks(reqs):
        """(V, m) column indices of vehicle v serving any request in ``reqs``."""
        if not len(reqs):
            return np.zeros((n_veh, 0), dtype=np.int64)
        offs = np.concatenate([base[r] + np.arange(nl[r]) for r in reqs])
        steps = np.concatenate([np.full(nl[r], nl[r]) for r in reqs])
        return offs[None, :] + vs[:, None] * steps[None, :]

    preds = requests.predecessors
    c4_blocks, c4_rhs = [], []
    c5_blocks, c5_rhs, d_req, d_veh, d_lev = [], [], [], [], []
    for r1 in range(n_req):
        i, j = int(origin[r1]), int(dest[r1])
        earlier = vehicle_blocks(preds[r1])
        c4_blocks.append(np.concatenate([vehicle_blocks([r1]), earlier], axis=1))
        c4_rhs.append(z[:, i])
        levels = np.arange(nl[r1])
        all_v = base[r1] + vs[None, :] * nl[r1] + levels[:, None]                  # (nl, V)
        rows = np.concatenate([np.broadcast_to(earlier[:, None, :], (n_veh, nl[r1], earlier.shape[1])),
                               np.broadcast_to(all_v[None, :, :], (n_veh, nl[r1], n_veh))], axis=2)
        c5_blocks.append(rows.reshape(n_veh * nl[r1], rows.shape[2]))
        c5_rhs.append((lam[i, j, levels][None, :] + z[:, i][:, None] - 1.0).ravel())
        d_req.append(np.full(n_veh * nl[r1], r1))
        d_veh.append(np.repeat(vs, nl[r1]))
        d_lev.append(np.tile(levels, n_veh))
    # rows of different width cannot share one 2-D block, so emit per request
    rows_c = np.zeros((n_req, n_veh), dtype=np.int64)
    for r1 in range(n_req):
        indptr, indices = _csr([c4_blocks[r1]])
        rows_c[r1] = lp.add_rows(indptr, indices, lpk.LE, c4_rhs[r1])
    indptr, indices = _csr(c5_blocks)
    rows_d = lp.add_rows(indptr, indices, lpk.GE, np.concatenate(c5_rhs) if c5_rhs else np.zeros(0))

    # c7: level linking
    e_req = np.repeat(np.arange(n_req), nl)
    e_lev = (np.arange(len(e_req)) - np.repeat(np.concatenate([[0], np.cumsum(nl)])[:-1], nl)).astype(np.int64)
    c7 = base[e_req][:, None] + vs[None, :] * nl[e_req][:, None] + e_lev[:, None]
    rows_e = lp.add_rows(np.arange(len(e_req) + 1) * n_veh, c7.ravel(), lpk.LE,
                         lam[origin[e_req], dest[e_req], e_lev] if len(e_req) else np.zeros(0))

    def cat(parts):
        return np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, dtype=np.int64)

    columns = np.column_stack([col_v, col_r, col_l]).astype(np.int64)
    return SubproblemLP(lp, columns, rows_a, rows_b, rows_c, cat(d_req), cat(d_veh), cat(d_lev), rows_d,
                        e_req, e_lev, rows_e)


def relaxation_cut(duals, sub: SubproblemLP, requests: RequestSet, n_zones: int,
                   scenario: int | None = None) -> Cut:
    """Benders cut from subproblem duals, valid for every first-stage point.

    The dual objective ``b(z, lam) @ duals`` is affine in (z, lam); every
    dual-feasible vector therefore bounds the recourse from above everywhere.
    """
    duals = np.asarray(duals, dtype=float)
    if duals.shape != (sub.lp.n_rows,):
        raise ValueError(f"expected {sub.lp.n_rows} duals, got {duals.shape}")
    n_veh = len(sub.rows_b)
    z_coef = np.zeros((n_veh, n_zones))
    lam_coef = np.zeros((n_zones, n_zones, requests.n_levels))
    origin, dest = requests.origin, requests.destination
    pi_c = duals[sub.rows_c]                                   # (R, V)
    pi_d = duals[sub.rows_d]
    pi_e = duals[sub.rows_e]
    np.add.at(z_coef.T, origin, pi_c)
    np.add.at(z_coef, (sub.d_vehicle, origin[sub.d_request]), pi_d)
    np.add.at(lam_coef, (origin[sub.d_request], dest[sub.d_request], sub.d_level), pi_d)
    np.add.at(lam_coef, (origin[sub.e_request], dest[sub.e_request], sub.e_level), pi_e)
    constant = float(duals[sub.rows_a].sum() + duals[sub.rows_b].sum() - pi_d.sum())
    return Cut("relaxation", scenario, z_coef, lam_coef, constant)


def solve_subproblem_lp(requests: RequestSet, z, lam, method: str = "auto"):
    sub = build_subproblem_lp(requests, z, lam)
    return sub, lpk.solve(sub.lp, method=method)


# ---------------------------------------------------------------- oracle


def feasible_recourse_assignments(requests: RequestSet, first_stage: FirstStageSolution):
    """Yield every binary second-stage assignment satisfying the compact model.

    Requests are decided in customer order; a constraint is checked as soon
    as all of its variables are fixed. Each yielded item is a tuple of
    ``(vehicle, request, level)`` triples.
    """
    n_req = len(requests)
    n_veh = len(first_stage.placement)
    placement = first_stage.placement.tolist()
    fees = first_stage.fees
    preds = requests.predecessors
    choice: list = [None] * n_req
    used = [False] * n_veh

    def lam(r, level):
        return 1 if fees[requests.origin[r], requests.destination[r]] == level else 0

    def zv(v, r):
        return 1 if placement[v] == requests.origin[r] else 0

    def served_by(v, r):
        c = choice[r]
        return 1 if c is not None and c[0] == v else 0

    def y(v, r, level):
        c = choice[r]
        return 1 if c is not None and c == (v, level) else 0

    def rows_ok(r1):
        for v in range(n_veh):
            earlier = sum(served_by(v, r2) for r2 in preds[r1])
            if served_by(v, r1) + earlier > zv(v, r1):
                return False
            for l1 in requests.levels(r1):
                others = sum(y(v1, r1, l1) for v1 in range(n_veh) if v1 != v)
                if y(v, r1, l1) + earlier + others < lam(r1, l1) + zv(v, r1) - 1:
                    return False
        return True

    def rec(r):
        if r == n_req:
            yield tuple((c[0], rr, c[1]) for rr, c in enumerate(choice) if c is not None)
            return
        options = [None] + [(v, level) for v in range(n_veh) if not used[v]
                            for level in requests.levels(r) if lam(r, level)]
        for opt in options:
            choice[r] = opt
            if opt is not None:
                used[opt[0]] = True
            if rows_ok(r):
                yield from rec(r + 1)
            if opt is not None:
                used[opt[0]] = False
            choice[r] = None

    yield from rec(0)


def brute_force_recourse(requests: RequestSet, first_stage: FirstStageSolution) -> RecourseSolution:
    """Best feasible assignment by exhaustive enumeration (tiny cases only)."""
    if len(requests) > BRUTE_MAX_REQUESTS or len(first_stage.placement) > BRUTE_MAX_VEHICLES:
        raise ValueError(f"brute-force recourse limited to {BRUTE_MAX_REQUESTS} requests "
                         f"and {BRUTE_MAX_VEHICLES} vehicles")
    best = None
    best_val = -np.inf
    for assignment in feasible_recourse_assignments(requests, first_stage):
        val = sum(float(requests.revenue[r, level]) for _, r, level in assignment)
        if val > best_val + 1e-12:
            best, best_val = assignment, val
    if best is None:
        raise RuntimeError("compact second-stage model has no feasible assignment")
    return RecourseSolution(best, best_val)
