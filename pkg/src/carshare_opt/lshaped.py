"""Multi-cut integer L-shaped branch-and-cut for the pricing and relocation problem.

The master problem keeps the first-stage binaries (vehicle placement ``z`` and
fee levels ``lam``) plus one recourse estimate ``phi_s`` per scenario.
Whenever a node LP is integral, the exact recourse of every scenario is
computed with the greedy algorithm, and violated estimates are cut off with
optimality cuts (tight only at the current point) and, optionally,
LP-duality relaxation cuts (valid and informative everywhere).
"""
from __future__ import annotations

import dataclasses
import heapq
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import lp as lpk
from .choice import RequestPreprocessor
from .domain import Cut, FirstStageSolution, Instance, SolveReport
from .recourse import (build_subproblem_lp, greedy_recourse, greedy_value, lower_bound,
                       relaxation_cut, upper_bound)

# absolute slack when comparing bounds with the incumbent; LP objectives are
# only accurate to the solver tolerances
BOUND_TOL = 1e-7
ROOT_CUT_ROUNDS = 5
POLISH_SHARE = 0.25   # fraction of the time limit the incumbent polishing may use


# ---------------------------------------------------------------- master problem


@dataclasses.dataclass
class Master:
    """Master LP with its column layout.

    Columns: ``z[v, i]`` at ``v * n + i``, ``lam[i, j, l]`` at
    ``n_z + (i * n + j) * L + l`` and ``phi_s`` at ``n_z + n_lam + s``.
    """

    lp: lpk.LinearProgram
    n_vehicles: int
    n_zones: int
    n_levels: int
    n_scenarios: int
    upper: np.ndarray     # U_s
    lower: np.ndarray     # L_s

    @property
    def n_z(self) -> int:
        return self.n_vehicles * self.n_zones

    @property
    def n_lam(self) -> int:
        return self.n_zones * self.n_zones * self.n_levels

    @property
    def n_binary(self) -> int:
        return self.n_z + self.n_lam

    def phi(self, s: int) -> int:
        return self.n_binary + s

    def lam_index(self, i: int, j: int, level: int) -> int:
        return self.n_z + (i * self.n_zones + j) * self.n_levels + level

    def split(self, x):
        x = np.asarray(x, dtype=float)
        z = x[:self.n_z].reshape(self.n_vehicles, self.n_zones)
        lam = x[self.n_z:self.n_binary].reshape(self.n_zones, self.n_zones, self.n_levels)
        return z, lam, x[self.n_binary:]

    def add_cut(self, cut: Cut) -> int:
        coef = -np.concatenate([cut.z_coef.ravel(), cut.lam_coef.ravel()])
        idx = np.flatnonzero(coef)
        val = coef[idx]
        if cut.phi_coef:
            idx = np.append(idx, self.phi(cut.scenario))
            val = np.append(val, cut.phi_coef)
        return self.lp.add_constraint(idx, val, lpk.LE, cut.constant, f"{cut.kind}_{cut.scenario}")


def build_master(instance: Instance, scenarios, requests=None, use_vi: bool = True) -> Master:
    """Master LP relaxation before any cut.

    ``phi_s`` is boxed by the recourse bounds ``[L_s, U_s]``, which no first
    stage can leave, so the root LP is bounded before cuts exist.
    """
    if not len(scenarios):
        raise ValueError("at least one scenario is required")
    if requests is None:
        requests = RequestPreprocessor().fit_transform(instance, scenarios)
    n, n_veh, n_lev = instance.n_zones, instance.n_vehicles, instance.n_levels
    weights = np.array([s.weight for s in scenarios])
    upper = np.array([upper_bound(r) for r in requests])
    lower = np.array([lower_bound(r) for r in requests])
    lp = lpk.LinearProgram()
    lp.add_columns(-instance.vehicle_relocation_cost.ravel(), 0.0, 1.0, integer=True,
                   names=[f"z_{v}_{i}" for v in range(n_veh) for i in range(n)])
    lp.add_columns(np.zeros(n * n * n_lev), 0.0, 1.0, integer=True,
                   names=[f"lam_{i}_{j}_{l}" for i in range(n) for j in range(n) for l in range(n_lev)])
    lp.add_columns(weights, lower, upper, names=[f"phi_{s}" for s in range(len(scenarios))])
    master = Master(lp, n_veh, n, n_lev, len(scenarios), upper, lower)
    for v in range(n_veh):
        idx = np.arange(v * n, (v + 1) * n)
        lp.add_constraint(idx, np.ones(n), lpk.EQ, 1.0, f"place_{v}")
    for i in range(n):
        for j in range(n):
            idx = master.lam_index(i, j, 0) + np.arange(n_lev)
            lp.add_constraint(idx, np.ones(n_lev), lpk.EQ, 1.0, f"fee_{i}_{j}")
    if use_vi:
        for i in range(n):
            zi = np.arange(n_veh) * n + i
            for j in range(n):
                idx = np.append(zi, master.lam_index(i, j, 0))
                lp.add_constraint(idx, np.ones(len(idx)), lpk.GE, 1.0, f"vi_{i}_{j}")
    return master


def optimality_cut(first_stage: FirstStageSolution, q: float, u: float, n_zones: int, n_levels: int,
                   scenario: int | None = None) -> Cut:
    """Cut that is tight (``phi_s <= q``) at ``first_stage`` and at least ``u`` elsewhere."""
    if q > u + 1e-9 * (1 + abs(u)):
        raise ValueError(f"recourse value {q} exceeds its upper bound {u}")
    slope = q - u
    z = first_stage.z(n_zones)
    lam = first_stage.lam(n_levels)
    n_plus = len(first_stage.placement) + first_stage.fees.size
    return Cut("optimality", scenario, slope * (2 * z - 1), slope * (2 * lam - 1),
               u - slope * (n_plus - 1), generator=first_stage)


def evaluate_first_stage(instance: Instance, scenarios, first_stage: FirstStageSolution, requests=None) -> float:
    """Exact objective: minus relocation cost plus expected greedy recourse."""
    if requests is None:
        requests = RequestPreprocessor().fit_transform(instance, scenarios)
    placement = first_stage.placement.tolist()
    fees = first_stage.fees.tolist()
    expected = sum(s.weight * greedy_value(r, placement, fees) for s, r in zip(scenarios, requests))
    return expected - instance.relocation_cost(first_stage.placement)


def gap_percent(best_bound: float, best_integer: float) -> float:
    if best_integer == 0 or not math.isfinite(best_integer) or not math.isfinite(best_bound):
        return math.inf
    return 100.0 * abs(best_bound - best_integer) / abs(best_integer)


def default_first_stage(instance: Instance, fee_level: int | None = None, canonical: bool = False):
    """Vehicles left in place, every OD at ``fee_level`` (the zero fee by default).

    With ``canonical``, ODs leaving zones without vehicles get the lowest level,
    the representative kept by the symmetry-breaking rows.
    """
    if fee_level is None:
        fee_level = instance.fee_ladder.nearest_index(0.0)
    n = instance.n_zones
    fees = np.full((n, n), fee_level, dtype=np.int64)
    placement = np.asarray(instance.vehicles.initial_zone)
    if canonical:
        fees = canonical_fees(fees, placement, n)
    return FirstStageSolution(placement, fees)


def canonical_fees(fees, placement, n_zones):
    fees = np.array(fees, dtype=np.int64)
    empty = np.setdiff1d(np.arange(n_zones), placement)
    fees[empty, :] = 0
    return fees


# ---------------------------------------------------------------- branch and cut


@dataclasses.dataclass(order=True)
class _Node:
    key: tuple
    lower: np.ndarray = dataclasses.field(compare=False)
    upper: np.ndarray = dataclasses.field(compare=False)
    bound: float = dataclasses.field(compare=False)
    depth: int = dataclasses.field(compare=False, default=0)


class _BranchAndCut:
    def __init__(self, instance, scenarios, *, time_limit, target_gap, integrality_tol, cut_violation_tol,
                 use_vi, use_relaxation_cuts, root_relaxation_cuts, relax_cuts_all_scenarios, threads, seed,
                 fixed_fee_level, fix_placement, initial_solutions, lp_method, rounding_heuristic,
                 local_search_heuristic=True):
        self.instance = instance
        self.scenarios = list(scenarios)
        self.time_limit = float(time_limit)
        self.target_gap = float(target_gap)
        self.int_tol = float(integrality_tol)
        self.cut_tol = float(cut_violation_tol)
        self.use_relax = bool(use_relaxation_cuts)
        self.root_relax = bool(root_relaxation_cuts)
        self.relax_all = bool(relax_cuts_all_scenarios)
        self.threads = max(1, int(threads or 1))
        self.seed = seed
        self.lp_method = lp_method
        self.rounding = bool(rounding_heuristic)
        self.polish = bool(local_search_heuristic)
        self.rounded = set()
        self.fixed_fee_level = fixed_fee_level
        if fix_placement is True:
            fix_placement = instance.vehicles.initial_zone
        self.fix_placement = None if fix_placement is None or fix_placement is False \
            else np.asarray(fix_placement, dtype=np.int64)
        # the symmetry rows would force a vehicle into every zone once fees are pinned
        self.use_vi = bool(use_vi) and fixed_fee_level is None
        self.requests = RequestPreprocessor().fit_transform(instance, self.scenarios)
        self.weights = np.array([s.weight for s in self.scenarios])
        self.master = build_master(instance, self.scenarios, self.requests, self.use_vi)
        self.initial_solutions = list(initial_solutions or [])
        self.cut_counts = {"optimality": 0, "relaxation": 0}
        self.incumbent = None
        self.incumbent_value = -math.inf
        self.trace = []
        self.nodes = 0
        self.settled_bound = -math.inf   # largest bound among nodes closed without full proof

    # -- helpers

    def elapsed(self):
        return time.perf_counter() - self.start

    def root_bounds(self):
        lp = self.master.lp
        lower, upper = lp.lower.copy(), lp.upper.copy()
        m = self.master
        if self.fixed_fee_level is not None:
            lam_lo = np.zeros((m.n_zones, m.n_zones, m.n_levels))
            lam_lo[:, :, self.fixed_fee_level] = 1.0
            lower[m.n_z:m.n_binary] = lam_lo.ravel()
            upper[m.n_z:m.n_binary] = lam_lo.ravel()
        if self.fix_placement is not None:
            z = np.zeros((m.n_vehicles, m.n_zones))
            z[np.arange(m.n_vehicles), self.fix_placement] = 1.0
            lower[:m.n_z] = z.ravel()
            upper[:m.n_z] = z.ravel()
        return lower, upper

    def admissible(self, fs: FirstStageSolution) -> bool:
        if self.fixed_fee_level is not None and np.any(fs.fees != self.fixed_fee_level):
            return False
        if self.fix_placement is not None and np.any(fs.placement != self.fix_placement):
            return False
        return True

    def recourse_values(self, fs: FirstStageSolution) -> np.ndarray:
        placement, fees = fs.placement.tolist(), fs.fees.tolist()
        return np.array([greedy_value(r, placement, fees) for r in self.requests])

    def true_value(self, fs, q=None) -> float:
        if q is None:
            q = self.recourse_values(fs)
        return float(self.weights @ q) - self.instance.relocation_cost(fs.placement)

    def offer(self, fs: FirstStageSolution, value: float):
        if value > self.incumbent_value + 1e-12:
            self.incumbent, self.incumbent_value = fs, value
            self.trace.append((self.elapsed(), value))

    def tolerance(self) -> float:
        if not math.isfinite(self.incumbent_value):
            return BOUND_TOL
        return max(BOUND_TOL, self.target_gap * abs(self.incumbent_value))

    def gap(self, bound: float) -> float:
        return gap_percent(max(bound, self.incumbent_value), self.incumbent_value)

    def relaxation_cuts(self, z, lam, scenarios):
        def one(s):
            sub = build_subproblem_lp(self.requests[s], z, lam)
            res = lpk.solve(sub.lp, method=self.lp_method)
            if not res.optimal:
                return None
            return relaxation_cut(res.row_duals, sub, self.requests[s], self.master.n_zones, scenario=s)
        if self.threads > 1 and len(scenarios) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(one, scenarios))
        # past the time limit the optimality cuts alone keep the search correct
        return [one(s) for s in scenarios if self.elapsed() < self.time_limit]

    def add_cut(self, cut):
        self.master.add_cut(cut)
        self.cut_counts[cut.kind] = self.cut_counts.get(cut.kind, 0) + 1

    def solve_lp(self, lower, upper):
        return lpk.solve(self.master.lp.with_bounds(lower, upper), method=self.lp_method)

    def fractional(self, x):
        xb = x[:self.master.n_binary]
        dist = np.abs(xb - np.round(xb))
        frac = np.flatnonzero(dist > self.int_tol)
        if not len(frac):
            return None
        return int(frac[np.argmin(np.abs(xb[frac] - 0.5))])

    def to_first_stage(self, x) -> FirstStageSolution:
        z, lam, _ = self.master.split(np.round(x))
        return FirstStageSolution.from_binary(z, lam, tol=0.5)

    # -- main loop

    def seed_point(self, fs: FirstStageSolution):
        m = self.master
        q = self.recourse_values(fs)
        self.offer(fs, self.true_value(fs, q))
        for s in range(m.n_scenarios):
            if q[s] < m.upper[s] - self.cut_tol:
                self.add_cut(optimality_cut(fs, q[s], m.upper[s], m.n_zones, m.n_levels, s))

    def polish_incumbent(self):
        """Alternate fee and relocation descents from the incumbent, within the restrictions."""
        from .ils import FEE, POSITION, EncodedSolution, local_search
        operators = [op for op, frozen in ((FEE, self.fixed_fee_level is not None),
                                           (POSITION, self.fix_placement is not None)) if not frozen]
        if not operators:
            return
        deadline = time.perf_counter() + POLISH_SHARE * self.time_limit
        current, value = EncodedSolution.from_first_stage(self.incumbent), self.incumbent_value
        improved = True
        while improved:
            improved = False
            for op in operators:
                cand, cand_value, timed_out = local_search(self.instance, self.scenarios, current, op,
                                                           requests=self.requests, _deadline=deadline,
                                                           _start_value=value)
                if cand_value > value:
                    current, value, improved = cand, cand_value, True
                if timed_out:
                    improved = False
                    break
        fs = current.to_first_stage()
        if self.use_vi:
            fs = FirstStageSolution(fs.placement, canonical_fees(fs.fees, fs.placement, self.master.n_zones))
        if self.admissible(fs):
            self.seed_point(fs)

    def run(self):
        self.start = time.perf_counter()
        m = self.master
        seeds = [default_first_stage(self.instance, self.fixed_fee_level, canonical=self.use_vi)]
        if self.fix_placement is not None:
            seeds[0] = FirstStageSolution(self.fix_placement, seeds[0].fees)
        for fs in seeds + self.initial_solutions:
            if not isinstance(fs, FirstStageSolution):
                fs = FirstStageSolution.from_dict(fs)
            if self.use_vi:
                fs = FirstStageSolution(fs.placement, canonical_fees(fs.fees, fs.placement, m.n_zones))
            if self.admissible(fs):
                self.seed_point(fs)
        if self.polish and self.incumbent is not None:
            self.polish_incumbent()

        lower, upper = self.root_bounds()
        counter = itertools.count()
        heap = []
        root = _Node((0.0, next(counter)), lower, upper, math.inf)
        heapq.heappush(heap, root)
        gap_root = None
        gap_50 = None
        status = "optimal"
        while heap:
            best_open = heap[0].bound
            if gap_50 is None and gap_root is not None and self.elapsed() >= self.time_limit / 2:
                gap_50 = self.gap(max(best_open, self.settled_bound))
            if best_open <= self.incumbent_value + self.tolerance():
                self.settled_bound = max(self.settled_bound, best_open)
                heap.clear()
                break
            if self.elapsed() >= self.time_limit:
                status = "timeLimit"
                break
            node = heapq.heappop(heap)
            self.nodes += 1
            children = self.process(node, is_root=node is root)
            for child in children:
                child.key = (-child.bound, next(counter))
                heapq.heappush(heap, child)
            if node is root:
                open_bound = max([c.bound for c in children], default=-math.inf)
                gap_root = self.gap(max(open_bound, self.settled_bound))
        open_bound = max([n.bound for n in heap], default=-math.inf)
        best_bound = max(open_bound, self.settled_bound, self.incumbent_value)
        if gap_root is None:
            gap_root = self.gap(best_bound)
        report = SolveReport(self.incumbent_value, best_bound, self.gap(best_bound), gap_root, gap_50,
                             self.elapsed(), self.nodes, dict(self.cut_counts), self.seed, status,
                             "lshaped", list(self.trace))
        return report, self.incumbent

    def process(self, node: _Node, is_root: bool):
        m = self.master
        root_rounds = ROOT_CUT_ROUNDS if (is_root and self.use_relax and self.root_relax) else 0
        while True:
            res = self.solve_lp(node.lower, node.upper)
            if res.status == lpk.LpStatus.INFEASIBLE:
                return []
            if not res.optimal:
                # keep the subtree open under its inherited bound rather than lose it
                self.settled_bound = max(self.settled_bound, node.bound)
                return []
            bound = min(res.objective, node.bound)
            if bound <= self.incumbent_value + self.tolerance():
                self.settled_bound = max(self.settled_bound, bound)
                return []
            x = res.x
            j = self.fractional(x)
            if j is not None:
                if root_rounds > 0:
                    root_rounds -= 1
                    z, lam, phi = m.split(x)
                    added = 0
                    for cut in self.relaxation_cuts(z, lam, range(m.n_scenarios)):
                        if cut is not None and phi[cut.scenario] > cut.rhs(z, lam) + self.cut_tol:
                            self.add_cut(cut)
                            added += 1
                    if added:
                        continue
                if self.rounding:
                    self.round_and_offer(x)
                return self.branch(node, j, bound)
            fs = self.to_first_stage(x)
            z, lam, _ = m.split(np.round(x))
            phi = x[m.n_binary:]
            q = self.recourse_values(fs)
            violated = [s for s in range(m.n_scenarios) if phi[s] > q[s] + self.cut_tol]
            if not violated:
                self.offer(fs, self.true_value(fs, q))
                self.settled_bound = max(self.settled_bound, bound)
                return []
            for s in violated:
                self.add_cut(optimality_cut(fs, q[s], m.upper[s], m.n_zones, m.n_levels, s))
            if self.use_relax:
                targets = range(m.n_scenarios) if self.relax_all else violated
                for cut in self.relaxation_cuts(z, lam, list(targets)):
                    if cut is not None:
                        self.add_cut(cut)
            # the point itself is feasible, so it may still improve the incumbent
            self.offer(fs, self.true_value(fs, q))

    def round_and_offer(self, x):
        """Primal heuristic: largest ``z`` per vehicle and ``lam`` per OD pair."""
        z, lam, _ = self.master.split(x)
        fees = np.argmax(lam, axis=2)
        placement = np.argmax(z, axis=1)
        if self.use_vi:
            fees = canonical_fees(fees, placement, self.master.n_zones)
        fs = FirstStageSolution(placement, fees)
        key = fs.key()
        if key in self.rounded or not self.admissible(fs):
            return
        self.rounded.add(key)
        self.offer(fs, self.true_value(fs))

    def branch(self, node: _Node, j: int, bound: float):
        out = []
        for value in (0.0, 1.0):
            lo, up = node.lower.copy(), node.upper.copy()
            lo[j] = up[j] = value
            out.append(_Node((), lo, up, bound, node.depth + 1))
        return out


def solve(instance: Instance, scenarios, *, time_limit: float = 1800.0, target_gap: float = 1e-4,
          integrality_tol: float = 1e-6, cut_violation_tol: float = 1e-6, use_vi: bool = True,
          use_relaxation_cuts: bool = True, root_relaxation_cuts: bool = False,
          relax_cuts_all_scenarios: bool = False, threads: int = 1, seed=None, fixed_fee_level=None,
          fix_placement=None, initial_solutions=None, lp_method: str = "auto", rounding_heuristic: bool = True,
          local_search_heuristic: bool = True):
    """Run the branch-and-cut; returns ``(SolveReport, FirstStageSolution)``.

    Stops when the relative gap drops to ``target_gap`` or after
    ``time_limit`` seconds, returning the best solution found so far.
    """
    bc = _BranchAndCut(instance, scenarios, time_limit=time_limit, target_gap=target_gap,
                       integrality_tol=integrality_tol, cut_violation_tol=cut_violation_tol, use_vi=use_vi,
                       use_relaxation_cuts=use_relaxation_cuts, root_relaxation_cuts=root_relaxation_cuts,
                       relax_cuts_all_scenarios=relax_cuts_all_scenarios, threads=threads, seed=seed,
                       fixed_fee_level=fixed_fee_level, fix_placement=fix_placement,
                       initial_solutions=initial_solutions, lp_method=lp_method,
                       rounding_heuristic=rounding_heuristic, local_search_heuristic=local_search_heuristic)
    return bc.run()


class LShapedSolver(BaseEstimator):
    """Estimator wrapper around :func:`solve`.

    ``fit(instance, scenarios)`` sets ``solution_``, ``report_`` and
    ``objective_``; ``score`` evaluates the fitted first stage on (possibly
    out-of-sample) scenarios.
    """

    def __init__(self, time_limit=1800.0, target_gap=1e-4, integrality_tol=1e-6, cut_violation_tol=1e-6,
                 use_vi=True, use_relaxation_cuts=True, root_relaxation_cuts=False,
                 relax_cuts_all_scenarios=False, threads=1, seed=None, fixed_fee_level=None,
                 fix_placement=None, initial_solutions=None, lp_method="auto", rounding_heuristic=True,
                 local_search_heuristic=True):
        self.time_limit = time_limit
        self.target_gap = target_gap
        self.integrality_tol = integrality_tol
        self.cut_violation_tol = cut_violation_tol
        self.use_vi = use_vi
        self.use_relaxation_cuts = use_relaxation_cuts
        self.root_relaxation_cuts = root_relaxation_cuts
        self.relax_cuts_all_scenarios = relax_cuts_all_scenarios
        self.threads = threads
        self.seed = seed
        self.fixed_fee_level = fixed_fee_level
        self.fix_placement = fix_placement
        self.initial_solutions = initial_solutions
        self.lp_method = lp_method
        self.rounding_heuristic = rounding_heuristic
        self.local_search_heuristic = local_search_heuristic

    def _check_params(self):
        for name in ("time_limit", "integrality_tol", "cut_violation_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.target_gap < 0:
            raise ValueError("target_gap must be nonnegative")

    def fit(self, instance: Instance, scenarios):
        self._check_params()
        self.report_, self.solution_ = solve(instance, scenarios, **self.get_params())
        self.objective_ = self.report_.best_integer
        return self

    def predict(self, instance: Instance = None, scenarios=None) -> FirstStageSolution:
        check_is_fitted(self, "solution_")
        return self.solution_

    def score(self, instance: Instance, scenarios) -> float:
        check_is_fitted(self, "solution_")
        return evaluate_first_stage(instance, scenarios, self.solution_)


def greedy_assignment(instance: Instance, scenarios, first_stage: FirstStageSolution, requests=None):
    """Per-scenario greedy assignments of a first stage (for reporting)."""
    if requests is None:
        requests = RequestPreprocessor().fit_transform(instance, scenarios)
    return [greedy_recourse(r, first_stage) for r in requests]
