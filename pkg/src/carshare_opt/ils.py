"""Iterated local search over vehicle positions and the fee matrix."""
from __future__ import annotations

import dataclasses
import math
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .choice import RequestPreprocessor
from .domain import FirstStageSolution, Instance
from .lshaped import evaluate_first_stage

POSITION = "position"
FEE = "fee"


@dataclasses.dataclass(frozen=True, eq=False)
class EncodedSolution:
    """Zone per vehicle and fee level index per OD pair."""

    positions: tuple
    fees: tuple          # row-major |I| x |I|
    n_zones: int

    @classmethod
    def from_first_stage(cls, fs: FirstStageSolution) -> "EncodedSolution":
        return cls(tuple(fs.placement.tolist()), tuple(fs.fees.ravel().tolist()), fs.fees.shape[0])

    def to_first_stage(self) -> FirstStageSolution:
        n = self.n_zones
        return FirstStageSolution(np.array(self.positions, dtype=np.int64),
                                  np.array(self.fees, dtype=np.int64).reshape(n, n))

    def replace(self, positions=None, fees=None) -> "EncodedSolution":
        return EncodedSolution(self.positions if positions is None else tuple(positions),
                               self.fees if fees is None else tuple(fees), self.n_zones)

    def __eq__(self, other):
        return isinstance(other, EncodedSolution) and (self.positions, self.fees, self.n_zones) == \
            (other.positions, other.fees, other.n_zones)

    def __hash__(self):
        return hash((self.positions, self.fees, self.n_zones))


def fitness(instance: Instance, scenarios, encoded: EncodedSolution, requests=None) -> float:
    """Objective value of the decoded first stage (relocation cost plus expected recourse)."""
    return evaluate_first_stage(instance, scenarios, encoded.to_first_stage(), requests)


def neighbors(encoded: EncodedSolution, operator: str, n_levels: int):
    """Hamming-1 neighbours in scan order.

    Positions are scanned by (vehicle, zone) and fees by (OD pair, level).
    """
    if operator == POSITION:
        for v, zone in enumerate(encoded.positions):
            for i in range(encoded.n_zones):
                if i != zone:
                    pos = list(encoded.positions)
                    pos[v] = i
                    yield encoded.replace(positions=pos)
    elif operator == FEE:
        for k, level in enumerate(encoded.fees):
            for lev in range(n_levels):
                if lev != level:
                    fees = list(encoded.fees)
                    fees[k] = lev
                    yield encoded.replace(fees=fees)
    else:
        raise ValueError(f"unknown operator {operator!r}")


class _Evaluator:
    def __init__(self, instance, scenarios, requests=None):
        self.instance = instance
        self.scenarios = list(scenarios)
        self.requests = requests if requests is not None else \
            RequestPreprocessor().fit_transform(instance, self.scenarios)
        self.evaluations = 0

    def __call__(self, encoded: EncodedSolution) -> float:
        self.evaluations += 1
        return fitness(self.instance, self.scenarios, encoded, self.requests)


def _first_improvement(evaluate, current, value, operator, n_levels, deadline):
    for cand in neighbors(current, operator, n_levels):
        if time.perf_counter() > deadline:
            return None, value, True
        v = evaluate(cand)
        if v > value:
            return cand, v, False
    return None, value, False


def local_search(instance: Instance, scenarios, start: EncodedSolution, operator: str,
                 time_limit: float = math.inf, requests=None, *, _evaluate=None, _deadline=None,
                 _start_value=None):
    """First-improvement descent; returns ``(solution, fitness, timed_out)``.

    Unless it timed out, the result has no improving neighbour for
    ``operator``.
    """
    evaluate = _evaluate or _Evaluator(instance, scenarios, requests)
    deadline = _deadline if _deadline is not None else time.perf_counter() + time_limit
    current = start
    value = _start_value if _start_value is not None else evaluate(start)
    while True:
        cand, cand_value, timed_out = _first_improvement(evaluate, current, value, operator,
                                                         instance.n_levels, deadline)
        if cand is None:
            return current, value, timed_out
        current, value = cand, cand_value


def _percent_count(r_percent: float, size: int) -> int:
    # round half up, never fewer than one entry
    return min(size, max(1, math.floor(r_percent * size / 100.0 + 0.5)))


def perturb(encoded: EncodedSolution, r_percent: float, rng: np.random.Generator, n_levels: int):
    """Redraw ``R%`` of the positions and ``R%`` of the fee entries uniformly."""
    if not 0 < r_percent <= 100:
        raise ValueError("R must lie in (0, 100]")
    pos = list(encoded.positions)
    fees = list(encoded.fees)
    if pos:
        for v in rng.choice(len(pos), size=_percent_count(r_percent, len(pos)), replace=False):
            pos[v] = int(rng.integers(encoded.n_zones))
    if fees:
        for k in rng.choice(len(fees), size=_percent_count(r_percent, len(fees)), replace=False):
            fees[k] = int(rng.integers(n_levels))
    return encoded.replace(positions=pos, fees=fees)


def random_solution(instance: Instance, rng: np.random.Generator) -> EncodedSolution:
    n = instance.n_zones
    pos = rng.integers(n, size=instance.n_vehicles)
    fees = rng.integers(instance.n_levels, size=n * n)
    return EncodedSolution(tuple(pos.tolist()), tuple(fees.tolist()), n)


@dataclasses.dataclass
class ILSResult:
    best: EncodedSolution
    objective: float
    iterations: int
    evaluations: int
    elapsed: float
    trace: list        # (elapsed, best objective) after every iteration


def ils(instance: Instance, scenarios, max_restarts: int = 3, time_limit: float = 1800.0,
        r_percent: float = 30.0, seed=None, requests=None, start: EncodedSolution | None = None) -> ILSResult:
    """Iterated local search: fee descent, then position descent, then a perturbation.

    Stops after ``max_restarts + 1`` consecutive rounds that fail to improve
    the best solution, or at the time limit.
    """
    t0 = time.perf_counter()
    deadline = t0 + time_limit
    rng = np.random.default_rng(seed)
    evaluate = _Evaluator(instance, scenarios, requests)
    current = start if start is not None else random_solution(instance, rng)
    cur_value = evaluate(current)
    best, best_value = current, cur_value
    trace = []
    stale = 0
    iterations = 0
    while stale <= max_restarts and time.perf_counter() <= deadline:
        sol, val, _ = local_search(instance, scenarios, current, FEE, _evaluate=evaluate, _deadline=deadline,
                                   _start_value=cur_value)
        sol, val, _ = local_search(instance, scenarios, sol, POSITION, _evaluate=evaluate, _deadline=deadline,
                                   _start_value=val)
        iterations += 1
        if val > best_value:
            best, best_value = sol, val
            stale = 0
        else:
            stale += 1
        trace.append((time.perf_counter() - t0, best_value))
        current = perturb(sol, r_percent, rng, instance.n_levels)
        cur_value = evaluate(current)
    return ILSResult(best, best_value, iterations, evaluate.evaluations, time.perf_counter() - t0, trace)


def ils_gap(ils_objective: float, bound: float) -> float:
    """Percent gap of a heuristic value against an upper bound."""
    return 100.0 * abs(ils_objective - bound) / (abs(ils_objective) + 1e-10)


class ILSSolver(BaseEstimator):
    """Estimator wrapper around :func:`ils`; fitted attributes mirror ``LShapedSolver``."""

    def __init__(self, max_restarts=3, time_limit=1800.0, r_percent=30.0, seed=None):
        self.max_restarts = max_restarts
        self.time_limit = time_limit
        self.r_percent = r_percent
        self.seed = seed

    def fit(self, instance: Instance, scenarios):
        if self.max_restarts < 0 or self.time_limit <= 0 or not 0 < self.r_percent <= 100:
            raise ValueError("invalid ILS parameters")
        self.result_ = ils(instance, scenarios, self.max_restarts, self.time_limit, self.r_percent, self.seed)
        self.solution_ = self.result_.best.to_first_stage()
        self.objective_ = self.result_.objective
        return self

    def predict(self, instance: Instance = None, scenarios=None) -> FirstStageSolution:
        check_is_fitted(self, "solution_")
        return self.solution_

    def score(self, instance: Instance, scenarios) -> float:
        check_is_fitted(self, "solution_")
        return evaluate_first_stage(instance, scenarios, self.solution_)
