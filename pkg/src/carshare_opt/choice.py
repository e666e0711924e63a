"""Customer utilities, request preprocessing and direct choice simulation."""
from __future__ import annotations

import dataclasses
import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .domain import MODE_CARSHARING, FirstStageSolution, Instance, RequestSet, Scenario


def tau(t):
    """Step factor ``ceil(t / 10)`` that makes walking and cycling disutility piecewise linear."""
    if np.ndim(t) == 0:
        if t < 0:
            raise ValueError("time must be nonnegative")
        return math.ceil(t / 10)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    return np.ceil(t / 10)


def carsharing_price(instance: Instance, i: int, j: int, level: int) -> float:
    """Per-minute charge for the ride plus the drop-off fee of ``level``."""
    if not 0 <= level < instance.n_levels:
        raise IndexError(f"fee level {level} outside 0..{instance.n_levels - 1}")
    return instance.carsharing.per_minute_fee * instance.carsharing.drive_time[i, j] \
        + instance.fee_ladder.levels[level]


def deterministic_utility(beta, price, t_cs=0.0, t_pt=0.0, t_bike=0.0, t_walk=0.0, t_wait=0.0):
    """Observable part of a customer's utility for one mode.

    ``beta`` is indexable by the names in ``BETA_FIELDS`` order
    (price, cs, pt, bike, walk, wait). Arrays broadcast.
    """
    b = np.asarray(beta, dtype=float)
    return (b[..., 0] * price + b[..., 1] * t_cs + b[..., 2] * t_pt
            + tau(t_bike) * b[..., 3] * t_bike + tau(t_walk) * b[..., 4] * t_walk
            + b[..., 5] * t_wait)


@dataclasses.dataclass(frozen=True, eq=False)
class UtilityTables:
    alt: np.ndarray        # (K, A) deterministic utility of each alternative
    available: np.ndarray  # (K, A) alternative offered at the customer's origin
    cs: np.ndarray         # (K, L) deterministic carsharing utility per fee level
    base_revenue: np.ndarray  # (K,) per-minute revenue minus usage cost


def utility_tables(instance: Instance) -> UtilityTables:
    cu = instance.customers
    o, d = cu.origin, cu.destination
    beta = cu.beta
    n_alt = len(instance.alternatives)
    alt = np.zeros((len(cu), n_alt))
    avail = np.zeros((len(cu), n_alt), dtype=bool)
    for a, mode in enumerate(instance.alternatives):
        alt[:, a] = deterministic_utility(beta, mode.price[o, d], 0.0, mode.t_pt[o, d], mode.t_bike[o, d],
                                          mode.t_walk[o, d], mode.t_wait[o, d])
        avail[:, a] = mode.available[o]
    cs = instance.carsharing
    ride = cs.per_minute_fee * cs.drive_time[o, d]
    prices = ride[:, None] + instance.fee_ladder.levels[None, :]
    cs_util = deterministic_utility(beta[:, None, :], prices, cs.drive_time[o, d][:, None], 0.0, 0.0,
                                    cs.walk_time[o, d][:, None], cs.wait_time[o, d][:, None])
    base = ride - instance.costs.usage[o, d]
    return UtilityTables(alt, avail, np.asarray(cs_util).reshape(len(cu), instance.n_levels), base)


def best_alternative(tables: UtilityTables, scenario: Scenario) -> np.ndarray:
    """Best alternative utility per customer including the random terms (-inf if none)."""
    if tables.alt.shape[1] == 0:
        return np.full(tables.alt.shape[0], -np.inf)
    u = np.where(tables.available, tables.alt + scenario.draws[:, 1:], -np.inf)
    return u.max(axis=1)


def compute_requests(instance: Instance, scenario: Scenario, tables: UtilityTables | None = None) -> RequestSet:
    """Requests of one scenario: customers preferring carsharing at some fee level.

    A customer requests when carsharing is strictly better than every
    available alternative at some level; ``lmax`` is the highest such level.
    """
    if tables is None:
        tables = utility_tables(instance)
    n_levels = instance.n_levels
    best = best_alternative(tables, scenario)
    u_cs = tables.cs + scenario.draws[:, :1]
    prefers = u_cs > best[:, None]
    has = prefers.any(axis=1)
    lmax = n_levels - 1 - np.argmax(prefers[:, ::-1], axis=1)
    k = np.flatnonzero(has)
    revenue = tables.base_revenue[k, None] + instance.fee_ladder.levels[None, :]
    return RequestSet(k, instance.customers.origin[k], instance.customers.destination[k],
                      lmax[k], revenue.reshape(len(k), n_levels))


class RequestPreprocessor(BaseEstimator):
    """Turns scenarios into request sets for a fixed instance.

    ``fit`` tabulates the deterministic utilities once; ``transform`` maps a
    sequence of scenarios to one :class:`RequestSet` each.
    """

    def fit(self, instance: Instance, scenarios=None):
        self.instance_ = instance
        self.tables_ = utility_tables(instance)
        return self

    def transform(self, scenarios) -> list[RequestSet]:
        check_is_fitted(self, "tables_")
        return [compute_requests(self.instance_, s, self.tables_) for s in scenarios]

    def fit_transform(self, instance: Instance, scenarios) -> list[RequestSet]:
        return self.fit(instance).transform(scenarios)


@dataclasses.dataclass(frozen=True)
class ChoiceOutcome:
    mode: tuple        # chosen mode name per customer
    vehicle: tuple     # vehicle id for carsharing choices, -1 otherwise
    utility: tuple     # realised utility per customer
    revenue: float     # net revenue of the carsharing rentals

    @property
    def carsharing_customers(self) -> tuple:
        return tuple(k for k, m in enumerate(self.mode) if m == MODE_CARSHARING)


def simulate_choices(instance: Instance, scenario: Scenario, first_stage: FirstStageSolution) -> ChoiceOutcome:
    """Let customers choose one by one in arrival order.

    Each customer takes the highest-utility option among the available
    alternatives and, when a vehicle is still parked at their origin, a
    shared car at the posted fee. Ties go to the alternative.
    """
    tables = utility_tables(instance)
    stock: dict = {}
    for v in np.argsort(first_stage.placement, kind="stable"):
        stock.setdefault(int(first_stage.placement[v]), []).append(int(v))
    cu = instance.customers
    modes, vehicles, utils = [], [], []
    revenue = 0.0
    for k in range(len(cu)):
        i, j = int(cu.origin[k]), int(cu.destination[k])
        best_mode, best_u = None, -np.inf
        for a, alt in enumerate(instance.alternatives):
            if not tables.available[k, a]:
                continue
            u = tables.alt[k, a] + scenario.draws[k, a + 1]
            if best_mode is None or u > best_u:
                best_mode, best_u = alt.name, u
        level = int(first_stage.fees[i, j])
        parked = stock.get(i, [])
        vehicle = -1
        if parked:
            u = tables.cs[k, level] + scenario.draws[k, 0]
            if best_mode is None or u > best_u:
                best_mode, best_u = MODE_CARSHARING, u
                vehicle = parked.pop(0)
                revenue += tables.base_revenue[k] + instance.fee_ladder.levels[level]
        modes.append(best_mode)
        vehicles.append(vehicle)
        utils.append(float(best_u))
    return ChoiceOutcome(tuple(modes), tuple(vehicles), tuple(utils), float(revenue))
