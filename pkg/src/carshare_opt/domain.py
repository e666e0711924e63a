"""Problem data for joint carsharing pricing and relocation.

Every container is a frozen dataclass over read-only numpy arrays, so
instances, scenarios and request sets can be shared between threads.

Zones, customers and vehicles are identified by their position in the
corresponding arrays. Customers are stored in arrival order: customer ``k``
reaches a vehicle before customer ``q`` whenever ``k < q``.
"""
from __future__ import annotations

import dataclasses
import functools
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

MODE_CARSHARING = "carsharing"
MONEY_TOL = 1e-9

# column order of Customers.beta
BETA_FIELDS = ("price", "cs", "pt", "bike", "walk", "wait")


def _ro(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Zones:
    coords: np.ndarray            # (n, 2) km
    center_distance: np.ndarray   # (n,) walking distance to the city center, km

    def __post_init__(self):
        object.__setattr__(self, "coords", _ro(self.coords).reshape(-1, 2))
        object.__setattr__(self, "center_distance", _ro(self.center_distance))

    def __len__(self):
        return len(self.center_distance)


@dataclasses.dataclass(frozen=True, eq=False)
class AlternativeMode:
    """A transport service outside the operator's control (public transport, bicycle)."""

    name: str
    available: np.ndarray     # (n,) bool, availability at the origin zone
    price: np.ndarray         # (n, n) EUR
    t_pt: np.ndarray          # (n, n) minutes in public transport
    t_bike: np.ndarray        # (n, n) minutes cycling
    t_walk: np.ndarray        # (n, n) minutes walking
    t_wait: np.ndarray        # (n, n) minutes waiting

    def __post_init__(self):
        object.__setattr__(self, "available", _ro(self.available, bool))
        for f in ("price", "t_pt", "t_bike", "t_walk", "t_wait"):
            object.__setattr__(self, f, _ro(getattr(self, f)))


@dataclasses.dataclass(frozen=True, eq=False)
class CarsharingService:
    per_minute_fee: float
    drive_time: np.ndarray    # (n, n) minutes
    walk_time: np.ndarray     # (n, n) minutes to reach the shared car and the destination
    wait_time: np.ndarray     # (n, n) minutes

    def __post_init__(self):
        object.__setattr__(self, "per_minute_fee", float(self.per_minute_fee))
        for f in ("drive_time", "walk_time", "wait_time"):
            object.__setattr__(self, f, _ro(getattr(self, f)))


@dataclasses.dataclass(frozen=True, eq=False)
class FeeLadder:
    """Drop-off fees in EUR, sorted ascending so level index order is fee order."""

    levels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "levels", _ro(self.levels))

    def __len__(self):
        return len(self.levels)

    def index_of(self, value: float) -> int:
        hits = np.flatnonzero(np.abs(self.levels - value) <= MONEY_TOL)
        if not len(hits):
            raise ValueError(f"fee {value} is not on the ladder {list(self.levels)}")
        return int(hits[0])

    def nearest_index(self, value: float) -> int:
        return int(np.argmin(np.abs(self.levels - value)))


@dataclasses.dataclass(frozen=True, eq=False)
class Customers:
    origin: np.ndarray        # (K,) zone index
    destination: np.ndarray   # (K,) zone index
    beta: np.ndarray          # (K, 6) utility coefficients, columns per BETA_FIELDS

    def __post_init__(self):
        object.__setattr__(self, "origin", _ro(self.origin, np.int64))
        object.__setattr__(self, "destination", _ro(self.destination, np.int64))
        object.__setattr__(self, "beta", _ro(self.beta).reshape(-1, len(BETA_FIELDS)))

    def __len__(self):
        return len(self.origin)

    def coefficient(self, field: str) -> np.ndarray:
        return self.beta[:, BETA_FIELDS.index(field)]


@dataclasses.dataclass(frozen=True, eq=False)
class Vehicles:
    initial_zone: np.ndarray  # (V,)

    def __post_init__(self):
        object.__setattr__(self, "initial_zone", _ro(self.initial_zone, np.int64))

    def __len__(self):
        return len(self.initial_zone)


@dataclasses.dataclass(frozen=True, eq=False)
class CostModel:
    relocation: np.ndarray    # (n, n) EUR, from a vehicle's initial zone to a target zone
    usage: np.ndarray         # (n, n) EUR per rental
    fuel_price: float = 1.60
    consumption: float = 0.058
    driver_salary: float = 0.20
    speed: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "relocation", _ro(self.relocation))
        object.__setattr__(self, "usage", _ro(self.usage))


@dataclasses.dataclass(frozen=True, eq=False)
class Instance:
    zones: Zones
    customers: Customers
    vehicles: Vehicles
    alternatives: tuple
    carsharing: CarsharingService
    fee_ladder: FeeLadder
    costs: CostModel
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    @property
    def n_customers(self) -> int:
        return len(self.customers)

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicles)

    @property
    def n_levels(self) -> int:
        return len(self.fee_ladder)

    @property
    def modes(self) -> tuple:
        return (MODE_CARSHARING,) + tuple(a.name for a in self.alternatives)

    @functools.cached_property
    def vehicle_relocation_cost(self) -> np.ndarray:
        """(V, n) matrix C^R[v, i]: cost of making vehicle v available in zone i."""
        arr = self.costs.relocation[self.vehicles.initial_zone]
        arr.setflags(write=False)
        return arr

    def relocation_cost(self, placement) -> float:
        placement = np.asarray(placement)
        return float(self.vehicle_relocation_cost[np.arange(self.n_vehicles), placement].sum())


@dataclasses.dataclass(frozen=True, eq=False)
class Scenario:
    """One draw of the random utility terms, ``draws[k, m]`` for mode ``m``.

    Column 0 is carsharing (one term shared by the homogeneous fleet); the
    remaining columns follow ``Instance.alternatives``.
    """

    draws: np.ndarray
    weight: float

    def __post_init__(self):
        draws = _ro(self.draws)
        if draws.ndim != 2:
            draws = draws.reshape(len(draws), -1 if draws.size else 0)
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "weight", float(self.weight))


@dataclasses.dataclass(frozen=True, eq=False)
class RequestSet:
    """Carsharing requests of one scenario, sorted by customer index.

    ``lmax[r]`` is the highest fee level at which the customer strictly
    prefers carsharing; ``revenue[r, l]`` is the net revenue of serving the
    request at level ``l`` (meaningful for ``l <= lmax[r]``).
    """

    customer: np.ndarray
    origin: np.ndarray
    destination: np.ndarray
    lmax: np.ndarray
    revenue: np.ndarray       # (R, L)

    def __post_init__(self):
        for f in ("customer", "origin", "destination", "lmax"):
            object.__setattr__(self, f, _ro(getattr(self, f), np.int64))
        n_levels = self.revenue.shape[1] if np.ndim(self.revenue) == 2 else 0
        object.__setattr__(self, "revenue", _ro(self.revenue).reshape(len(self.customer), n_levels))

    def __len__(self):
        return len(self.customer)

    @property
    def n_levels(self) -> int:
        return self.revenue.shape[1]

    def levels(self, r: int) -> range:
        """Admissible fee levels of request ``r`` (fees not above its maximum)."""
        return range(int(self.lmax[r]) + 1)

    def top_revenue(self) -> np.ndarray:
        return self.revenue[np.arange(len(self)), self.lmax] if len(self) else np.zeros(0)

    @functools.cached_property
    def predecessors(self) -> tuple:
        """For each request, the earlier requests sharing its origin zone."""
        out = []
        seen: dict = {}
        for r in range(len(self)):
            o = int(self.origin[r])
            out.append(tuple(seen.get(o, ())))
            seen[o] = seen.get(o, ()) + (r,)
        return tuple(out)

    @functools.cached_property
    def groups(self) -> dict:
        """Requests grouped by origin-destination pair."""
        g: dict = {}
        for r in range(len(self)):
            g.setdefault((int(self.origin[r]), int(self.destination[r])), []).append(r)
        return {k: tuple(v) for k, v in g.items()}

    @functools.cached_property
    def _lists(self):
        return (self.origin.tolist(), self.destination.tolist(), self.lmax.tolist(),
                self.revenue.tolist())

    def to_dict(self) -> dict:
        return {"requests": [
            {"customer": int(self.customer[r]), "origin": int(self.origin[r]),
             "destination": int(self.destination[r]), "lmax": int(self.lmax[r]),
             "revenue": [float(v) for v in self.revenue[r, :self.lmax[r] + 1]]}
            for r in range(len(self))]}


@dataclasses.dataclass(frozen=True, eq=False)
class FirstStageSolution:
    """Vehicle placement (zone per vehicle) and fee level index per OD pair."""

    placement: np.ndarray     # (V,)
    fees: np.ndarray          # (n, n)

    def __post_init__(self):
        object.__setattr__(self, "placement", _ro(self.placement, np.int64))
        object.__setattr__(self, "fees", _ro(self.fees, np.int64))

    def z(self, n_zones: int) -> np.ndarray:
        out = np.zeros((len(self.placement), n_zones))
        out[np.arange(len(self.placement)), self.placement] = 1.0
        return out

    def lam(self, n_levels: int) -> np.ndarray:
        n = self.fees.shape[0]
        out = np.zeros((n, n, n_levels))
        ii, jj = np.indices((n, n))
        out[ii, jj, self.fees] = 1.0
        return out

    @classmethod
    def from_binary(cls, z, lam, tol: float = 1e-6) -> "FirstStageSolution":
        z = np.asarray(z, dtype=float)
        lam = np.asarray(lam, dtype=float)
        if np.any(np.abs(z.sum(axis=1) - 1) > tol) or np.any(np.abs(lam.sum(axis=2) - 1) > tol):
            raise ValueError("each vehicle needs exactly one zone and each OD exactly one fee level")
        return cls(np.argmax(z, axis=1), np.argmax(lam, axis=2))

    def key(self) -> tuple:
        return tuple(self.placement.tolist()), tuple(self.fees.ravel().tolist())

    def to_dict(self) -> dict:
        return {"placement": self.placement.tolist(), "fees": self.fees.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FirstStageSolution":
        return cls(d["placement"], d["fees"])


@dataclasses.dataclass(frozen=True)
class RecourseSolution:
    assignment: tuple   # (vehicle, request, level) triples
    value: float

    @property
    def served(self) -> frozenset:
        return frozenset(r for _, r, _ in self.assignment)


@dataclasses.dataclass(frozen=True, eq=False)
class Cut:
    """``phi_coef * phi_s <= constant + <z_coef, z> + <lam_coef, lam>``.

    Optimality and relaxation cuts have ``phi_coef == 1``; the symmetry
    breaking valid inequality has ``phi_coef == 0`` and no scenario.
    """

    kind: str                 # "optimality" | "relaxation" | "validInequality"
    scenario: int | None
    z_coef: np.ndarray        # (V, n)
    lam_coef: np.ndarray      # (n, n, L)
    constant: float
    phi_coef: float = 1.0
    generator: FirstStageSolution | None = None

    def rhs(self, z, lam) -> float:
        return float(self.constant + np.sum(self.z_coef * z) + np.sum(self.lam_coef * lam))

    def rhs_at(self, sol: FirstStageSolution) -> float:
        return self.rhs(sol.z(self.z_coef.shape[1]), sol.lam(self.lam_coef.shape[2]))


@dataclasses.dataclass
class SolveReport:
    best_integer: float
    best_bound: float
    gap: float
    gap_root: float | None
    gap_50: float | None
    elapsed: float
    node_count: int = 0
    cut_counts: dict = dataclasses.field(default_factory=dict)
    seed: int | None = None
    status: str = ""
    method: str = "lshaped"
    incumbent_trace: list = dataclasses.field(default_factory=list)

    def to_dict(self) -> dict:
        def num(x):
            if x is None or math.isnan(x):
                return None
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")
        return {"method": self.method, "status": self.status,
                "bestInteger": num(self.best_integer), "bestBound": num(self.best_bound),
                "gap": num(self.gap), "gapR": num(self.gap_root), "gap50": num(self.gap_50),
                "elapsed": self.elapsed, "nodeCount": self.node_count,
                "cutCounts": dict(self.cut_counts), "seed": self.seed,
                "incumbentTrace": [[t, v] for t, v in self.incumbent_trace]}


# ---------------------------------------------------------------- validation


def validate(instance: Instance) -> list[str]:
    """Return human-readable invariant violations (empty when well formed)."""
    out: list[str] = []
    n = instance.n_zones
    d = instance.zones.center_distance
    if n == 0:
        out.append("no zones")
    if np.any(d <= 0):
        out.append("non-positive center distance")
    sq = (n, n)
    cs = instance.carsharing
    if not cs.per_minute_fee > 0:
        out.append("non-positive per-minute fee")
    for name in ("drive_time", "walk_time", "wait_time"):
        m = getattr(cs, name)
        if m.shape != sq:
            out.append(f"carsharing {name} has shape {m.shape}, expected {sq}")
        elif np.any(m < 0):
            out.append(f"negative carsharing {name}")
    for alt in instance.alternatives:
        if alt.available.shape != (n,):
            out.append(f"availability of {alt.name} not defined for every zone")
        for name in ("price", "t_pt", "t_bike", "t_walk", "t_wait"):
            m = getattr(alt, name)
            if m.shape != sq:
                out.append(f"{alt.name} {name} has shape {m.shape}, expected {sq}")
            elif np.any(m < 0):
                out.append(f"negative {alt.name} {name}")
    if MODE_CARSHARING in {a.name for a in instance.alternatives}:
        out.append("alternative mode named 'carsharing'")
    levels = instance.fee_ladder.levels
    if len(levels) == 0:
        out.append("empty fee ladder")
    if np.any(np.diff(levels) <= 0):
        out.append("fee ladder not strictly increasing")
    cu = instance.customers
    if len(cu):
        in_range = np.all((cu.origin >= 0) & (cu.origin < n) & (cu.destination >= 0) & (cu.destination < n))
        if not in_range:
            out.append("customer zone out of range")
        if np.any(cu.origin == cu.destination):
            out.append("round trip forbidden (A10)")
        if np.any(cu.beta > 0):
            out.append("positive utility coefficient")
        # a customer must always be able to fall back on some alternative
        shapes_ok = all(a.available.shape == (n,) for a in instance.alternatives)
        if in_range and shapes_ok:
            avail = np.zeros((n, 0), dtype=bool)
            if instance.alternatives:
                avail = np.array([a.available for a in instance.alternatives]).T
            if np.any(~avail[cu.origin].any(axis=1)):
                out.append("customer without an available alternative (A5 closed market)")
    iz = instance.vehicles.initial_zone
    if np.any((iz < 0) | (iz >= n)):
        out.append("vehicle initial zone out of range")
    co = instance.costs
    if co.relocation.shape != sq or co.usage.shape != sq:
        out.append("cost matrices have the wrong shape")
    else:
        if np.any(co.relocation < 0):
            out.append("negative relocation cost")
        if np.any(np.abs(np.diag(co.relocation)) > MONEY_TOL):
            out.append("relocation to own zone is not free")
        if np.any(co.usage < 0):
            out.append("negative usage cost")
    if not instance.sigma > 0:
        out.append("non-positive sigma")
    return out


# ---------------------------------------------------------------- JSON


def instance_to_dict(inst: Instance) -> dict:
    cs = inst.carsharing
    co = inst.costs
    return {
        "zones": [{"id": i, "coord": inst.zones.coords[i].tolist(),
                   "centerDistance": float(inst.zones.center_distance[i])}
                  for i in range(inst.n_zones)],
        "customers": [{"id": k, "origin": int(inst.customers.origin[k]),
                       "destination": int(inst.customers.destination[k]),
                       "beta": {f: float(inst.customers.beta[k, t]) for t, f in enumerate(BETA_FIELDS)}}
                      for k in range(inst.n_customers)],
        "vehicles": [{"id": v, "initialZone": int(z)} for v, z in enumerate(inst.vehicles.initial_zone)],
        "alternatives": [{"name": a.name, "available": a.available.tolist(), "price": a.price.tolist(),
                          "timePT": a.t_pt.tolist(), "timeBike": a.t_bike.tolist(),
                          "timeWalk": a.t_walk.tolist(), "timeWait": a.t_wait.tolist()}
                         for a in inst.alternatives],
        "carsharing": {"perMinuteFee": cs.per_minute_fee, "driveTime": cs.drive_time.tolist(),
                       "walkTime": cs.walk_time.tolist(), "waitTime": cs.wait_time.tolist()},
        "feeLadder": inst.fee_ladder.levels.tolist(),
        "costs": {"relocation": co.relocation.tolist(), "usage": co.usage.tolist(),
                  "fuelPrice": co.fuel_price, "consumption": co.consumption,
                  "driverSalary": co.driver_salary, "speed": co.speed},
        "sigma": inst.sigma,
    }


def instance_from_dict(d: dict) -> Instance:
    zones = sorted(d["zones"], key=lambda z: z["id"])
    n = len(zones)
    customers = sorted(d["customers"], key=lambda c: c["id"])
    vehicles = sorted(d["vehicles"], key=lambda v: v["id"])
    cs = d["carsharing"]
    co = d["costs"]
    empty = np.zeros((n, n))
    return Instance(
        zones=Zones(np.array([z["coord"] for z in zones], dtype=float).reshape(n, 2),
                    [z["centerDistance"] for z in zones]),
        customers=Customers([c["origin"] for c in customers], [c["destination"] for c in customers],
                            np.array([[c["beta"][f] for f in BETA_FIELDS] for c in customers],
                                     dtype=float).reshape(len(customers), len(BETA_FIELDS))),
        vehicles=Vehicles([v["initialZone"] for v in vehicles]),
        alternatives=[AlternativeMode(a["name"], a["available"], a["price"],
                                      a.get("timePT", empty), a.get("timeBike", empty),
                                      a.get("timeWalk", empty), a.get("timeWait", empty))
                      for a in d["alternatives"]],
        carsharing=CarsharingService(cs["perMinuteFee"], cs["driveTime"], cs["walkTime"], cs["waitTime"]),
        fee_ladder=FeeLadder(d["feeLadder"]),
        costs=CostModel(co["relocation"], co["usage"], co.get("fuelPrice", 1.60),
                        co.get("consumption", 0.058), co.get("driverSalary", 0.20), co.get("speed", 50.0)),
        sigma=d["sigma"],
    )


def scenarios_to_dict(instance: Instance, scenarios: Sequence[Scenario]) -> dict:
    modes = instance.modes
    return {"modes": list(modes),
            "scenarios": [{"draws": [{m: float(row[t]) for t, m in enumerate(modes)} for row in s.draws],
                           "weight": s.weight} for s in scenarios]}


def scenarios_from_dict(instance: Instance, d: dict) -> list[Scenario]:
    modes = instance.modes
    items = d["scenarios"] if "scenarios" in d else [d]
    return [Scenario(np.array([[row[m] for m in modes] for row in s["draws"]], dtype=float)
                     .reshape(len(s["draws"]), len(modes)), s["weight"]) for s in items]


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def save_instance(instance: Instance, path) -> None:
    dump_json(instance_to_dict(instance), path)


def load_instance(path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def save_scenarios(instance: Instance, scenarios: Sequence[Scenario], path) -> None:
    dump_json(scenarios_to_dict(instance, scenarios), path)


def load_scenarios(instance: Instance, path) -> list[Scenario]:
    return scenarios_from_dict(instance, json.loads(Path(path).read_text()))
