"""Synthetic Milan-style instances and Gumbel scenario sampling.

Everything is reproducible from ``GenConfig.seed``: each generation step
draws from its own child stream of a :class:`numpy.random.SeedSequence`, and
every scenario gets its own grandchild stream, so the same seed always yields
the same instance and scenarios.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .choice import deterministic_utility
from .domain import (AlternativeMode, CarsharingService, CostModel, Customers, FeeLadder, Instance,
                     Scenario, Vehicles, Zones)

EULER_GAMMA = 0.5772156649015329
SIGMA_FLOOR = 1e-9

# utility coefficients (price per EUR, times per minute)
BETA_PRICE_CLASSES = (-70.63, -188.33)
BETA_DEFAULTS = {"cs": -1.0, "pt": -2.0, "bike": -2.5, "walk": -3.0, "wait": -6.0}

# seed-sequence children, one per generation step
_STREAMS = ("zones", "customers", "vehicles", "profiles", "scenarios")


@dataclasses.dataclass(frozen=True)
class GenConfig:
    n_zones: int = 5
    n_customers: int = 20
    n_vehicles: int = 5
    n_scenarios: int = 5
    alpha_from: float = 0.5
    alpha_to: float = 0.5
    alpha_v: float = 0.5
    individual_profiles: bool = False
    fee_levels: tuple = (-2.0, -1.0, 0.0, 1.0, 2.0)
    seed: int = 0
    # geography and mobility
    radius_km: float = 6.0
    detour_factor: float = 1.25
    min_distance_km: float = 0.2
    car_speed: float = 50.0
    pt_speed: float = 20.0
    bike_speed: float = 15.0
    pt_walk: float = 8.0
    pt_wait: float = 5.0
    pt_price: float = 2.0
    cs_walk: float = 5.0
    per_minute_fee: float = 0.265
    fuel_price: float = 1.60
    consumption: float = 0.058
    driver_salary: float = 0.20

    def __post_init__(self):
        object.__setattr__(self, "fee_levels", tuple(float(x) for x in self.fee_levels))
        for name in ("alpha_from", "alpha_to", "alpha_v"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {a}")
        for name in ("n_zones", "n_customers", "n_vehicles", "n_scenarios"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_zones < 2:
            raise ValueError("at least two zones are needed for one-way trips")
        if any(b <= a for a, b in zip(self.fee_levels, self.fee_levels[1:])):
            raise ValueError("fee levels must be strictly increasing")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["fee_levels"] = list(self.fee_levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def streams(self) -> dict:
        children = np.random.SeedSequence(self.seed).spawn(len(_STREAMS))
        return dict(zip(_STREAMS, children))


def zone_probabilities(distances, alpha: float) -> np.ndarray:
    """Centrality-weighted zone probabilities.

    ``pi_i ~ exp(-alpha * (d_i - mean(d))) * d_i``: larger ``alpha`` favours
    zones closer to the centre.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 1 or not len(d):
        raise ValueError("need a non-empty vector of distances")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ValueError("center distances must be positive and finite")
    delta = d - d.mean()
    # shift the exponent for stability; the constant cancels on normalisation
    w = np.exp(-alpha * delta - np.max(-alpha * delta)) * d
    return w / w.sum()


def _destination_probabilities(distances, alpha: float, origin: int) -> np.ndarray:
    p = zone_probabilities(distances, alpha).copy()
    p[origin] = 0.0
    return p / p.sum()


def partition_customers(config: GenConfig, zones: Zones, rng: np.random.Generator):
    """Draw (origin, destination) per customer; destinations differ from origins."""
    d = zones.center_distance
    if len(d) < 2:
        raise ValueError("at least two zones are needed for one-way trips")
    origin = rng.choice(len(d), size=config.n_customers, p=zone_probabilities(d, config.alpha_from))
    dest_p = np.array([_destination_probabilities(d, config.alpha_to, i) for i in range(len(d))])
    # inverse-CDF draw per customer from its origin's row
    u = rng.random(config.n_customers)
    cdf = np.cumsum(dest_p[origin], axis=1)
    destination = np.minimum((u[:, None] >= cdf).sum(axis=1), len(d) - 1)
    # guard against round-off landing on the excluded origin column
    bad = destination == origin
    if np.any(bad):
        destination[bad] = np.argmax(dest_p[origin[bad]], axis=1)
    return origin.astype(np.int64), destination.astype(np.int64)


def place_vehicles(config: GenConfig, zones: Zones, rng: np.random.Generator) -> np.ndarray:
    p = zone_probabilities(zones.center_distance, config.alpha_v)
    return rng.choice(len(p), size=config.n_vehicles, p=p).astype(np.int64)


def draw_zones(config: GenConfig, rng: np.random.Generator) -> Zones:
    """Zone centroids uniform in a disc around the city centre at the origin."""
    r = config.radius_km * np.sqrt(rng.random(config.n_zones))
    theta = 2 * math.pi * rng.random(config.n_zones)
    coords = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    centre = np.maximum(np.hypot(coords[:, 0], coords[:, 1]), config.min_distance_km)
    return Zones(coords, centre)


def synthesize_mobility(zones: Zones, config: GenConfig):
    """Travel times, alternative modes, carsharing service and cost model.

    Road distances are the Euclidean distances between centroids times a
    detour factor, with a floor for trips inside a zone.
    """
    xy = np.asarray(zones.coords)
    euclid = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    dist = np.maximum(config.detour_factor * euclid, config.min_distance_km)
    n = len(dist)
    t_cs = dist / config.car_speed * 60.0
    zeros = np.zeros((n, n))
    everywhere = np.ones(n, dtype=bool)
    pt = AlternativeMode("pt", everywhere, np.full((n, n), config.pt_price), t_pt=dist / config.pt_speed * 60.0,
                         t_bike=zeros, t_walk=np.full((n, n), config.pt_walk), t_wait=np.full((n, n), config.pt_wait))
    bike = AlternativeMode("bike", everywhere, zeros, t_pt=zeros, t_bike=dist / config.bike_speed * 60.0,
                           t_walk=zeros, t_wait=zeros)
    service = CarsharingService(config.per_minute_fee, t_cs, np.full((n, n), config.cs_walk), zeros)
    costs = cost_model(t_cs, config)
    return (pt, bike), service, costs


def cost_model(t_cs, config: GenConfig) -> CostModel:
    """Fuel cost of a rental and relocation cost (fuel plus driver time, free in place)."""
    t_cs = np.asarray(t_cs, dtype=float)
    km = config.car_speed * t_cs / 60.0
    usage = km * config.consumption * config.fuel_price
    relocation = usage + config.driver_salary * t_cs
    np.fill_diagonal(relocation, 0.0)
    return CostModel(relocation, usage, fuel_price=config.fuel_price, consumption=config.consumption,
                     driver_salary=config.driver_salary, speed=config.car_speed)


def draw_profiles(config: GenConfig, rng: np.random.Generator) -> np.ndarray:
    """(K, 6) utility coefficients in the column order of ``BETA_FIELDS``."""
    k = config.n_customers
    base = np.array([BETA_DEFAULTS[f] for f in ("cs", "pt", "bike", "walk", "wait")])
    if not config.individual_profiles:
        price = rng.choice(BETA_PRICE_CLASSES, size=k)
        return np.column_stack([price, np.tile(base, (k, 1))])
    lo, hi = min(BETA_PRICE_CLASSES), max(BETA_PRICE_CLASSES)
    price = rng.uniform(lo, hi, size=k)
    # coefficients are negative, so 1.2*beta is the lower end
    others = rng.uniform(1.2 * base, 0.8 * base, size=(k, len(base)))
    return np.column_stack([price, others])


def _all_utilities(instance: Instance) -> np.ndarray:
    """Deterministic utility of every available option for every customer."""
    cu = instance.customers
    o, d = cu.origin, cu.destination
    values = []
    cs = instance.carsharing
    ladder = instance.fee_ladder
    level = ladder.index_of(0.0) if 0.0 in ladder.levels else ladder.nearest_index(0.0)
    price = cs.per_minute_fee * cs.drive_time[o, d] + ladder.levels[level]
    values.append(deterministic_utility(cu.beta, price, cs.drive_time[o, d], 0.0, 0.0,
                                        cs.walk_time[o, d], cs.wait_time[o, d]))
    for mode in instance.alternatives:
        u = deterministic_utility(cu.beta, mode.price[o, d], 0.0, mode.t_pt[o, d], mode.t_bike[o, d],
                                  mode.t_walk[o, d], mode.t_wait[o, d])
        values.append(np.asarray(u)[mode.available[o]])
    return np.concatenate([np.atleast_1d(v) for v in values])


def calibrate_sigma(instance: Instance) -> float:
    """Population std of all deterministic utilities, floored at ``SIGMA_FLOOR``."""
    u = _all_utilities(instance)
    if not len(u):
        return SIGMA_FLOOR
    return max(float(np.std(u)), SIGMA_FLOOR)


def gumbel_parameters(sigma: float) -> tuple:
    """(location, scale) of the zero-mean Gumbel law with standard deviation ``sigma``."""
    scale = sigma * math.sqrt(6.0) / math.pi
    return -EULER_GAMMA * scale, scale


def sample_scenarios(instance: Instance, n_scenarios: int, seed) -> list:
    """Equiprobable scenarios of iid Gumbel terms, one per customer and mode.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`; scenario
    ``s`` uses child ``s`` of it, so prefixes are stable in ``n_scenarios``.
    """
    if n_scenarios <= 0:
        raise ValueError("need at least one scenario")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    loc, scale = gumbel_parameters(instance.sigma)
    shape = (instance.n_customers, 1 + len(instance.alternatives))
    out = []
    for child in ss.spawn(n_scenarios):
        draws = np.random.default_rng(child).gumbel(loc, scale, size=shape)
        out.append(Scenario(draws, 1.0 / n_scenarios))
    return out


def generate_instance(config: GenConfig) -> Instance:
    s = config.streams()
    zones = draw_zones(config, np.random.default_rng(s["zones"]))
    alternatives, service, costs = synthesize_mobility(zones, config)
    origin, destination = partition_customers(config, zones, np.random.default_rng(s["customers"]))
    initial = place_vehicles(config, zones, np.random.default_rng(s["vehicles"]))
    beta = draw_profiles(config, np.random.default_rng(s["profiles"]))
    instance = Instance(zones, Customers(origin, destination, beta), Vehicles(initial), alternatives,
                        service, FeeLadder(config.fee_levels), costs, sigma=1.0)
    return dataclasses.replace(instance, sigma=calibrate_sigma(instance))


def generate(config: GenConfig):
    """Instance plus ``config.n_scenarios`` scenarios."""
    instance = generate_instance(config)
    return instance, sample_scenarios(instance, config.n_scenarios, config.streams()["scenarios"])
