"""Shared builders and oracles for the test-suite."""
from __future__ import annotations

import functools

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from carshare_opt import lp as lpk
from carshare_opt.domain import Customers, FeeLadder, Instance, Scenario, Vehicles, Zones
from carshare_opt.generator import GenConfig, generate, synthesize_mobility

IDENTICAL_BETA = (-70.63, -1.0, -2.0, -2.5, -3.0, -6.0)


def tiny_config(seed: int, **overrides) -> GenConfig:
    """Random tiny configuration: |I|<=3, |V|<=3, |K|<=5, |L|<=3, |S|<=3."""
    rng = np.random.default_rng([seed, 12345])
    ladders = [(-1.0, 0.0, 1.0), (-1.0, 1.0), (0.0, 2.0), (-2.0, 0.0, 2.0)]
    d = dict(n_zones=int(rng.integers(2, 4)), n_customers=int(rng.integers(1, 6)),
             n_vehicles=int(rng.integers(1, 4)), n_scenarios=int(rng.integers(1, 4)),
             alpha_from=float(rng.random()), alpha_to=float(rng.random()), alpha_v=float(rng.random()),
             individual_profiles=bool(rng.random() < 0.5), fee_levels=ladders[int(rng.integers(len(ladders)))],
             seed=seed)
    d.update(overrides)
    return GenConfig(**d)


@functools.lru_cache(maxsize=None)
def tiny_case(seed: int):
    return generate(tiny_config(seed))


def crafted_instance(coords, origins, destinations, initial, fee_levels=(-1.0, 0.0, 1.0), beta=None,
                     sigma=1.0) -> Instance:
    """Hand-built instance on the generator's mobility model."""
    coords = np.asarray(coords, dtype=float)
    zones = Zones(coords, np.maximum(np.hypot(coords[:, 0], coords[:, 1]), 0.2))
    config = GenConfig(n_zones=max(2, len(coords)))
    alternatives, service, costs = synthesize_mobility(zones, config)
    k = len(origins)
    beta = np.tile(IDENTICAL_BETA, (k, 1)) if beta is None else np.asarray(beta, dtype=float)
    return Instance(zones, Customers(origins, destinations, beta.reshape(k, 6)), Vehicles(initial),
                    alternatives, service, FeeLadder(fee_levels), costs, sigma)


def scenarios_from(draws_list) -> list:
    w = 1.0 / len(draws_list)
    return [Scenario(np.asarray(d, dtype=float), w) for d in draws_list]


def milp_optimum(model: lpk.LinearProgram) -> float:
    """Optimal value of a maximisation MILP with HiGHS' branch-and-bound."""
    a = model.sparse_matrix()
    b = model.rhs()
    senses = model.senses()
    lo = np.array([-np.inf if s == lpk.LE else rhs for s, rhs in zip(senses, b)])
    hi = np.array([np.inf if s == lpk.GE else rhs for s, rhs in zip(senses, b)])
    cons = [LinearConstraint(a, lo, hi)] if model.n_rows else []
    res = milp(-model.objective, constraints=cons, integrality=model.integer.astype(int),
               bounds=Bounds(model.lower, model.upper))
    assert res.status == 0, res.message
    return -res.fun


def random_subproblem(rng: np.random.Generator, max_requests: int = 8, max_vehicles: int = 4):
    """Random request set with a random first stage; revenues may be negative."""
    from carshare_opt.domain import FirstStageSolution, RequestSet
    n = int(rng.integers(2, 4))
    n_lev = int(rng.integers(1, 4))
    n_req = int(rng.integers(0, max_requests + 1))
    n_veh = int(rng.integers(0, max_vehicles + 1))
    origin = rng.integers(n, size=n_req)
    dest = (origin + rng.integers(1, n, size=n_req)) % n
    lmax = rng.integers(n_lev, size=n_req)
    base = rng.normal(0.5, 1.5, size=(n_req, 1))
    revenue = base + np.arange(n_lev)[None, :]
    req = RequestSet(np.sort(rng.choice(50, n_req, replace=False)), origin, dest, lmax, revenue)
    fs = FirstStageSolution(rng.integers(n, size=n_veh), rng.integers(n_lev, size=(n, n)))
    return req, fs, n, n_lev


def binary_points(n_zones: int, n_vehicles: int, n_levels: int):
    """Every integer first stage: all placements times all fee matrices (diagonal included)."""
    import itertools
    from carshare_opt.domain import FirstStageSolution
    for placement in itertools.product(range(n_zones), repeat=n_vehicles):
        for fees in itertools.product(range(n_levels), repeat=n_zones * n_zones):
            yield FirstStageSolution(np.array(placement, dtype=np.int64),
                                     np.array(fees, dtype=np.int64).reshape(n_zones, n_zones))


def point_matrices(points, n_zones: int, n_levels: int):
    """Flattened (z, lam) of each point, for evaluating many cut right-hand sides at once."""
    z = np.array([p.z(n_zones).ravel() for p in points])
    lam = np.array([p.lam(n_levels).ravel() for p in points])
    return z, lam


def cut_rhs(cut, z_rows, lam_rows) -> np.ndarray:
    return cut.constant + z_rows @ cut.z_coef.ravel() + lam_rows @ cut.lam_coef.ravel()


@functools.lru_cache(maxsize=None)
def pricing_case(seed: int):
    """Tiny case whose fee ladder contains the zero fee (needed for a fixed-fee baseline)."""
    cfg = tiny_config(seed)
    if 0.0 not in cfg.fee_levels:
        cfg = tiny_config(seed, fee_levels=(-1.0, 0.0, 1.0))
    return generate(cfg)
