"""Input validation helpers raising ``ValueError`` with readable messages."""
from __future__ import annotations

import numpy as np

from .domain import FirstStageSolution, Instance, Scenario, validate


def check_instance(instance: Instance) -> Instance:
    if not isinstance(instance, Instance):
        raise TypeError(f"expected an Instance, got {type(instance).__name__}")
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    return instance


def check_scenarios(instance: Instance, scenarios, weight_tol: float = 1e-9) -> list:
    """Scenarios must cover every customer and mode and carry probabilities summing to one."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("at least one scenario is required")
    shape = (instance.n_customers, 1 + len(instance.alternatives))
    for s, scen in enumerate(scenarios):
        if not isinstance(scen, Scenario):
            raise TypeError(f"scenario {s} is a {type(scen).__name__}, not a Scenario")
        if scen.draws.shape != shape:
            raise ValueError(f"scenario {s} has draws of shape {scen.draws.shape}, expected {shape}")
        if not np.all(np.isfinite(scen.draws)):
            raise ValueError(f"scenario {s} has non-finite draws")
        if not scen.weight > 0:
            raise ValueError(f"scenario {s} has non-positive weight")
    total = sum(s.weight for s in scenarios)
    if abs(total - 1.0) > weight_tol * len(scenarios):
        raise ValueError(f"scenario weights sum to {total}, not 1")
    return scenarios


def check_first_stage(instance: Instance, fs: FirstStageSolution) -> FirstStageSolution:
    n = instance.n_zones
    if fs.placement.shape != (instance.n_vehicles,):
        raise ValueError(f"placement has shape {fs.placement.shape}, expected ({instance.n_vehicles},)")
    if fs.fees.shape != (n, n):
        raise ValueError(f"fee matrix has shape {fs.fees.shape}, expected ({n}, {n})")
    if len(fs.placement) and (fs.placement.min() < 0 or fs.placement.max() >= n):
        raise ValueError("placement refers to a zone outside the instance")
    if fs.fees.size and (fs.fees.min() < 0 or fs.fees.max() >= instance.n_levels):
        raise ValueError("fee level index outside the ladder")
    return fs
