"""Study designs: dynamic vs fixed pricing, no relocation, sample-size sweeps."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .choice import RequestPreprocessor
from .domain import FirstStageSolution, Instance, SolveReport
from .generator import GenConfig, generate_instance, sample_scenarios
from .lshaped import solve
from .recourse import greedy_recourse

PRESETS = {
    "D1": (0.2, 0.8, 0.2),
    "D2": (0.8, 0.2, 0.8),
    "D3": (0.8, 0.8, 0.2),
    "D4": (0.2, 0.2, 0.8),
}


def preset_distribution(tag: str) -> tuple:
    """``(alpha_v, alpha_from, alpha_to)`` of a named spatial configuration."""
    try:
        return PRESETS[tag.upper()]
    except KeyError:
        raise ValueError(f"unknown preset {tag!r}; expected one of {sorted(PRESETS)}") from None


def preset_config(tag: str, **overrides) -> GenConfig:
    alpha_v, alpha_from, alpha_to = preset_distribution(tag)
    base = dict(n_zones=10, n_customers=200, n_vehicles=50, n_scenarios=10)
    base.update(overrides)
    return GenConfig(alpha_v=alpha_v, alpha_from=alpha_from, alpha_to=alpha_to, **base)


@dataclasses.dataclass
class StudyRow:
    label: str
    expected_profit: float
    profit_pct_of_reference: float
    pct_vehicles_relocated: float
    min_requests: int
    max_requests: int
    min_admissible: int
    max_admissible: int
    expected_pct_requests_satisfied: float
    best_bound: float
    gap: float
    gap_root: float | None
    gap_50: float | None
    elapsed: float
    seed: int | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


CSV_HEADER = [f.name for f in dataclasses.fields(StudyRow)]


def solution_metrics(instance: Instance, scenarios, fs: FirstStageSolution, requests=None) -> dict:
    """Operational figures of a first stage across the scenarios."""
    if requests is None:
        requests = RequestPreprocessor().fit_transform(instance, scenarios)
    sizes = [len(r) for r in requests]
    admissible = []
    satisfied = 0.0
    for scen, req in zip(scenarios, requests):
        posted = fs.fees[req.origin, req.destination] if len(req) else np.zeros(0, dtype=np.int64)
        admissible.append(int(np.sum(posted <= req.lmax)))
        if len(req):
            satisfied += scen.weight * len(greedy_recourse(req, fs).assignment) / len(req) * 100.0
    moved = fs.placement != instance.vehicles.initial_zone
    return {
        "pct_vehicles_relocated": 100.0 * float(np.mean(moved)) if len(moved) else 0.0,
        "min_requests": min(sizes), "max_requests": max(sizes),
        "min_admissible": min(admissible), "max_admissible": max(admissible),
        "expected_pct_requests_satisfied": satisfied,
    }


def _row(label, instance, scenarios, report: SolveReport, fs, reference: float | None, requests) -> StudyRow:
    profit = report.best_integer
    pct = 100.0 if reference is None else (100.0 * profit / reference if reference else math.nan)
    return StudyRow(label, profit, pct, best_bound=report.best_bound, gap=report.gap, gap_root=report.gap_root,
                    gap_50=report.gap_50, elapsed=report.elapsed, seed=report.seed,
                    **solution_metrics(instance, scenarios, fs, requests))


def compare_pricing(instance: Instance, scenarios, **params) -> list:
    """Rows for dynamic pricing and for every fee pinned to the zero-value level.

    The fixed-fee run goes first; its solution seeds the dynamic run, which
    is therefore never worse.
    """
    ladder = instance.fee_ladder
    if not np.any(np.abs(ladder.levels) <= 1e-9):
        raise ValueError("the fee ladder has no zero fee")
    zero = ladder.index_of(0.0)
    requests = RequestPreprocessor().fit_transform(instance, scenarios)
    seeds = list(params.pop("initial_solutions", None) or [])
    fixed_report, fixed = solve(instance, scenarios, fixed_fee_level=zero, initial_solutions=seeds, **params)
    dyn_report, dyn = solve(instance, scenarios, initial_solutions=seeds + [fixed], **params)
    dyn_row = _row("dynamic", instance, scenarios, dyn_report, dyn, None, requests)
    fixed_row = _row("fixed", instance, scenarios, fixed_report, fixed, dyn_report.best_integer, requests)
    return [dyn_row, fixed_row]


def no_relocation_study(instance: Instance, scenarios, **params) -> list:
    """Rows with free relocation and with every vehicle kept in its initial zone."""
    requests = RequestPreprocessor().fit_transform(instance, scenarios)
    seeds = list(params.pop("initial_solutions", None) or [])
    stay_report, stay = solve(instance, scenarios, fix_placement=True, initial_solutions=seeds, **params)
    free_report, free = solve(instance, scenarios, initial_solutions=seeds + [stay], **params)
    return [_row("relocation", instance, scenarios, free_report, free, None, requests),
            _row("no-relocation", instance, scenarios, stay_report, stay, free_report.best_integer, requests)]


def profit_ratio(rows) -> float:
    """Restricted over unrestricted expected profit."""
    full, restricted = rows[0].expected_profit, rows[1].expected_profit
    return restricted / full if full else math.nan


def scenario_sweep(config: GenConfig, sample_sizes, **params) -> list:
    """Solve one instance with fresh iid samples of each size; one dict per size."""
    instance = generate_instance(config)
    out = []
    for size in sample_sizes:
        seq = np.random.SeedSequence([config.seed, int(size)])
        scenarios = sample_scenarios(instance, int(size), seq)
        report, _ = solve(instance, scenarios, seed=config.seed, **params)
        out.append({"n_scenarios": int(size), "seed": config.seed, "best_integer": report.best_integer,
                    "best_bound": report.best_bound, "gap": report.gap, "gap_root": report.gap_root,
                    "gap_50": report.gap_50, "elapsed": report.elapsed, "nodes": report.node_count,
                    "status": report.status})
    return out


SWEEP_HEADER = ["n_scenarios", "seed", "best_integer", "best_bound", "gap", "gap_root", "gap_50", "elapsed",
                "nodes", "status"]


def write_csv(rows, path, header=None) -> None:
    dicts = [r.to_dict() if hasattr(r, "to_dict") else dict(r) for r in rows]
    header = header or (list(dicts[0]) if dicts else CSV_HEADER)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for d in dicts:
            writer.writerow({k: ("" if d.get(k) is None else d.get(k)) for k in header})


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(command: str, config: dict, seeds=None) -> dict:
    """Run manifest: what was run, with which seeds and library versions."""
    import scipy
    import sklearn
    return {"command": command, "config": config, "seeds": seeds,
            "versions": {"carshare_opt": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}}


def write_manifest(path, command: str, config: dict, seeds=None) -> None:
    Path(path).write_text(json.dumps(manifest(command, config, seeds), indent=2, default=str) + "\n")


def format_table(rows: list, columns=None) -> str:
    """Plain-text table of dict rows (used by the ``report`` command)."""
    if not rows:
        return "(no rows)"
    columns = columns or list(rows[0])

    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        try:
            return f"{float(v):.4g}" if v not in ("", None) and not str(v).isdigit() else str(v)
        except ValueError:
            return str(v)
    cells = [[fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[k]) for row in cells)) for k, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
