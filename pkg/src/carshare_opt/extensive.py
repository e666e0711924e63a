"""Extensive-form SAA model, size accounting, MPS export and exhaustive oracles."""
from __future__ import annotations

import dataclasses
import itertools
import math
from pathlib import Path

import numpy as np

from . import lp as lpk
from .choice import RequestPreprocessor
from .domain import FirstStageSolution, Instance
from .recourse import brute_force_recourse, greedy_value

BRUTE_FORCE_LIMIT = 10 ** 6


@dataclasses.dataclass
class SAAModel:
    lp: lpk.LinearProgram
    n_first_stage: int
    requests: list


def build_saa(instance: Instance, scenarios, requests=None) -> SAAModel:
    """Deterministic equivalent over all scenarios as a 0-1 program (maximisation)."""
    if requests is None:
        requests = RequestPreprocessor().fit_transform(instance, scenarios)
    n, n_veh, n_lev = instance.n_zones, instance.n_vehicles, instance.n_levels
    lp = lpk.LinearProgram()
    lp.add_columns(-instance.vehicle_relocation_cost.ravel(), 0.0, 1.0, integer=True,
                   names=[f"z_{v}_{i}" for v in range(n_veh) for i in range(n)])
    n_z = n_veh * n
    lp.add_columns(np.zeros(n * n * n_lev), 0.0, 1.0, integer=True,
                   names=[f"lam_{i}_{j}_{l}" for i in range(n) for j in range(n) for l in range(n_lev)])

    def z(v, i):
        return v * n + i

    def lam(i, j, level):
        return n_z + (i * n + j) * n_lev + level

    for v in range(n_veh):
        lp.add_constraint([z(v, i) for i in range(n)], np.ones(n), lpk.EQ, 1.0, f"place_{v}")
    for i in range(n):
        for j in range(n):
            lp.add_constraint([lam(i, j, l) for l in range(n_lev)], np.ones(n_lev), lpk.EQ, 1.0, f"fee_{i}_{j}")

    for s, (scen, req) in enumerate(zip(scenarios, requests)):
        if not len(req):
            continue
        col = {}
        names, obj = [], []
        start = lp.n_cols
        for r in range(len(req)):
            for v in range(n_veh):
                for level in req.levels(r):
                    col[v, r, level] = start + len(names)
                    names.append(f"y_{v}_{r}_{level}_{s}")
                    obj.append(scen.weight * req.revenue[r, level])
        lp.add_columns(np.array(obj, dtype=float), 0.0, 1.0, integer=True, names=names)

        def ys(v, r):
            return [col[v, r, level] for level in req.levels(r)]

        for r in range(len(req)):
            idx = [c for v in range(n_veh) for c in ys(v, r)]
            lp.add_constraint(idx, np.ones(len(idx)), lpk.LE, 1.0, f"c1_{r}_{s}")
        for v in range(n_veh):
            idx = [c for r in range(len(req)) for c in ys(v, r)]
            lp.add_constraint(idx, np.ones(len(idx)), lpk.LE, 1.0, f"c2_{v}_{s}")
        for r1 in range(len(req)):
            i, j = int(req.origin[r1]), int(req.destination[r1])
            for v in range(n_veh):
                earlier = [c for r2 in req.predecessors[r1] for c in ys(v, r2)]
                idx = ys(v, r1) + earlier + [z(v, i)]
                val = [1.0] * (len(idx) - 1) + [-1.0]
                lp.add_constraint(idx, val, lpk.LE, 0.0, f"c4_{r1}_{v}_{s}")
                for l1 in req.levels(r1):
                    idx = [col[v, r1, l1]] + earlier + [col[w, r1, l1] for w in range(n_veh) if w != v]
                    val = [1.0] * len(idx) + [-1.0, -1.0]
                    idx += [lam(i, j, l1), z(v, i)]
                    lp.add_constraint(idx, val, lpk.GE, -1.0, f"c5_{r1}_{v}_{l1}_{s}")
        for r in range(len(req)):
            i, j = int(req.origin[r]), int(req.destination[r])
            for level in req.levels(r):
                idx = [col[v, r, level] for v in range(n_veh)] + [lam(i, j, level)]
                val = [1.0] * n_veh + [-1.0]
                lp.add_constraint(idx, val, lpk.LE, 0.0, f"c7_{r}_{level}_{s}")
    return SAAModel(lp, n_z + n * n * n_lev, list(requests))


def model_size(instance: Instance, requests) -> dict:
    """Closed-form column and row counts of :func:`build_saa`."""
    n, v, n_lev = instance.n_zones, instance.n_vehicles, instance.n_levels
    cols = v * n + n * n * n_lev
    rows = v + n * n
    for req in requests:
        n_req = len(req)
        if not n_req:
            continue
        admissible = int(np.sum(np.asarray(req.lmax) + 1))
        cols += v * admissible
        rows += n_req + v + n_req * v + v * admissible + admissible
    return {"columns": cols, "rows": rows}


# ---------------------------------------------------------------- exhaustive oracles


def enumeration_size(instance: Instance) -> int:
    n = instance.n_zones
    return n ** instance.n_vehicles * instance.n_levels ** (n * n - n)


def _first_stages(instance: Instance):
    """All placements and off-diagonal fee patterns in lexicographic order."""
    n = instance.n_zones
    off = [(i, j) for i in range(n) for j in range(n) if i != j]
    for placement in itertools.product(range(n), repeat=instance.n_vehicles):
        for levels in itertools.product(range(instance.n_levels), repeat=len(off)):
            fees = [[0] * n for _ in range(n)]
            for (i, j), level in zip(off, levels):
                fees[i][j] = level
            yield list(placement), fees


def _check_guard(instance: Instance, limit: int) -> None:
    count = enumeration_size(instance)
    if count > limit:
        raise ValueError(f"enumeration needs {count} first-stage candidates (limit {limit})")


def brute_force_solve(instance: Instance, scenarios, limit: int = BRUTE_FORCE_LIMIT, requests=None):
    """Global optimum by enumerating every first stage; returns ``(objective, solution)``.

    Diagonal OD pairs carry no demand and stay at the lowest level. Ties go to
    the lexicographically first candidate.
    """
    _check_guard(instance, limit)
    if requests is None:
        requests = RequestPreprocessor().fit_transform(instance, scenarios)
    weights = [s.weight for s in scenarios]
    reloc = instance.vehicle_relocation_cost
    best_val, best = -math.inf, None
    for placement, fees in _first_stages(instance):
        val = sum(w * greedy_value(r, placement, fees) for w, r in zip(weights, requests))
        val -= float(sum(reloc[v, i] for v, i in enumerate(placement)))
        if val > best_val:
            best_val, best = val, (placement, fees)
    return best_val, FirstStageSolution(*best)


def nested_saa_enumeration(instance: Instance, scenarios, limit: int = BRUTE_FORCE_LIMIT, requests=None):
    """Like :func:`brute_force_solve` but with recourse from exhaustive search over ``y``.

    Recourse values are memoised on what they depend on: the scenario, the
    placement and the fees posted on the ODs that carry requests.
    """
    _check_guard(instance, limit)
    if requests is None:
        requests = RequestPreprocessor().fit_transform(instance, scenarios)
    memo: dict = {}
    reloc = instance.vehicle_relocation_cost
    best_val, best = -math.inf, None
    for placement, fees in _first_stages(instance):
        fs = None
        val = -float(sum(reloc[v, i] for v, i in enumerate(placement)))
        for s, (scen, req) in enumerate(zip(scenarios, requests)):
            posted = tuple(fees[o][d] for o, d in zip(req.origin.tolist(), req.destination.tolist()))
            key = (s, tuple(placement), posted)
            if key not in memo:
                fs = fs or FirstStageSolution(placement, fees)
                memo[key] = brute_force_recourse(req, fs).value
            val += scen.weight * memo[key]
        if val > best_val:
            best_val, best = val, (placement, fees)
    return best_val, FirstStageSolution(*best)


# ---------------------------------------------------------------- MPS


def _num(x: float) -> str:
    """Shortest repr of ``x`` fitting a 12-character MPS field."""
    x = float(x)
    if x == int(x) and abs(x) < 1e11:
        return str(int(x))
    for digits in range(12, 0, -1):
        s = f"{x:.{digits}g}"
        if len(s) <= 12:
            return s
    raise ValueError(f"cannot fit {x} into an MPS field")


def _line(f1="", f2="", f3="", f4="", f5="", f6="") -> str:
    # fixed MPS fields start at columns 2, 5, 15, 25, 40 and 50
    out = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
    if f5:
        out += f"   {f5:<8}  {f6:>12}"
    return out.rstrip()


def write_mps(lp: lpk.LinearProgram, path, name: str = "CSSAA") -> None:
    """Write a fixed-format MPS file of a maximisation model.

    Columns are named ``C0000000...`` and rows ``R0000000...`` so every name
    fits the 8-character fields; the objective row is ``OBJ``. The sense is
    stated in an ``OBJSENSE MAX`` section and repeated in a comment for
    readers that ignore that section. Integer columns with bounds [0, 1] are
    written as ``BV``.
    """
    if lp.n_cols > 10 ** 7 or lp.n_rows > 10 ** 7:
        raise ValueError("model too large for 8-character MPS names")
    sense_code = {lpk.LE: "L", lpk.GE: "G", lpk.EQ: "E"}
    by_col: list = [[] for _ in range(lp.n_cols)]
    for k, row in enumerate(lp.rows):
        for j, a in zip(row.index.tolist(), row.value.tolist()):
            if a != 0.0:
                by_col[j].append((f"R{k:07d}", a))
    lines = ["* objective sense: MAXIMIZE (negate the objective for minimisation-only readers)",
             f"NAME          {name}", "OBJSENSE", "    MAX", "ROWS", " N  OBJ"]
    lines += [f" {sense_code[row.sense]}  R{k:07d}" for k, row in enumerate(lp.rows)]
    lines.append("COLUMNS")
    in_int = False
    for j in range(lp.n_cols):
        is_int = bool(lp.integer[j])
        if is_int != in_int:
            marker = "'INTORG'" if is_int else "'INTEND'"
            lines.append(f"    MARKER                 'MARKER'                 {marker}")
            in_int = is_int
        entries = ([("OBJ", lp.objective[j])] if lp.objective[j] != 0.0 else []) + by_col[j]
        if not entries:
            entries = [("OBJ", 0.0)]
        for a, b in zip(entries[::2], entries[1::2] + [None] * (len(entries) % 2)):
            if b is None:
                lines.append(_line("", f"C{j:07d}", a[0], _num(a[1])))
            else:
                lines.append(_line("", f"C{j:07d}", a[0], _num(a[1]), b[0], _num(b[1])))
    if in_int:
        lines.append("    MARKER                 'MARKER'                 'INTEND'")
    lines.append("RHS")
    for k, row in enumerate(lp.rows):
        if row.rhs != 0.0:
            lines.append(_line("", "RHS", f"R{k:07d}", _num(row.rhs)))
    lines.append("BOUNDS")
    for j in range(lp.n_cols):
        c = f"C{j:07d}"
        lo, up = float(lp.lower[j]), float(lp.upper[j])
        if lp.integer[j] and lo == 0.0 and up == 1.0:
            lines.append(_line("BV", "BND", c))
            continue
        if lo == -math.inf and up == math.inf:
            lines.append(_line("FR", "BND", c))
            continue
        if lo == -math.inf:
            lines.append(_line("MI", "BND", c))
        elif lo != 0.0:
            lines.append(_line("LO", "BND", c, _num(lo)))
        if up != math.inf:
            lines.append(_line("UP", "BND", c, _num(up)))
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mps(path) -> lpk.LinearProgram:
    """Read back a file written by :func:`write_mps` (maximisation sense)."""
    section = None
    sense = "MAX"
    row_sense: dict = {}
    row_order: list = []
    obj_name = None
    cols: dict = {}
    col_order: list = []
    integer_mode = False
    rhs: dict = {}
    bounds: list = []
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            section = raw.split()[0]
            if section == "OBJSENSE" and len(raw.split()) > 1:
                sense = raw.split()[1]
            continue
        tok = raw.split()
        if section == "OBJSENSE":
            sense = tok[0]
        elif section == "ROWS":
            if tok[0] == "N":
                obj_name = obj_name or tok[1]
            else:
                row_sense[tok[1]] = {"L": lpk.LE, "G": lpk.GE, "E": lpk.EQ}[tok[0]]
                row_order.append(tok[1])
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                integer_mode = tok[2] == "'INTORG'"
                continue
            name = tok[0]
            if name not in cols:
                cols[name] = {"integer": integer_mode, "entries": {}}
                col_order.append(name)
            for k in range(1, len(tok) - 1, 2):
                cols[name]["entries"][tok[k]] = float(tok[k + 1])
        elif section == "RHS":
            for k in range(1, len(tok) - 1, 2):
                rhs[tok[k]] = float(tok[k + 1])
        elif section == "BOUNDS":
            bounds.append(tok)
    index = {name: j for j, name in enumerate(col_order)}
    sign = 1.0 if sense.upper().startswith("MAX") else -1.0
    n = len(col_order)
    lp = lpk.LinearProgram()
    lower = np.zeros(n)
    upper = np.full(n, math.inf)
    integer = np.array([cols[c]["integer"] for c in col_order], dtype=bool)
    for tok in bounds:
        kind, j = tok[0], index[tok[2]]
        val = float(tok[3]) if len(tok) > 3 else None
        if kind == "BV":
            lower[j], upper[j], integer[j] = 0.0, 1.0, True
        elif kind == "UP":
            upper[j] = val
        elif kind == "LO":
            lower[j] = val
        elif kind == "FX":
            lower[j] = upper[j] = val
        elif kind == "FR":
            lower[j], upper[j] = -math.inf, math.inf
        elif kind == "MI":
            lower[j] = -math.inf
        elif kind == "PL":
            upper[j] = math.inf
    obj = np.array([sign * cols[c]["entries"].get(obj_name, 0.0) for c in col_order])
    lp.add_columns(obj, lower, upper, integer=integer, names=col_order)
    per_row: dict = {r: ([], []) for r in row_order}
    for c in col_order:
        for r, a in cols[c]["entries"].items():
            if r != obj_name:
                per_row[r][0].append(index[c])
                per_row[r][1].append(a)
    for r in row_order:
        lp.add_constraint(per_row[r][0], per_row[r][1], row_sense[r], rhs.get(r, 0.0), r)
    return lp
