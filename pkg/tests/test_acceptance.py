"""Acceptance suite: one recorded PASS/FAIL line per headline criterion."""
import math
import time

import numpy as np
import pytest

from carshare_opt import analysis
from carshare_opt import lshaped as ls
from carshare_opt.choice import compute_requests, utility_tables
from carshare_opt.domain import Scenario
from carshare_opt.extensive import brute_force_solve, nested_saa_enumeration
from carshare_opt.generator import gumbel_parameters, generate
from carshare_opt.ils import fitness, ils, ils_gap
from carshare_opt.lshaped import evaluate_first_stage, gap_percent, solve
from carshare_opt.recourse import brute_force_recourse, feasible_recourse_assignments, greedy_recourse, \
    greedy_value, lower_bound, upper_bound
from carshare_opt.choice import RequestPreprocessor

from _helpers import (binary_points, crafted_instance, point_matrices, pricing_case, random_subproblem,
                      scenarios_from, tiny_case, tiny_config)

N_TINY = 100
MEDIUM = dict(n_zones=10, n_vehicles=50, n_customers=200, n_scenarios=10)


def expected_gap(bound, value):
    if value == 0 or not math.isfinite(value):
        return math.inf
    return 100.0 * abs(bound - value) / abs(value)


def check_report(report):
    assert report.best_bound >= report.best_integer - 1e-9, (report.best_bound, report.best_integer)
    assert report.gap == expected_gap(report.best_bound, report.best_integer)
    assert report.gap_root is not None and report.gap_root >= report.gap - 1e-9
    values = [v for _, v in report.incumbent_trace]
    assert values == sorted(values)


def test_triple_oracle_equivalence(criterion):
    with criterion("triple-oracle equivalence on 100 tiny instances"):
        start = time.perf_counter()
        for seed in range(N_TINY):
            inst, scen = tiny_case(seed)
            report, sol = solve(inst, scen, target_gap=0.0)
            bf, _ = brute_force_solve(inst, scen)
            nested, _ = nested_saa_enumeration(inst, scen)
            assert abs(report.best_integer - bf) <= 1e-6, (seed, report.best_integer, bf)
            assert abs(nested - bf) <= 1e-6, (seed, nested, bf)
            assert evaluate_first_stage(inst, scen, sol) == pytest.approx(report.best_integer, abs=1e-9)
        elapsed = time.perf_counter() - start
        criterion.note(f"{N_TINY} instances in {elapsed:.1f} s")
        assert elapsed < 120.0


def test_greedy_exactness(criterion):
    with criterion("greedy recourse exactness on 1000 subproblems"):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        for case in range(1000):
            req, fs, _, _ = random_subproblem(rng)
            greedy = greedy_recourse(req, fs)
            brute = brute_force_recourse(req, fs)
            assert greedy.value == brute.value, (case, greedy.value, brute.value)
            served = {frozenset(r for _, r, _ in a) for a in feasible_recourse_assignments(req, fs)}
            assert served == {greedy.served}, case
        assert time.perf_counter() - start < 30.0


def _cut_case(seed):
    # enumeration of every binary point needs few zones, levels and vehicles
    if seed % 5 == 4:
        cfg = tiny_config(seed, n_zones=3, n_vehicles=min(2, tiny_config(seed).n_vehicles), fee_levels=(-1.0, 1.0))
    else:
        cfg = tiny_config(seed, n_zones=2)
    return generate(cfg)


def test_cut_validity_by_enumeration(criterion, monkeypatch):
    with criterion("optimality and relaxation cuts valid at every binary point"):
        recorded = []
        original = ls._BranchAndCut.add_cut

        def spy(self, cut):
            recorded.append(cut)
            return original(self, cut)

        monkeypatch.setattr(ls._BranchAndCut, "add_cut", spy)
        violations = n_opt = n_rel = 0
        for seed in range(25):
            inst, scen = _cut_case(seed)
            recorded.clear()
            solve(inst, scen, target_gap=0.0)
            solve(inst, scen, target_gap=0.0, root_relaxation_cuts=True, relax_cuts_all_scenarios=True,
                  use_vi=False)
            if not recorded:
                continue
            n, v, n_lev = inst.n_zones, inst.n_vehicles, inst.n_levels
            points = list(binary_points(n, v, n_lev))
            z, lam = point_matrices(points, n, n_lev)
            requests = RequestPreprocessor().fit_transform(inst, scen)
            q = np.array([[greedy_value(r, p.placement.tolist(), p.fees.tolist()) for r in requests]
                          for p in points])
            u = np.array([upper_bound(r) for r in requests])
            keys = [p.key() for p in points]
            for cut in recorded:
                rhs = cut.constant + z @ cut.z_coef.ravel() + lam @ cut.lam_coef.ravel()
                s = cut.scenario
                if cut.kind == "optimality":
                    n_opt += 1
                    at = keys.index(cut.generator.key())
                    tight = abs(rhs[at] - q[at, s]) <= 1e-7
                    others = np.delete(rhs, at) >= u[s] - 1e-7
                    violations += (not tight) + int((~others).sum())
                elif cut.kind == "relaxation":
                    n_rel += 1
                    violations += int((rhs < q[:, s] - 1e-7).sum())
        criterion.note(f"{n_opt} optimality and {n_rel} relaxation cuts checked")
        assert n_opt > 0 and n_rel > 0
        assert violations == 0


def test_logit_fidelity(criterion):
    with criterion("simulated carsharing choice matches logit within 0.01"):
        rng = np.random.default_rng(77)
        n_draws = 100_000
        informative = 0
        worst = 0.0
        for case in range(10):
            coords = rng.uniform(-4, 4, size=(3, 2))
            o, d = rng.choice(3, size=2, replace=False)
            beta = [-70.63, -rng.uniform(0.5, 2), -rng.uniform(1, 3), -rng.uniform(1, 3), -rng.uniform(2, 4),
                    -rng.uniform(3, 7)]
            probe = crafted_instance(coords, [o], [d], [0], beta=[beta])
            t = utility_tables(probe)
            level = int(rng.integers(probe.n_levels))
            spread = np.std(np.append(t.alt[0], t.cs[0, level]))
            sigma = max(1.0, float(spread))
            # identical customers in one scenario are independent replicas of one customer
            inst = crafted_instance(coords, [o] * n_draws, [d] * n_draws, [0], beta=[beta] * n_draws, sigma=sigma)
            loc, scale = gumbel_parameters(sigma)
            draws = rng.gumbel(loc, scale, size=(n_draws, 1 + len(inst.alternatives)))
            req = compute_requests(inst, Scenario(draws, 1.0))
            freq = np.sum(req.lmax >= level) / n_draws
            v = np.append(t.cs[0, level], t.alt[0][t.available[0]]) / scale
            prob = float(np.exp(v[0] - v.max()) / np.exp(v - v.max()).sum())
            worst = max(worst, abs(freq - prob))
            assert abs(freq - prob) <= 0.01, (case, freq, prob)
            informative += 0.02 < prob < 0.98
        criterion.note(f"largest deviation {worst:.4f}; {informative} cases with probability in (0.02, 0.98)")
        assert informative >= 3


def test_bound_invariants(criterion):
    with criterion("bound invariants and gap formulas"):
        for seed in range(30):
            inst, scen = tiny_case(seed)
            for gap in (0.0, 1e-4):
                check_report(solve(inst, scen, target_gap=gap)[0])
        inst, scen = generate(tiny_config(5, n_zones=5, n_customers=40, n_vehicles=8, n_scenarios=3))
        check_report(solve(inst, scen, time_limit=1.0)[0])
        assert gap_percent(110, 100) == 10.0 and gap_percent(5, 0) == math.inf
        rng = np.random.default_rng(9)
        for _ in range(10_000):
            inst, scen = tiny_case(int(rng.integers(N_TINY)))
            s = int(rng.integers(len(scen)))
            req = RequestPreprocessor().fit_transform(inst, scen)[s]
            placement = rng.integers(inst.n_zones, size=inst.n_vehicles)
            fees = rng.integers(inst.n_levels, size=(inst.n_zones, inst.n_zones))
            q = greedy_value(req, placement.tolist(), fees.tolist())
            assert lower_bound(req) - 1e-9 <= q <= upper_bound(req) + 1e-9


def test_valid_inequality_neutrality(criterion):
    with criterion("valid inequality does not change the optimum"):
        for seed in range(N_TINY):
            inst, scen = tiny_case(seed)
            with_vi = solve(inst, scen, target_gap=0.0, use_vi=True)[0].best_integer
            without = solve(inst, scen, target_gap=0.0, use_vi=False)[0].best_integer
            assert abs(with_vi - without) <= 1e-6, (seed, with_vi, without)


def test_pricing_dominance(criterion):
    with criterion("dynamic pricing dominates fixed fees"):
        for seed in range(N_TINY):
            inst, scen = pricing_case(seed)
            dyn, fixed = analysis.compare_pricing(inst, scen, target_gap=0.0)
            assert dyn.expected_profit >= fixed.expected_profit - 1e-9, seed
        for tag in ("D1", "D2", "D3", "D4"):
            inst, scen = generate(analysis.preset_config(tag, seed=1))
            rows = analysis.compare_pricing(inst, scen, time_limit=30.0)
            ratio = analysis.profit_ratio(rows)
            criterion.note(f"{tag}: dynamic {rows[0].expected_profit:.2f} fixed {rows[1].expected_profit:.2f} "
                  f"ratio {ratio:.4f}")
            assert ratio < 1.0, (tag, ratio)


def test_no_relocation_restriction(criterion):
    with criterion("no-relocation profit ratio at most one"):
        for seed in range(N_TINY):
            inst, scen = tiny_case(seed)
            rows = analysis.no_relocation_study(inst, scen, target_gap=0.0)
            assert rows[1].expected_profit <= rows[0].expected_profit + 1e-9, seed
            if rows[0].expected_profit > 0:
                assert analysis.profit_ratio(rows) <= 1.0 + 1e-12
        inst = crafted_instance([(1, 0), (5, 0)], [0], [1], [1], fee_levels=(0.0, 1.0, 2.0))
        rows = analysis.no_relocation_study(inst, scenarios_from([[[1e3, 0.0, 0.0]]]), target_gap=0.0)
        assert analysis.profit_ratio(rows) < 1.0


def test_ils_validity(criterion):
    with criterion("ILS bounded by the L-shaped bound with exact fitness"):
        for seed in range(30):
            inst, scen = tiny_case(seed)
            res = ils(inst, scen, seed=seed, time_limit=30)
            report = solve(inst, scen, target_gap=0.0)[0]
            assert res.objective <= report.best_bound + 1e-9, seed
            assert res.objective == evaluate_first_stage(inst, scen, res.best.to_first_stage())
            assert fitness(inst, scen, res.best) == res.objective
        assert ils_gap(100, 110) == pytest.approx(10.0)
        assert ils_gap(100, 100) == 0.0
        assert ils_gap(0, 5) == pytest.approx(5e12)


def test_scale_smoke(criterion):
    with criterion("medium instance within a 300 s limit"):
        inst, scen = generate(tiny_config(11, fee_levels=(-1.0, -0.5, 0.0, 0.5, 1.0), **MEDIUM))
        start = time.perf_counter()
        report, sol = solve(inst, scen, time_limit=300.0)
        wall = time.perf_counter() - start
        criterion.note(f"bestInteger {report.best_integer:.2f} bestBound {report.best_bound:.2f} "
              f"gap {report.gap:.3f}% gapR {report.gap_root} gap50 {report.gap_50} in {wall:.0f} s")
        assert wall < 330.0
        assert math.isfinite(report.best_integer)
        assert evaluate_first_stage(inst, scen, sol) == pytest.approx(report.best_integer, rel=1e-9)
        check_report(report)
        d = report.to_dict()
        assert {"gap", "gapR", "gap50"} <= set(d)
        if report.status == "timeLimit":
            assert report.gap_50 is not None
