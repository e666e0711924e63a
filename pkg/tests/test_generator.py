import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carshare_opt import generator as gen
from carshare_opt.domain import FeeLadder, Zones, instance_to_dict, scenarios_to_dict, validate

from _helpers import crafted_instance


def zones_with(distances):
    d = np.asarray(distances, dtype=float)
    return Zones(np.column_stack([d, np.zeros_like(d)]), d)


def multinomial_within_3_sigma(counts, p):
    n = counts.sum()
    sd = np.sqrt(n * p * (1 - p))
    return np.all(np.abs(counts - n * p) <= 3 * sd)


def test_zone_probability_examples():
    np.testing.assert_allclose(gen.zone_probabilities([2, 2], 0.5), [0.5, 0.5])
    np.testing.assert_allclose(gen.zone_probabilities([1, 3], 0.0), [0.25, 0.75])


def test_zone_probabilities_hand_evaluation():
    # mean distance 2, so the centrality offsets are -1, 0, +1
    w = [math.exp(0.8) * 1, math.exp(0.0) * 2, math.exp(-0.8) * 3]
    expected = [x / sum(w) for x in w]
    np.testing.assert_allclose(gen.zone_probabilities([1, 2, 3], 0.8), expected, rtol=1e-12)


@pytest.mark.parametrize("bad", [[1, 0], [1, -2], [], [1, np.inf]])
def test_zone_probabilities_rejects_bad_distances(bad):
    with pytest.raises(ValueError):
        gen.zone_probabilities(bad, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 50), min_size=1, max_size=12), st.floats(0, 1))
def test_zone_probabilities_form_a_distribution(d, alpha):
    p = gen.zone_probabilities(d, alpha)
    assert np.all(p > 0)
    assert p.sum() == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 20), min_size=2, max_size=8, unique=True))
def test_alpha_shifts_mass_towards_the_centre(d):
    lo, hi = gen.zone_probabilities(d, 0.1), gen.zone_probabilities(d, 0.9)
    assert hi @ np.asarray(d) <= lo @ np.asarray(d) + 1e-9


def test_uniform_origins_for_equal_distances():
    cfg = gen.GenConfig(n_zones=4, n_customers=100_000, alpha_from=0.0, alpha_to=0.0)
    origin, dest = gen.partition_customers(cfg, zones_with([2, 2, 2, 2]), np.random.default_rng(0))
    assert multinomial_within_3_sigma(np.bincount(origin, minlength=4), np.full(4, 0.25))
    assert np.all(origin != dest)


def test_two_zones_force_the_other_destination():
    cfg = gen.GenConfig(n_zones=2, n_customers=5000)
    origin, dest = gen.partition_customers(cfg, zones_with([1, 5]), np.random.default_rng(1))
    assert np.all(dest == 1 - origin)


def test_destinations_follow_renormalised_weights():
    d = [0.5, 1.0, 2.0, 4.0]
    cfg = gen.GenConfig(n_zones=4, n_customers=100_000, alpha_to=0.7)
    origin, dest = gen.partition_customers(cfg, zones_with(d), np.random.default_rng(2))
    for i in range(4):
        p = gen.zone_probabilities(d, 0.7)
        p[i] = 0
        p /= p.sum()
        counts = np.bincount(dest[origin == i], minlength=4)
        assert counts[i] == 0
        assert multinomial_within_3_sigma(counts, p)


def test_higher_alpha_draws_more_central_origins():
    d = np.array([0.5, 1.0, 2.0, 4.0, 6.0])
    delta = d - d.mean()
    means = []
    for alpha in (0.8, 0.2):
        cfg = gen.GenConfig(n_zones=5, n_customers=100_000, alpha_from=alpha)
        origin, _ = gen.partition_customers(cfg, zones_with(d), np.random.default_rng(3))
        means.append(delta[origin].mean())
    assert means[0] < means[1]


def test_vehicle_placement():
    cfg = gen.GenConfig(n_zones=4, n_vehicles=100_000, alpha_v=0.0)
    counts = np.bincount(gen.place_vehicles(cfg, zones_with([3, 3, 3, 3]), np.random.default_rng(4)), minlength=4)
    assert multinomial_within_3_sigma(counts, np.full(4, 0.25))
    cfg = gen.GenConfig(n_zones=3, n_vehicles=10_000, alpha_v=0.0)
    placed = gen.place_vehicles(cfg, zones_with([1, 1, 1e4]), np.random.default_rng(5))
    assert np.mean(placed == 2) > 0.99
    again = gen.place_vehicles(cfg, zones_with([1, 1, 1e4]), np.random.default_rng(5))
    np.testing.assert_array_equal(placed, again)


def test_mobility_examples():
    cfg = gen.GenConfig()
    t = gen.synthesize_mobility(Zones([[0, 0], [8.333333333333334 / 1.25, 0]], [0.2, 1.0]), cfg)[1].drive_time
    assert t[0, 1] == pytest.approx(10.0)
    costs = gen.cost_model(np.array([[0.0, 12.0], [12.0, 0.0]]), cfg)  # 10 km at 50 km/h
    assert costs.usage[0, 1] == pytest.approx(0.9280)
    assert np.all(np.diag(costs.relocation) == 0)
    assert costs.relocation[0, 1] == pytest.approx(0.928 + 0.20 * 12.0)


def test_profiles():
    cfg = gen.GenConfig(n_customers=2000)
    beta = gen.draw_profiles(cfg, np.random.default_rng(0))
    assert np.all(beta[:, 1] == -1.0)
    assert set(np.unique(beta[:, 0])) <= {-70.63, -188.33}
    ind = gen.draw_profiles(dataclasses.replace(cfg, individual_profiles=True), np.random.default_rng(0))
    assert np.all((ind[:, 0] >= -188.33) & (ind[:, 0] <= -70.63))
    assert np.all((ind[:, 2] >= -2.4) & (ind[:, 2] <= -1.6))
    assert np.all((ind[:, 1] >= -1.2) & (ind[:, 1] <= -0.8))


def test_sigma_floor_for_identical_utilities():
    inst = crafted_instance([(1, 0), (3, 0)], [0, 1], [1, 0], [0], beta=np.zeros((2, 6)))
    assert gen.calibrate_sigma(inst) == gen.SIGMA_FLOOR


def test_sigma_two_point_example():
    inst = crafted_instance([(1, 0), (3, 0)], [0], [1], [0], fee_levels=(0.0,),
                            beta=[[-1.0, 0, 0, 0, 0, 0]])
    pt = dataclasses.replace(inst.alternatives[0], price=np.full((2, 2), 20.0))
    drive = inst.carsharing.drive_time[0, 1]
    cs = dataclasses.replace(inst.carsharing, per_minute_fee=10.0 / drive)
    inst = dataclasses.replace(inst, alternatives=(pt,), carsharing=cs)
    assert gen.calibrate_sigma(inst) == pytest.approx(5.0)


def test_sigma_matches_recomputation():
    inst = gen.generate_instance(gen.GenConfig(n_zones=10, n_customers=200, n_vehicles=50, seed=11))
    values = []
    zero = list(inst.fee_ladder.levels).index(0.0)
    cs = inst.carsharing
    for k in range(inst.n_customers):
        b = inst.customers.beta[k]
        i, j = inst.customers.origin[k], inst.customers.destination[k]
        walk = cs.walk_time[i, j]
        price = cs.per_minute_fee * cs.drive_time[i, j] + inst.fee_ladder.levels[zero]
        values.append(b[0] * price + b[1] * cs.drive_time[i, j] + math.ceil(walk / 10) * b[4] * walk
                      + b[5] * cs.wait_time[i, j])
        for m in inst.alternatives:
            tb, tw = m.t_bike[i, j], m.t_walk[i, j]
            values.append(b[0] * m.price[i, j] + b[2] * m.t_pt[i, j] + math.ceil(tb / 10) * b[3] * tb
                          + math.ceil(tw / 10) * b[4] * tw + b[5] * m.t_wait[i, j])
    mean = sum(values) / len(values)
    sd = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    assert inst.sigma == pytest.approx(sd, rel=1e-10)


def test_gumbel_moments():
    n = 10_000
    inst = crafted_instance([(1, 0), (3, 0)], [0] * n, [1] * n, [0], sigma=2.0)
    draws = np.concatenate([s.draws.ravel() for s in gen.sample_scenarios(inst, 34, 9)])
    assert draws.size >= 1_000_000
    assert abs(draws.mean()) <= 0.01 * 2.0
    assert draws.std() == pytest.approx(2.0, rel=0.01)


def test_degenerate_sigma_draws_vanish():
    inst = crafted_instance([(1, 0), (3, 0)], [0] * 100, [1] * 100, [0], sigma=gen.SIGMA_FLOOR)
    for s in gen.sample_scenarios(inst, 3, 0):
        assert np.all(np.abs(s.draws) < 1e-6)


def test_scenario_prefixes_are_stable():
    inst = crafted_instance([(1, 0), (3, 0)], [0, 1], [1, 0], [0])
    short, long = gen.sample_scenarios(inst, 2, 5), gen.sample_scenarios(inst, 4, 5)
    for a, b in zip(short, long):
        np.testing.assert_array_equal(a.draws, b.draws)
    assert sum(s.weight for s in long) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        gen.sample_scenarios(inst, 0, 5)


def test_generation_is_deterministic_and_valid():
    cfg = gen.GenConfig(n_zones=6, n_customers=30, n_vehicles=8, n_scenarios=3, individual_profiles=True, seed=42)
    files = []
    for _ in range(2):
        inst, scen = gen.generate(cfg)
        assert validate(inst) == []
        files.append(json.dumps(instance_to_dict(inst)) + json.dumps(scenarios_to_dict(inst, scen)))
    assert files[0] == files[1]
    other = gen.generate(dataclasses.replace(cfg, seed=43))
    assert json.dumps(instance_to_dict(other[0])) != json.dumps(instance_to_dict(gen.generate(cfg)[0]))
    assert isinstance(inst.fee_ladder, FeeLadder)


@pytest.mark.parametrize("kwargs", [{"alpha_v": 1.5}, {"n_customers": 0}, {"n_zones": 1},
                                    {"fee_levels": (1.0, 0.0)}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        gen.GenConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = gen.GenConfig(seed=3, individual_profiles=True)
    assert gen.GenConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ValueError, match="unknown"):
        gen.GenConfig.from_dict({"zones": 3})
