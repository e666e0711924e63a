import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carshare_opt.choice import (RequestPreprocessor, carsharing_price, compute_requests, deterministic_utility,
                                 simulate_choices, tau, utility_tables)
from carshare_opt.domain import MODE_CARSHARING, FirstStageSolution
from carshare_opt.lshaped import default_first_stage
from carshare_opt.recourse import greedy_recourse

from _helpers import IDENTICAL_BETA, crafted_instance, scenarios_from, tiny_case


@pytest.mark.parametrize("t, expected", [(0, 0), (10, 1), (10.5, 2), (25, 3)])
def test_tau(t, expected):
    assert tau(t) == expected


def test_tau_rejects_negative_time():
    with pytest.raises(ValueError):
        tau(-1)


def ten_minute_instance(levels=(-2.0, -1.0, 0.0, 1.0, 2.0)):
    # 8.333.. km of road at 50 km/h is a 10 minute drive
    return crafted_instance([(0.5, 0.0), (0.5 + 8.333333333333334 / 1.25, 0.0)], [0], [1], [0], fee_levels=levels)


def test_price_examples():
    inst = ten_minute_instance()
    assert inst.carsharing.drive_time[0, 1] == pytest.approx(10.0)
    assert carsharing_price(inst, 0, 1, 3) == pytest.approx(3.65)
    assert carsharing_price(inst, 0, 1, 2) == pytest.approx(0.265 * 10.0)
    with pytest.raises(IndexError):
        carsharing_price(inst, 0, 1, 5)


def test_negative_price_example():
    # 1.06 EUR of driving minus a 2 EUR rebate
    assert 0.265 * 4.0 + (-2.0) == pytest.approx(-0.94)
    inst = crafted_instance([(0.5, 0.0), (0.5 + 3.3333333333333335 / 1.25, 0.0)], [0], [1], [0],
                            fee_levels=(-2.0, 0.0))
    assert carsharing_price(inst, 0, 1, 0) == pytest.approx(-0.94)


def test_utility_examples():
    beta = IDENTICAL_BETA
    assert deterministic_utility(beta, 2.0, t_pt=20, t_walk=8, t_wait=5) == pytest.approx(-235.26)
    assert deterministic_utility(beta, 0.0) == 0.0
    assert deterministic_utility(beta, 0.0, t_walk=25) == pytest.approx(-225.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 60), st.floats(0, 60))
def test_utility_non_increasing_in_price_and_time(price, t_cs, t_walk):
    beta = IDENTICAL_BETA
    u = deterministic_utility(beta, price, t_cs=t_cs, t_walk=t_walk)
    assert deterministic_utility(beta, price + 1.0, t_cs=t_cs, t_walk=t_walk) < u
    assert deterministic_utility(beta, price, t_cs=t_cs + 1.0, t_walk=t_walk) < u
    assert deterministic_utility(beta, price, t_cs=t_cs, t_walk=t_walk + 1.0) < u


def test_lmax_is_highest_strictly_preferred_level():
    inst = ten_minute_instance()
    tables = utility_tables(inst)
    cs = inst.carsharing
    alt_u = []
    for mode in inst.alternatives:
        alt_u.append(deterministic_utility(inst.customers.beta[0], mode.price[0, 1], 0.0, mode.t_pt[0, 1],
                                           mode.t_bike[0, 1], mode.t_walk[0, 1], mode.t_wait[0, 1]))
    best = max(alt_u)
    fee_one = 3
    cs_one = deterministic_utility(inst.customers.beta[0], carsharing_price(inst, 0, 1, fee_one),
                                   cs.drive_time[0, 1], 0.0, 0.0, cs.walk_time[0, 1], cs.wait_time[0, 1])
    assert cs_one == pytest.approx(tables.cs[0, fee_one])
    draw = best - cs_one + 1.0
    scen = scenarios_from([[[draw, 0.0, 0.0]]])[0]
    req = compute_requests(inst, scen)
    # independent enumeration of the five levels
    prefers = []
    for level in range(5):
        u = deterministic_utility(inst.customers.beta[0], carsharing_price(inst, 0, 1, level),
                                  cs.drive_time[0, 1], 0.0, 0.0, cs.walk_time[0, 1], cs.wait_time[0, 1]) + draw
        prefers.append(u > best)
    assert prefers == [True, True, True, True, False]
    assert req.lmax.tolist() == [fee_one]
    assert inst.fee_ladder.levels[req.lmax[0]] == 1.0


def test_dominant_alternative_means_no_request():
    inst = ten_minute_instance()
    scen = scenarios_from([[[0.0, 1e4, 0.0]]])[0]
    assert len(compute_requests(inst, scen)) == 0


def test_revenue_steps_by_one_euro_per_level():
    inst = ten_minute_instance()
    req = compute_requests(inst, scenarios_from([[[1e4, 0.0, 0.0]]])[0])
    assert len(req) == 1
    np.testing.assert_allclose(np.diff(req.revenue[0]), 1.0)
    base = 0.265 * 10.0 - inst.costs.usage[0, 1]
    assert req.revenue[0, 2] == pytest.approx(base)


def test_equal_utility_is_not_a_request():
    inst = ten_minute_instance(levels=(0.0,))
    tables = utility_tables(inst)
    best = tables.alt[0].max()
    scen = scenarios_from([[[best - tables.cs[0, 0], 0.0, 0.0]]])[0]
    assert len(compute_requests(inst, scen)) == 0


@pytest.mark.parametrize("seed", range(8))
def test_request_sets_are_sorted_and_monotone(seed):
    inst, scen = tiny_case(seed)
    for s, req in zip(scen, RequestPreprocessor().fit_transform(inst, scen)):
        assert np.all(np.diff(req.customer) > 0)
        # raising the carsharing draw can only add requests and raise lmax
        draws = s.draws.copy()
        draws[:, 0] += 5.0
        more = compute_requests(inst, type(s)(draws, s.weight))
        assert set(req.customer.tolist()) <= set(more.customer.tolist())
        lm = dict(zip(more.customer.tolist(), more.lmax.tolist()))
        for k, level in zip(req.customer.tolist(), req.lmax.tolist()):
            assert lm[k] >= level


def test_preprocessor_requires_fit():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        RequestPreprocessor().transform([])


def test_no_vehicles_means_best_alternative():
    inst = crafted_instance([(1, 0), (4, 0)], [0, 1], [1, 0], [], fee_levels=(0.0,))
    scen = scenarios_from([[[1e4, 0.0, 0.0], [1e4, 0.0, 0.0]]])[0]
    fs = FirstStageSolution(np.zeros(0), np.zeros((2, 2)))
    out = simulate_choices(inst, scen, fs)
    assert MODE_CARSHARING not in out.mode
    tables = utility_tables(inst)
    for k in range(2):
        assert out.mode[k] == inst.alternatives[int(np.argmax(tables.alt[k]))].name
    assert out.revenue == 0.0


def test_first_arrival_takes_the_single_vehicle():
    inst = crafted_instance([(1, 0), (4, 0)], [0, 0], [1, 1], [0], fee_levels=(0.0,))
    scen = scenarios_from([[[1e4, 0.0, 0.0], [1e4, 0.0, 0.0]]])[0]
    out = simulate_choices(inst, scen, default_first_stage(inst))
    assert out.mode[0] == MODE_CARSHARING and out.vehicle[0] == 0
    assert out.mode[1] != MODE_CARSHARING and out.vehicle[1] == -1


@pytest.mark.parametrize("seed", range(30))
def test_simulation_reproduces_greedy_recourse(seed):
    inst, scen = tiny_case(seed)
    rng = np.random.default_rng(seed)
    n = inst.n_zones
    fs = FirstStageSolution(rng.integers(n, size=inst.n_vehicles), rng.integers(inst.n_levels, size=(n, n)))
    for s, req in zip(scen, RequestPreprocessor().fit_transform(inst, scen)):
        out = simulate_choices(inst, s, fs)
        rec = greedy_recourse(req, fs)
        served = {(v, int(req.customer[r])) for v, r, _ in rec.assignment}
        taken = {(v, k) for k, v in enumerate(out.vehicle) if v >= 0}
        assert served == taken
        assert out.revenue == pytest.approx(rec.value, abs=1e-9)
        assert set(out.carsharing_customers) == {k for _, k in served}

