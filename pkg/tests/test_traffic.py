import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stratlink.envs import ArterialSpec
from stratlink.traffic import (
    CountSeries,
    DegenerateCountsError,
    FlowPolicy,
    SimConfig,
    extract_policies,
    flow_rates,
    junction_link_scores,
    optimal_routing,
    policy_cost,
    simulate_drivers,
)


def _linear_counts(art_pre, art_post, hw_pre, hw_post, steps=200, closure=100, junctions=1):
    t = np.arange(steps)
    pre = t < closure
    art = np.where(pre, art_pre * t, art_pre * closure + art_post * (t - closure))
    hw = np.where(pre, hw_pre * t, hw_pre * closure + hw_post * (t - closure))
    return CountSeries(np.tile(art, (junctions, 1)), np.tile(hw, (junctions, 1)), closure)


def test_free_flow_routing_stays_on_the_arterial():
    result = optimal_routing(ArterialSpec())
    assert result.policy.stay == (1.0,) * 10
    assert result.arterial_flows == (2.0,) * 10


def test_last_junction_closure_diverts_everyone_at_the_first():
    pre = optimal_routing(ArterialSpec()).policy
    post = optimal_routing(ArterialSpec(), closure=10).policy
    assert post[1] == 0.0 and post[10] == 0.0
    scores = junction_link_scores(pre, post)
    assert scores[0] == pytest.approx(1.0, abs=0.02) and scores[9] == pytest.approx(1.0, abs=0.02)
    assert np.all(np.abs(scores[1:9]) < 0.05)


def test_single_junction_closure_forces_diversion():
    assert optimal_routing(ArterialSpec(junctions=1), closure=1).policy.stay == (0.0,)


def test_rollout_flow_identities():
    spec = ArterialSpec(junctions=6, quantization=21)
    for closure in (None, 3, 6):
        r = optimal_routing(spec, closure)
        incoming = spec.entry_flow
        for j in range(6):
            assert r.arterial_flows[j] == pytest.approx(spec.flows[spec.snap(incoming * r.policy.stay[j])])
            assert r.highway_flows[j] == pytest.approx(spec.entry_flow - r.arterial_flows[j])
            incoming = r.arterial_flows[j]


def test_total_time_matches_policy_cost():
    spec = ArterialSpec(junctions=4, quantization=9)
    r = optimal_routing(spec, closure=2)
    assert r.total_time == pytest.approx(policy_cost(spec, r.policy.stay, closure=2))
    assert policy_cost(spec, (1.0,) * 4, closure=2) == float("inf")


@pytest.mark.parametrize("junctions", [1, 2, 3])
@pytest.mark.parametrize("quantization", [2, 3, 4, 5])
def test_routing_matches_exhaustive_policy_search(junctions, quantization):
    spec = ArterialSpec(junctions=junctions, quantization=quantization)
    for closure in [None] + list(range(1, junctions + 1)):
        best, cost = oracles.best_routing(junctions, 2.0, quantization, closure)
        got = optimal_routing(spec, closure)
        assert got.total_time == pytest.approx(cost)
        assert got.policy.stay == pytest.approx(best)


def test_policy_values_must_be_frequencies():
    with pytest.raises(ValueError):
        FlowPolicy((0.5, 1.2))


def test_scores_need_matching_lengths():
    with pytest.raises(ValueError):
        junction_link_scores(FlowPolicy((1.0,)), FlowPolicy((1.0, 1.0)))


def test_identical_policies_score_zero():
    p = FlowPolicy((0.3, 0.9))
    assert np.array_equal(junction_link_scores(p, p), [0.0, 0.0])


def test_scores_can_be_negative():
    assert junction_link_scores(FlowPolicy((0.8,)), FlowPolicy((0.9,)))[0] == pytest.approx(-0.1)


def test_synthetic_slopes():
    pre, post = extract_policies(_linear_counts(2, 1, 0, 1), settle=0.0)
    assert pre[1] == pytest.approx(1.0) and post[1] == pytest.approx(0.5)


def test_settle_window_skips_the_transient():
    counts = _linear_counts(2, 1, 0, 1)
    art = counts.arterial.copy()
    art[0, 100:110] = art[0, 99]  # ten frozen steps right after the closure
    art[0, 110:] = art[0, 99] + np.arange(90)
    hw = counts.highway.copy()
    hw[0, 100:] = np.arange(100)
    bumpy = CountSeries(art, hw, 100)
    _, post = extract_policies(bumpy, settle=0.1)
    assert post[1] == pytest.approx(0.5)


def test_no_highway_traffic_means_full_stay():
    pre, _ = extract_policies(_linear_counts(3, 3, 0, 0))
    assert pre[1] == 1.0


def test_empty_junction_is_degenerate():
    with pytest.raises(DegenerateCountsError, match="J1"):
        extract_policies(_linear_counts(2, 0, 0, 0))


def test_rescaled_counts_give_the_same_scores():
    a = _linear_counts(5, 2, 1, 3, junctions=3)
    b = CountSeries(a.arterial * 7, a.highway * 7, a.closure_time)
    sa = junction_link_scores(*extract_policies(a))
    sb = junction_link_scores(*extract_policies(b))
    assert np.allclose(sa, sb)


def test_count_series_validation():
    with pytest.raises(ValueError):
        CountSeries(np.array([[0, 2, 1]]), np.array([[0, 0, 0]]), 1)
    with pytest.raises(ValueError):
        CountSeries(np.zeros((1, 3)), np.zeros((2, 3)), 1)
    with pytest.raises(ValueError):
        flow_rates(_linear_counts(1, 1, 1, 1), settle=1.0)
    with pytest.raises(ValueError):
        flow_rates(CountSeries(np.zeros((1, 10)), np.zeros((1, 10)), 9))


def test_count_series_round_trip(tmp_path):
    counts = simulate_drivers(ArterialSpec(junctions=3), closure_time=50, horizon=200, seed=4)
    paths = counts.write(tmp_path)
    assert len(paths) == 2 * 3 + 1
    back = CountSeries.read(tmp_path)
    assert np.array_equal(back.arterial, counts.arterial) and np.array_equal(back.highway, counts.highway)
    assert back.closure_time == 50


def test_simulation_is_seeded():
    spec = ArterialSpec(junctions=4)
    a = simulate_drivers(spec, closure_time=100, horizon=400, seed=1)
    b = simulate_drivers(spec, closure_time=100, horizon=400, seed=1)
    assert np.array_equal(a.arterial, b.arterial)


@given(st.integers(1, 6), st.integers(0, 1000), st.sampled_from([0.5, 1.3, 2.0]))
@settings(max_examples=20)
def test_simulation_conserves_vehicles(junctions, seed, entry):
    spec = ArterialSpec(junctions=junctions, entry_flow=entry)
    c = simulate_drivers(spec, SimConfig(update_period=50), closure_time=150, horizon=300, seed=seed)
    entered = np.floor(entry * np.arange(1, 301) + 1e-9)
    assert np.array_equal(c.arterial[0] + c.highway[0], entered)
    for j in range(1, junctions):
        assert np.array_equal(c.arterial[j - 1], c.arterial[j] + c.highway[j])


def test_closed_junction_stops_counting():
    c = simulate_drivers(ArterialSpec(), closure_time=300, horizon=1200, seed=2)
    assert np.all(c.arterial[9, 300:] == c.arterial[9, 299])
    _, post = extract_policies(c)
    assert post[10] == 0.0


def test_closure_junction_can_be_chosen():
    c = simulate_drivers(ArterialSpec(junctions=4), closure_time=100, horizon=600, seed=0, closure=2)
    assert np.all(c.arterial[1, 100:] == c.arterial[1, 99])
    with pytest.raises(ValueError):
        simulate_drivers(ArterialSpec(junctions=4), closure=5)


def test_free_flow_drivers_match_optimal_routing():
    spec = ArterialSpec()
    c = simulate_drivers(spec, SimConfig(congestion=False), closure_time=4000, horizon=5000, seed=0)
    pre, _ = extract_policies(c)
    assert np.all(np.abs(pre.as_array() - np.array(optimal_routing(spec).policy.stay)) < 0.05)


def test_sim_config_validation():
    for bad in ({"lookahead": -1}, {"update_period": 0}, {"update_weight": 0.0}, {"noise": 0.0}):
        with pytest.raises(ValueError):
            SimConfig(**bad)
    with pytest.raises(ValueError):
        simulate_drivers(ArterialSpec(), closure_time=10, horizon=10)
