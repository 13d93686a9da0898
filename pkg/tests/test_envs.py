import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stratlink.envs import (
    ArterialSpec,
    LayoutError,
    Shortcut,
    ShortcutsSpec,
    TravelTime,
    build_arterial_mdp,
    build_shortcuts,
    closure_constraint,
    draw_shortcuts_spec,
    example_shortcuts,
    generate_shortcuts,
    landmark_steps,
    load_layout,
    node_classes,
    parse_gridworld,
    prep_flags,
    shortcut_family,
)
from stratlink.envs.shortcuts import shortcuts_reward
from stratlink.mdp import rollout, validate_environment
from stratlink.planners import PlannerConfig, greedy_policy, most_likely_trajectory, q_values
from stratlink.traffic import optimal_routing

# gridworld


def test_corridor_has_three_states_and_two_step_plan():
    world = parse_gridworld("S.T")
    assert world.env.state_count == 3
    traj = most_likely_trajectory(world.env, world.reward, PlannerConfig())
    assert len(traj) == 2 and traj.final_state in world.env.terminal


def test_one_key_doubles_the_state_count():
    world = parse_gridworld("Sa.AT")
    assert world.env.state_count == 5 * 2
    assert world.layout.n_flags == 2


def test_walls_and_locked_doors_block_movement():
    world = parse_gridworld("S.AT\n#a##")
    lay = world.layout
    nxt = world.env.next_state_table()
    before_door = lay.state((0, 1))
    assert nxt[before_door, 3] == before_door  # right into the locked door
    assert nxt[lay.state((0, 0)), 0] == lay.state((0, 0))  # up off the grid
    with_key = lay.state((0, 1), 1)
    assert nxt[with_key, 3] == lay.state((0, 2), 1)


def test_entering_key_sets_flag():
    world = parse_gridworld("S.AT\n#a##")
    lay = world.layout
    assert world.env.next_state_table()[lay.state((0, 1)), 1] == lay.state((1, 1), 1)


def test_gridworld_rewards_and_target():
    world = parse_gridworld(load_layout("simple"))
    terminal = sorted(world.env.terminal)
    assert np.all(world.reward[terminal] == 0.0)
    others = np.setdiff1d(np.arange(world.env.state_count), terminal)
    assert np.all(world.reward[others] == -1.0)
    assert validate_environment(world.env) == []
    assert world.env.is_deterministic()


def test_classes_ignore_flags():
    world = parse_gridworld(load_layout("correlated"))
    lay = world.layout
    pos = lay.find("S")
    assert len({world.classes[lay.state(pos, f)] for f in range(lay.n_flags)}) == 1


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("S.T\n..", "rectangular"),
        ("S?T", "unknown"),
        ("S..", "'T'"),
        ("S.TS", "'S'"),
        ("S.AT", "no matching key"),
        ("SaaT", "appears 2 times"),
        ("S#T", "unreachable"),
        ("SA.aT", "unreachable"),
    ],
)
def test_layout_errors(text, fragment):
    with pytest.raises(LayoutError, match=fragment):
        parse_gridworld(text)


def test_every_builtin_layout_survives_single_class_constraints():
    from stratlink.planners import apply_constraint, decision_class

    for name in ("simple", "independent", "correlated"):
        world = parse_gridworld(load_layout(name))
        traj = most_likely_trajectory(world.env, world.reward, PlannerConfig())
        for s, a in traj.decisions:
            masked = apply_constraint(world.reward, decision_class(world.classes, s, a).constraint(4))
            alt = most_likely_trajectory(world.env, masked, PlannerConfig(), horizon=world.layout.horizon_cap)
            assert not alt.truncated, (name, s, a)


def test_landmarks_on_simple_maze():
    world = parse_gridworld(load_layout("simple"))
    traj = most_likely_trajectory(world.env, world.reward, PlannerConfig())
    marks = landmark_steps(world, traj)
    assert marks == {"Ka": [0, 1], "DA": [8]}


@given(st.sampled_from(["simple", "independent", "correlated"]), st.integers(0, 10_000))
@settings(max_examples=30)
def test_flags_never_unset(name, seed):
    world = parse_gridworld(load_layout(name))
    pol = np.full((world.env.state_count, 4), 0.25)
    traj = rollout(world.env, pol, 60, seed)
    flags = [world.layout.position(s)[1] for s in list(traj.states) + [traj.final_state]]
    for before, after in zip(flags, flags[1:]):
        assert before & after == before


# shortcuts


def test_two_nodes_one_shortcut_is_one_to_two():
    spec = draw_shortcuts_spec(2, 1, 3, 0.1, seed=11)
    assert (spec.shortcuts[0].start, spec.shortcuts[0].end) == (1, 2)


def test_generation_is_seeded():
    a = draw_shortcuts_spec(10, 5, 5, 0.1, seed=42)
    assert a == draw_shortcuts_spec(10, 5, 5, 0.1, seed=42)
    assert a != draw_shortcuts_spec(10, 5, 5, 0.1, seed=43)


def test_generated_specs_satisfy_invariants_over_many_seeds():
    for seed in range(1000):
        spec = draw_shortcuts_spec(10, 5, 5, 0.1, seed)
        assert spec.problems() == []
        assert spec.prep_nodes == (1,) * 5
        for sc in spec.shortcuts:
            assert 1 <= sc.start < sc.end <= 10 and sc.requires and sc.requires <= set(range(1, 6))


@pytest.mark.parametrize("args", [(1, 1, 1, 0.1), (5, 0, 1, 0.1), (5, 1, 0, 0.1), (5, 1, 1, 0.5), (5, 1, 1, 0.0)])
def test_generation_rejects_bad_parameters(args):
    with pytest.raises(ValueError):
        draw_shortcuts_spec(*args, seed=0)


def test_spec_rejects_bad_shortcut():
    with pytest.raises(ValueError, match="endpoints"):
        ShortcutsSpec(5, 2, 0.1, (Shortcut(3, 3, frozenset({1})),))
    with pytest.raises(ValueError, match="preparation set"):
        ShortcutsSpec(5, 2, 0.1, (Shortcut(1, 3, frozenset({3})),))


def test_reward_cases():
    spec = example_shortcuts(0.1)
    n = spec.n_nodes
    assert shortcuts_reward(spec, spec.state(n - 1), 0) == -1.0 + n
    assert shortcuts_reward(spec, spec.state(2), 0) == -1.0
    assert shortcuts_reward(spec, spec.state(1), spec.prep_action(1)) == pytest.approx(-0.1)
    assert shortcuts_reward(spec, spec.state(2), spec.prep_action(1)) == -1.0
    assert shortcuts_reward(spec, spec.state(1), spec.jump_action(2)) == -1.0  # prep 4 missing
    assert shortcuts_reward(spec, spec.state(n), 0) == 0.0


def test_valid_jump_reward():
    spec = example_shortcuts(0.1)
    s = spec.state(1, prep_flags(spec, [4]))
    assert shortcuts_reward(spec, s, spec.jump_action(2)) == pytest.approx(-2 + 0.2)
    s = spec.state(3, prep_flags(spec, [1, 2]))
    assert shortcuts_reward(spec, s, spec.jump_action(3)) == pytest.approx(-2 + 0.4 + 5)


@given(st.integers(0, 500))
@settings(max_examples=50)
def test_prepared_shortcut_has_net_advantage(seed):
    spec = draw_shortcuts_spec(10, 5, 5, 0.1, seed)
    for i, sc in enumerate(spec.shortcuts, 1):
        if sc.end == spec.n_nodes:
            continue
        s = spec.state(sc.start, prep_flags(spec, sc.requires))
        k = len(sc.requires)
        net = shortcuts_reward(spec, s, spec.jump_action(i)) - k * spec.cost
        assert net > -sc.span


def test_shortcut_environment_structure():
    env, reward, spec = generate_shortcuts(6, 3, 2, 0.1, seed=3)
    assert env.state_count == 6 * 4 and env.action_count == 1 + 3 + 2
    assert validate_environment(env) == []
    assert reward.shape == (24, 6)
    assert len(set(node_classes(spec)[spec.state(2, f)] for f in range(4))) == 1


def test_spec_json_round_trip():
    spec = draw_shortcuts_spec(10, 5, 5, 0.1, seed=9)
    assert ShortcutsSpec.from_json(json.dumps(spec.to_json())) == spec
    doc = spec.to_json()
    doc["I"] = 4
    with pytest.raises(ValueError):
        ShortcutsSpec.from_json(doc)


def test_family_uses_consecutive_seeds():
    fam = shortcut_family(3, 10, 5, 5, 0.1, seed=7)
    assert fam[2] == draw_shortcuts_spec(10, 5, 5, 0.1, 9)


def test_example_shortcut_plan_chains_two_short_jumps():
    spec = example_shortcuts()
    env, reward = build_shortcuts(spec)
    traj = most_likely_trajectory(env, reward, spec.planner_config())
    labels = [spec.action_labels()[a] for a in traj.actions]
    assert labels == ["prep1", "prep2", "prep4", "jump2", "jump3"]


# arterial


def test_half_stay_halves_the_flow():
    spec = ArterialSpec(junctions=3, entry_flow=2.0, quantization=5)
    env, _ = build_arterial_mdp(spec)
    a = int(np.flatnonzero(np.isclose(spec.actions, 0.5))[0])
    s = spec.state(1, 4)
    assert spec.decode(int(env.next_state_table()[s, a])) == (2, 1.0)


def test_last_junction_leads_to_exit():
    spec = ArterialSpec(junctions=2, quantization=3)
    env, _ = build_arterial_mdp(spec)
    assert np.all(env.next_state_table()[spec.state(2, 0): spec.state(2, 0) + 3] == spec.exit_state)


def test_free_flow_reward_value():
    spec = ArterialSpec(junctions=10)
    t_a = 1000 / spec.arterial_speed
    assert spec.reward(2.0, 1.0) == pytest.approx(-2.0 * t_a)
    assert spec.reward(2.0, 0.0) == pytest.approx(-(2.0 * 50 + 2.0 * 50))


def test_congested_travel_time_grows():
    tt = TravelTime(1000.0, 20.0, alpha=0.15)
    assert tt(0.0) == pytest.approx(50.0)
    assert tt(2.0) == pytest.approx(50.0 * 1.15)
    assert tt(1.0) < tt(2.0)


@pytest.mark.parametrize("kwargs", [{"quantization": 1}, {"entry_flow": 0.0}, {"junctions": 0}, {"alpha": -1.0}])
def test_arterial_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ArterialSpec(**kwargs)


def test_arterial_json_round_trip():
    spec = ArterialSpec(junctions=4, quantization=7, alpha=0.15)
    assert ArterialSpec.from_json(json.dumps(spec.to_json())) == spec
    with pytest.raises(ValueError):
        ArterialSpec.from_json({"junctions": 3, "lanes": 2})


def test_closure_forbids_every_positive_stay():
    spec = ArterialSpec(junctions=3, quantization=4)
    c = closure_constraint(spec, 3)
    assert len(c.forbidden) == 4 * 3
    assert all(spec.actions[a] > 0 for _, a in c.forbidden)
    with pytest.raises(ValueError):
        closure_constraint(spec, 4)


def test_all_arterial_leaves_the_highway_empty():
    spec = ArterialSpec(junctions=5, quantization=11)
    result = optimal_routing(spec)
    assert result.policy.stay == (1.0,) * 5
    assert result.highway_flows == (0.0,) * 5


@pytest.mark.parametrize("junctions", [1, 2, 3])
@pytest.mark.parametrize("quantization", [3, 5])
@pytest.mark.parametrize("closure", [None, 1, 2])
def test_optimal_routing_matches_exhaustive_search(junctions, quantization, closure):
    if closure is not None and closure > junctions:
        return
    spec = ArterialSpec(junctions=junctions, quantization=quantization)
    best, cost = oracles.best_routing(junctions, 2.0, quantization, closure)
    got = optimal_routing(spec, closure)
    assert got.total_time == pytest.approx(cost, rel=1e-12)
    assert got.policy.stay == pytest.approx(best)


@given(st.integers(1, 6), st.integers(2, 12), st.integers(0, 10_000))
@settings(max_examples=40)
def test_random_rollouts_conserve_flow(junctions, quantization, seed):
    spec = ArterialSpec(junctions=junctions, quantization=quantization)
    env, _ = build_arterial_mdp(spec)
    rng = np.random.default_rng(seed)
    pol = rng.random((env.state_count, env.action_count))
    pol /= pol.sum(axis=1, keepdims=True)
    traj = rollout(env, pol, junctions, seed)
    step = spec.entry_flow / (quantization - 1)
    incoming = spec.entry_flow
    for s, a in traj.decisions:
        j, f = spec.decode(s)
        assert f == pytest.approx(incoming)
        stay = f * spec.actions[a]
        nxt = spec.decode(env.step(s, a))[1] if j < junctions else spec.flows[spec.snap(stay)]
        ramp = f - nxt
        assert abs(f - (nxt + ramp)) < 1e-12 and abs(nxt - stay) <= step / 2 + 1e-12
        highway = spec.entry_flow - nxt
        assert highway == pytest.approx(spec.entry_flow - nxt)
        incoming = nxt


def test_planner_config_is_exact():
    spec = ArterialSpec(junctions=4, quantization=5)
    env, reward = build_arterial_mdp(spec)
    q, _ = q_values(env, reward, spec.planner_config())
    pol = greedy_policy(q)
    assert pol[spec.state(1, 4)].argmax() == 0
