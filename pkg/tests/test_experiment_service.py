from dataclasses import replace

import numpy as np
import pytest

from services.experiment_service import (
    ALL_MODES,
    AlgorithmMode,
    ExperimentConfig,
    ExperimentService,
    generate_obstacles,
    run_iteration_cooperative,
    run_iteration_multi,
    run_iteration_single,
)
from services.qlearning_service import Hyperparams, QTable
from services.world_service import (
    Action,
    Arena,
    BoxPose,
    BoxShape,
    Environment,
    Goal,
    Obstacle,
    Region,
    Vec2,
    collides,
    compute_reward,
    goal_reached,
)
from utils.errors import ConfigValidationError, InfeasibleLayoutError, NonFiniteQValueError

START = BoxPose(Vec2(0.0, 0.0), 0.0)
GREEDY = Hyperparams(epsilon=0.0)


def preferring(env, action, values=1.0):
    table = QTable()
    table.values[env.encode(START), Action(action).ordinal] = values
    return table


# obstacles

def test_generate_no_obstacles():
    assert generate_obstacles(1, 0, Region(100, 700, 100, 600), 10.0, START, Goal()) == []


def test_generate_default_layout():
    region = Region(100, 700, 100, 600)
    goal = Goal()
    obstacles = generate_obstacles(42, 6, region, 10.0, START, goal, BoxShape())
    assert len(obstacles) == 6
    for k, ob in enumerate(obstacles):
        assert 100 <= ob.center.x <= 700 and 100 <= ob.center.y <= 600
        assert ob.center.distance_to(goal.center) > ob.radius + goal.radius
        assert not collides(START, BoxShape(), [ob])
        for other in obstacles[k + 1:]:
            assert ob.center.distance_to(other.center) > 20.0


def test_generate_is_deterministic():
    args = (Region(100, 700, 100, 600), 10.0, START, Goal())
    assert generate_obstacles(9, 6, *args) == generate_obstacles(9, 6, *args)
    assert generate_obstacles(9, 6, *args) != generate_obstacles(10, 6, *args)


def test_generate_reports_infeasible_layout():
    with pytest.raises(InfeasibleLayoutError):
        generate_obstacles(0, 2, Region(300, 301, 300, 301), 10.0, START, Goal())


# iterations

def test_single_iteration_into_obstacle_lowers_value():
    env = Environment(Arena(), BoxShape(), Goal(), (Obstacle(Vec2(75, 0), 10),))
    table = preferring(env, Action.TRANSLATE_FORWARD)
    state = env.encode(START)
    t = run_iteration_single(env, START, table, GREEDY, np.random.default_rng(0))
    assert t.action is Action.TRANSLATE_FORWARD and t.collided
    assert t.reward.r_total == pytest.approx(-2.245, abs=1e-12)
    assert table[state, Action.TRANSLATE_FORWARD] == pytest.approx(1 + 0.3 * (-2.245 + 0.4 * 1 - 1), abs=1e-12)


def test_single_iteration_first_update_from_zero(empty_env, params):
    table = QTable()
    t = run_iteration_single(empty_env, START, table, params, np.random.default_rng(3))
    assert table.nonzero_count() == 1
    assert table[t.state_before, t.action] == pytest.approx(0.3 * t.reward.r_total, abs=1e-12)


def test_single_iteration_toward_goal_has_positive_distance_reward():
    env = Environment(Arena(), BoxShape(), Goal(Vec2(800, 0), 30), ())
    table = preferring(env, Action.TRANSLATE_FORWARD)
    t = run_iteration_single(env, START, table, GREEDY, np.random.default_rng(0))
    assert t.reward.r_distance > 0


def test_multi_same_translation_moves_three_steps(empty_env):
    tables = [preferring(empty_env, Action.TRANSLATE_FORWARD) for _ in range(3)]
    transitions = run_iteration_multi(empty_env, START, tables, AlgorithmMode.MULTI_SEPARATE, GREEDY,
                                      np.random.default_rng(0))
    assert len(transitions) == 3
    assert transitions[-1].pose_after.center == Vec2(60.0, 0.0)


def test_multi_reward_uses_net_displacement(empty_env):
    tables = [preferring(empty_env, a) for a in
              (Action.TRANSLATE_FORWARD, Action.TRANSLATE_BACKWARD, Action.TRANSLATE_FORWARD)]
    transitions = run_iteration_multi(empty_env, START, tables, AlgorithmMode.MULTI_SEPARATE, GREEDY,
                                      np.random.default_rng(0))
    end = transitions[-1].pose_after
    assert end.center == Vec2(20.0, 0.0)
    expected = compute_reward(START, end, empty_env.goal, False, GREEDY)
    for t in transitions:
        assert t.reward == expected
        assert t.state_before == empty_env.encode(START)
        assert t.state_after == empty_env.encode(end)


def test_multi_separate_updates_each_own_table(empty_env):
    tables = [QTable() for _ in range(3)]
    transitions = run_iteration_multi(empty_env, START, tables, AlgorithmMode.MULTI_SEPARATE, Hyperparams(),
                                      np.random.default_rng(5))
    s = empty_env.encode(START)
    for table, t in zip(tables, transitions):
        assert np.argwhere(table.values != 0).tolist() == [[s, t.action.ordinal]]


def test_multi_shared_writes_selected_entries(empty_env):
    shared = QTable()
    transitions = run_iteration_multi(empty_env, START, [shared], AlgorithmMode.MULTI_SHARED, Hyperparams(),
                                      np.random.default_rng(8))
    s = empty_env.encode(START)
    written = {tuple(idx) for idx in np.argwhere(shared.values != 0).tolist()}
    assert written == {(s, t.action.ordinal) for t in transitions}


def test_multi_rejects_other_modes(empty_env):
    with pytest.raises(ValueError):
        run_iteration_multi(empty_env, START, [QTable()], AlgorithmMode.COOPERATIVE, GREEDY, np.random.default_rng(0))


def test_multi_collision_penalizes_round():
    env = Environment(Arena(), BoxShape(), Goal(), (Obstacle(Vec2(95, 0), 10),))
    tables = [preferring(env, Action.TRANSLATE_FORWARD) for _ in range(3)]
    transitions = run_iteration_multi(env, START, tables, AlgorithmMode.MULTI_SEPARATE, GREEDY,
                                      np.random.default_rng(0))
    assert [t.collided for t in transitions] == [False, True, True]
    assert transitions[0].reward.r_obstacle == -9.0
    assert transitions[-1].pose_after.center == Vec2(20.0, 0.0)


def test_cooperative_first_substep(empty_env, params):
    tables = [QTable() for _ in range(3)]
    transitions = run_iteration_cooperative(empty_env, START, tables, params, np.random.default_rng(2), order=[0])
    t = transitions[0]
    assert tables[1].nonzero_count() == 0 and tables[2].nonzero_count() == 0
    assert tables[0].nonzero_count() == 1
    assert tables[0][t.state_before, t.action] == pytest.approx(0.3 * 0.3 * t.reward.r_total, abs=1e-12)


def test_cooperative_unit_omega_keeps_td_value(empty_env):
    params = Hyperparams(omega=1.0)
    tables = [QTable() for _ in range(3)]
    t = run_iteration_cooperative(empty_env, START, tables, params, np.random.default_rng(2), order=[0])[0]
    assert tables[0][t.state_before, t.action] == pytest.approx(0.3 * t.reward.r_total, abs=1e-12)


def test_cooperative_agents_see_previous_moves(empty_env, params):
    tables = [QTable() for _ in range(3)]
    transitions = run_iteration_cooperative(empty_env, START, tables, params, np.random.default_rng(4))
    assert len(transitions) == 3
    assert transitions[0].pose_before == START
    for previous, current in zip(transitions, transitions[1:]):
        assert current.pose_before == previous.pose_after
        assert current.state_before == empty_env.encode(previous.pose_after)


def test_cooperative_rewards_each_substep(empty_env, params):
    tables = [QTable() for _ in range(3)]
    transitions = run_iteration_cooperative(empty_env, START, tables, params, np.random.default_rng(4))
    for t in transitions:
        assert t.reward == compute_reward(t.pose_before, t.pose_after, empty_env.goal, t.collided, params)


# episodes and runs

def test_episode_with_goal_at_start():
    config = replace(ExperimentConfig(), goal=Goal(Vec2(0, 0), 30), n_obstacles=0)
    service = ExperimentService()
    env = service.build_environment(config)
    log = service.run_episode(config, [QTable()], env, np.random.default_rng(0))
    assert log.iterations_used == 0 and log.reached_goal
    assert len(log.pose_trace) == 1


def test_episode_rejects_wrong_table_count(fast_config):
    service = ExperimentService()
    config = replace(fast_config, mode=AlgorithmMode.MULTI_SEPARATE)
    with pytest.raises(ValueError):
        service.run_episode(config, [QTable()], service.build_environment(config), np.random.default_rng(0))


@pytest.mark.parametrize("mode", ALL_MODES)
def test_trace_schema(fast_config, mode):
    config = replace(fast_config, mode=mode)
    result = ExperimentService().run_experiment(config)
    assert len(result.episodes) == config.n_episodes
    assert len(result.final_tables) == mode.n_tables
    for log in result.episodes:
        assert log.iterations_used <= config.max_iterations
        first = log.pose_trace[0]
        assert (first.iteration, first.sub_step, first.pose) == (0, 0, config.arena.box_start)
        n_sub = len(log.pose_trace) - 1
        if mode is AlgorithmMode.SINGLE_AGENT:
            assert n_sub == log.iterations_used
        elif log.reached_goal:
            assert mode.n_agents * (log.iterations_used - 1) < n_sub <= mode.n_agents * log.iterations_used
        else:
            assert n_sub == mode.n_agents * log.iterations_used
        assert log.reached_goal == goal_reached(log.final_pose, config.goal)


@pytest.mark.parametrize("mode", ALL_MODES)
def test_trace_replays_through_world(fast_config, mode):
    config = replace(fast_config, mode=mode)
    result = ExperimentService().run_experiment(config)
    env = Environment(config.arena, config.shape, config.goal, result.obstacles)
    for log in result.episodes:
        pose = log.pose_trace[0].pose
        for record in log.pose_trace[1:]:
            pose = env.step(pose, record.action, config.hyperparams).pose_after
            assert pose == record.pose


@pytest.mark.parametrize("mode", [AlgorithmMode.SINGLE_AGENT, AlgorithmMode.COOPERATIVE])
def test_run_is_deterministic(fast_config, mode):
    config = replace(fast_config, mode=mode, obstacle_seed=3, policy_seed=4)
    first = ExperimentService().run_experiment(config)
    second = ExperimentService().run_experiment(config)
    assert first.episodes == second.episodes
    assert first.obstacles == second.obstacles
    for a, b in zip(first.final_tables, second.final_tables):
        assert np.array_equal(a.values, b.values)


def test_run_has_one_log_per_episode(default_config):
    config = replace(default_config, n_episodes=80, max_iterations=2)
    result = ExperimentService().run_experiment(config)
    assert [log.episode_index for log in result.episodes] == list(range(80))


def test_tables_persist_across_episodes(fast_config):
    config = replace(fast_config, n_episodes=5)
    service = ExperimentService()
    env = service.build_environment(config)
    tables = [QTable()]
    rng = np.random.default_rng(config.policy_seed)
    counts = []
    for k in range(config.n_episodes):
        service.run_episode(config, tables, env, rng, k)
        counts.append(tables[0].nonzero_count())
    assert counts == sorted(counts) and counts[0] > 0


def test_comparison_shares_layouts_per_seed(default_config):
    service = ExperimentService()
    configs = service.comparison_configs(default_config, ALL_MODES, 2)
    assert len(configs) == 8
    layouts = [service.build_environment(c).obstacles for c in configs]
    assert all(layout == layouts[0] for layout in layouts[:4])
    assert all(layout == layouts[4] for layout in layouts[4:])
    assert layouts[0] != layouts[4]
    assert len({c.policy_seed for c in configs}) == 8
    assert [c.mode for c in configs[:4]] == list(ALL_MODES)


def test_run_comparison_returns_run_per_seed_and_mode(fast_config):
    config = replace(fast_config, n_episodes=2, max_iterations=10)
    results = ExperimentService().run_comparison(config, ALL_MODES, 1)
    assert [r.config.mode for r in results] == list(ALL_MODES)
    assert len({r.obstacles for r in results}) == 1


def test_comparison_requires_modes(default_config):
    with pytest.raises(ValueError):
        ExperimentService().comparison_configs(default_config, [], 1)


def test_mode_table_counts():
    assert [(m.n_agents, m.n_tables) for m in ALL_MODES] == [(1, 1), (3, 3), (3, 1), (3, 3)]


def test_config_validation():
    with pytest.raises(ConfigValidationError) as err:
        ExperimentConfig(max_iterations=0)
    assert err.value.field == "max_iterations"
    assert ExperimentConfig(mode="cooperative").mode is AlgorithmMode.COOPERATIVE


@pytest.mark.parametrize("field_name", ["obstacle_seed", "policy_seed"])
def test_negative_seed_is_rejected(field_name):
    with pytest.raises(ConfigValidationError) as err:
        ExperimentConfig(**{field_name: -1})
    assert err.value.field == field_name


def test_literal_blend_overflow_stops_episode(fast_config):
    config = replace(fast_config, mode=AlgorithmMode.COOPERATIVE, blend_normalize=False)
    service = ExperimentService()
    tables = [QTable(np.full((8192, 6), 1e308)) for _ in range(3)]
    with pytest.raises(NonFiniteQValueError):
        service.run_episode(config, tables, service.build_environment(config), np.random.default_rng(0))
    assert all(table.is_finite() for table in tables)


def test_process_pool_matches_sequential_comparison(fast_config):
    config = replace(fast_config, n_episodes=2, max_iterations=10)
    service = ExperimentService()
    sequential = service.run_comparison(config, ALL_MODES, 1, max_workers=1)
    pooled = service.run_comparison(config, ALL_MODES, 1, max_workers=2)
    assert [r.config for r in pooled] == [r.config for r in sequential]
    for a, b in zip(sequential, pooled):
        assert a.episodes == b.episodes
        assert a.obstacles == b.obstacles
        assert len(a.final_tables) == len(b.final_tables)
        for ta, tb in zip(a.final_tables, b.final_tables):
            assert np.array_equal(ta.values, tb.values)
