import numpy as np
import pytest

import cmpg
from cmpg import AgentPolicy, Cmpg, JointPolicy

from conftest import counterexample, random_joint_policy

UP, RIGHT, DOWN, LEFT = 0, 1, 2, 3


def cell(x, y):
    return x + 4 * y


def joint_state(p1, p2):
    return p1 * 16 + p2


def joint_action(a1, a2):
    return a1 * 4 + a2


# ------------------------------------------------------------------ grid world

def test_grid_config_validation():
    with pytest.raises(ValueError):
        cmpg.GridWorldConfig(start=(0, 0), target=(0, 0))
    with pytest.raises(ValueError):
        cmpg.GridWorldConfig(target=(5, 1))
    with pytest.warns(UserWarning):
        cmpg.GridWorldConfig(horizon=2)


def test_grid_no_cost_when_cells_stay_distinct():
    game = cmpg.build_grid_world()
    s = joint_state(cell(0, 0), cell(3, 3))
    # both agents bump a wall and stay put on distinct cells
    k = joint_action(LEFT, UP)
    assert game.costs[0, 0, s, k] == 0.0


def test_grid_collision_on_shared_successor():
    game = cmpg.build_grid_world()
    s = joint_state(cell(1, 1), cell(3, 1))
    k = joint_action(RIGHT, LEFT)   # both land on (2,1)
    assert game.costs[0, 0, s, k] == 1.0


def test_grid_pass_through_swap_is_not_collision():
    game = cmpg.build_grid_world()
    s = joint_state(cell(1, 1), cell(2, 1))
    k = joint_action(RIGHT, LEFT)   # agents exchange cells
    assert game.costs[0, 0, s, k] == 0.0


def test_grid_no_collision_cost_on_start_or_target():
    game = cmpg.build_grid_world()
    s = joint_state(cell(1, 0), cell(0, 1))
    k = joint_action(LEFT, DOWN)    # both land on the start cell
    assert game.costs[0, 0, s, k] == 0.0


def test_grid_reward_on_entering_only():
    game = cmpg.build_grid_world()
    far = cell(3, 3)
    # entering the +2 bonus cell pays, bumping a wall while on it does not
    s_enter = joint_state(cell(0, 0), far)
    assert game.rewards[0, 0, s_enter, joint_action(RIGHT, UP)] == 2.0 / 20
    s_stay = joint_state(cell(1, 0), far)
    assert game.rewards[0, 0, s_stay, joint_action(DOWN, UP)] == 0.0


def test_grid_reward_on_stay_switch():
    game = cmpg.build_grid_world(cmpg.GridWorldConfig(reward_on_stay=True))
    s_stay = joint_state(cell(1, 0), cell(3, 3))
    assert game.rewards[0, 0, s_stay, joint_action(DOWN, UP)] == 2.0 / 20


def test_grid_target_absorbing_one_time_reward():
    game = cmpg.build_grid_world()
    target = cell(3, 2)
    far = cell(0, 3)
    s_before = joint_state(cell(2, 2), far)
    assert game.rewards[0, 0, s_before, joint_action(RIGHT, UP)] == 10.0 / 20
    s_at = joint_state(target, far)
    k = joint_action(RIGHT, UP)
    assert game.rewards[0, 0, s_at, k] == 0.0
    assert game.transitions[0, s_at, k, joint_state(target, far)] == 1.0


def test_grid_swap_symmetry():
    game = cmpg.build_grid_world()
    rng = np.random.default_rng(0)
    for _ in range(200):
        p1, p2 = rng.integers(0, 16, size=2)
        a1, a2 = rng.integers(0, 4, size=2)
        s, s_sw = joint_state(p1, p2), joint_state(p2, p1)
        k, k_sw = joint_action(a1, a2), joint_action(a2, a1)
        assert game.rewards[0, 0, s, k] == game.rewards[1, 0, s_sw, k_sw]
        assert game.costs[0, 0, s, k] == game.costs[0, 0, s_sw, k_sw]


def test_grid_reference_policy_pair_costs_one_tenth():
    game = cmpg.build_grid_world()
    # agent 1 walks the bottom row then up the right column; agent 2 mixes
    # 0.9 up / 0.1 right at the start, then goes up to row 2 and right
    acts1 = np.zeros(16, dtype=int)
    dist2 = np.zeros((16, 4))
    for c in range(16):
        x, y = c % 4, c // 4
        acts1[c] = RIGHT if x < 3 else UP
        if c == cell(0, 0):
            dist2[c] = [0.9, 0.1, 0.0, 0.0]
        elif y == 2:
            dist2[c, RIGHT] = 1.0
        else:
            dist2[c, UP] = 1.0
    pol1 = np.zeros((6, 256, 4))
    pol2 = np.zeros((6, 256, 4))
    for s in range(256):
        p1, p2 = s // 16, s % 16
        pol1[:, s, acts1[p1]] = 1.0
        pol2[:, s, :] = dist2[p2]
    pi = JointPolicy([AgentPolicy(pol1), AgentPolicy(pol2)])
    res = cmpg.evaluate(game, pi)
    assert abs(res.cost_values[0] - 0.1) < 1e-12
    assert abs(res.reward_values[0] * game.reward_scale - 23.1) < 1e-9


# ------------------------------------------------------------- congestion game

def count_joint(actions):
    """Joint index of an explicit action tuple (agent 0 most significant)."""
    k = 0
    for a in actions:
        k = k * 4 + a
    return k


def test_congestion_config_validation():
    with pytest.raises(ValueError):
        cmpg.CongestionConfig(weights_safe=(4, 3, 2, 1))
    with pytest.raises(ValueError):
        cmpg.CongestionConfig(weights_unsafe=(2, 4, 6, 8), cost_offset=0.1)


def test_congestion_transitions():
    game = cmpg.build_congestion_game()
    safe, unsafe = 0, 1
    all_d = count_joint([3] * 8)
    assert game.transitions[0, safe, all_d, unsafe] == 1.0
    spread = count_joint([0, 0, 1, 1, 2, 2, 3, 3])
    assert game.transitions[0, unsafe, spread, safe] == 1.0
    assert game.transitions[0, safe, spread, safe] == 1.0
    three_quarters = count_joint([0, 0, 0, 0, 0, 0, 1, 1])   # k* = 6 > N/4
    assert game.transitions[0, unsafe, three_quarters, unsafe] == 1.0


def test_congestion_cost_only_first_step_unsafe():
    game = cmpg.build_congestion_game()
    unsafe = 1
    five_d = count_joint([3, 3, 3, 3, 3, 0, 1, 2])   # k* = 5 > N/2
    assert game.costs[0, 0, unsafe, five_d] == 1.0
    assert game.costs[0, 1, unsafe, five_d] == 0.0   # second step is free
    assert game.costs[0, 0, 0, five_d] == 0.0        # safe state is free
    four_d = count_joint([3, 3, 3, 3, 0, 0, 1, 2])   # k* = 4 = N/2
    assert game.costs[0, 0, unsafe, four_d] == 0.0


def test_congestion_rewards():
    cfg = cmpg.CongestionConfig()
    game = cmpg.build_congestion_game(cfg)
    scale = cfg.reward_scale
    k = count_joint([3, 3, 3, 0, 0, 1, 1, 2])
    # agent 0 picks D with count 3: safe pays 3*4, unsafe max(0, 3*2-3)
    assert abs(game.rewards[0, 0, 0, k] * scale - 12.0) < 1e-12
    assert abs(game.rewards[0, 0, 1, k] * scale - 3.0) < 1e-12
    # agent 7 picks C alone: unsafe reward floors at zero (1*1.5 - 3 < 0)
    assert game.rewards[7, 0, 1, k] == 0.0


def test_congestion_permutation_invariance():
    game = cmpg.build_congestion_game(cmpg.CongestionConfig(n_agents=4))
    rng = np.random.default_rng(1)
    pol = random_joint_policy(rng, game)
    perm = [2, 0, 3, 1]
    permuted = JointPolicy([pol.agents[p] for p in perm])
    a = cmpg.evaluate(game, pol)
    b = cmpg.evaluate(game, permuted)
    assert np.all(np.abs(a.reward_values[perm] - b.reward_values) < 1e-12)
    assert np.all(np.abs(a.cost_values - b.cost_values) < 1e-12)


def test_congestion_serialization_lossless():
    game = cmpg.build_congestion_game(cmpg.CongestionConfig(n_agents=4))
    back = Cmpg.from_dict(game.to_dict())
    rng = np.random.default_rng(2)
    pol = random_joint_policy(rng, game)
    a = cmpg.evaluate(game, pol)
    b = cmpg.evaluate(back, pol)
    assert np.array_equal(a.reward_values, b.reward_values)
    assert np.array_equal(a.cost_values, b.cost_values)


# ----------------------------------------------------------------- bimatrix

def test_bimatrix_matches_bilinear_form():
    bm = counterexample()
    game = cmpg.build_bimatrix(bm.A, bm.B, bm.alpha)
    rng = np.random.default_rng(3)
    for _ in range(10):
        p, q = rng.random(2)
        p1, p2 = np.array([1 - p, p]), np.array([1 - q, q])
        pol = JointPolicy([AgentPolicy(p1[None, None, :]),
                           AgentPolicy(p2[None, None, :])])
        res = cmpg.evaluate(game, pol)
        assert abs(res.reward_values[0] * game.reward_scale
                   - p1 @ bm.A @ p2) < 1e-10
        assert abs(res.cost_values[0] - p1 @ bm.B @ p2) < 1e-10


def test_bimatrix_zero_cost_always_feasible():
    game = cmpg.build_bimatrix(np.eye(2), np.zeros((2, 2)), 0.0)
    rng = np.random.default_rng(4)
    ok, _ = cmpg.is_feasible(game, random_joint_policy(rng, game))
    assert ok


def test_bimatrix_constant_reward_all_nash():
    game = cmpg.build_bimatrix(np.full((2, 2), 2.0), np.zeros((2, 2)), 0.0)
    rng = np.random.default_rng(5)
    _, worst = cmpg.verify_nash(game, random_joint_policy(rng, game))
    assert worst < 1e-8
