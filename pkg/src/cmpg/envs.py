"""
The two experiment environments as dense tabular games, plus the bimatrix
wrapper.

Grid world: two cooperative agents on a 4x4 grid, deterministic moves,
shared reward for entering bonus/target cells, a collision cost whenever
both agents' successor cells coincide away from start/target.

Congestion game: N agents, states {safe, unsafe}, four actions; rewards
grow with the number of agents picking the same action, the state flips on
congestion (k* = the largest action count), and congestion in the unsafe
state at the first step is the constrained cost.
"""
import itertools
import warnings

import numpy as np

from .game import Cmpg, CountSymmetry
from .duality import BimatrixCmpg

GRID_ACTIONS = ("up", "right", "down", "left")
_MOVES = {0: (0, 1), 1: (1, 0), 2: (0, -1), 3: (-1, 0)}


class GridWorldConfig:
    """4x4 grid-world parameters (cells given as (x, y) from bottom-left)."""

    def __init__(self, width=4, height=4, start=(0, 0), target=(3, 2),
                 bonus_cells=None, horizon=6, alpha=0.1, reward_scale=20.0,
                 reward_on_stay=False, bonus_per_visit=True):
        self.width = width
        self.height = height
        self.start = tuple(start)
        self.target = tuple(target)
        # cell -> raw reward for entering it
        self.bonus_cells = dict(bonus_cells) if bonus_cells is not None \
            else {(1, 0): 2.0, (0, 1): 1.0}
        self.target_reward = 10.0
        self.horizon = horizon
        self.alpha = alpha
        self.reward_scale = reward_scale
        self.reward_on_stay = reward_on_stay
        self.bonus_per_visit = bonus_per_visit
        if self.start == self.target:
            raise ValueError("start and target must differ")
        for cell in [self.start, self.target] + list(self.bonus_cells):
            if not (0 <= cell[0] < width and 0 <= cell[1] < height):
                raise ValueError("cell %s outside the grid" % (cell,))
        dist = abs(self.start[0] - self.target[0]) + abs(self.start[1] - self.target[1])
        if self.horizon < dist:
            warnings.warn("horizon %d is shorter than the start-target "
                          "distance %d" % (self.horizon, dist))

    def cell_index(self, cell):
        return cell[0] + self.width * cell[1]


def build_grid_world(cfg=None):
    """Two-agent cooperative grid world as a dense joint-state game."""
    if cfg is None:
        cfg = GridWorldConfig()
    W, Hh = cfg.width, cfg.height
    n_cells = W * Hh
    start = cfg.cell_index(cfg.start)
    target = cfg.cell_index(cfg.target)
    # per-agent successor table: cell x action -> cell (target absorbing)
    succ = np.zeros((n_cells, 4), dtype=int)
    for c in range(n_cells):
        x, y = c % W, c // W
        for a, (dx, dy) in _MOVES.items():
            nx, ny = x + dx, y + dy
            if not (0 <= nx < W and 0 <= ny < Hh):
                nx, ny = x, y
            succ[c, a] = nx + W * ny
    succ[target, :] = target
    cell_reward = np.zeros(n_cells)
    for cell, r in cfg.bonus_cells.items():
        cell_reward[cfg.cell_index(cell)] = float(r)
    cell_reward[target] = cfg.target_reward

    def enter_reward(pos, nxt):
        if pos == target:
            return 0.0          # absorbed; the +10 was paid on entry
        if nxt == pos and not cfg.reward_on_stay:
            return 0.0          # bumping a wall is not entering
        return cell_reward[nxt]

    H = cfg.horizon
    S = n_cells * n_cells
    K = 16
    transitions = np.zeros((S, K, S))
    stage_r = np.zeros((S, K))
    stage_c = np.zeros((S, K))
    for p1 in range(n_cells):
        for p2 in range(n_cells):
            s = p1 * n_cells + p2
            for a1 in range(4):
                n1 = succ[p1, a1]
                for a2 in range(4):
                    n2 = succ[p2, a2]
                    k = a1 * 4 + a2
                    transitions[s, k, n1 * n_cells + n2] = 1.0
                    stage_r[s, k] = (enter_reward(p1, n1)
                                     + enter_reward(p2, n2)) / cfg.reward_scale
                    if n1 == n2 and n1 not in (start, target):
                        stage_c[s, k] = 1.0
    transitions = np.repeat(transitions[None], H, axis=0)
    stage_r = np.repeat(stage_r[None], H, axis=0)
    stage_c = np.repeat(stage_c[None], H, axis=0)
    mu = np.zeros(S)
    mu[start * n_cells + start] = 1.0
    return Cmpg(n_agents=2, n_states=S, n_actions=(4, 4), horizon=H,
                transitions=transitions,
                rewards=np.repeat(stage_r[None], 2, axis=0),
                costs=stage_c[None], thresholds=[cfg.alpha],
                initial_dist=mu, cooperative=True,
                reward_scale=cfg.reward_scale)


class CongestionConfig:
    """Congestion-game parameters; weights must be strictly increasing per
    state and safe rewards must dominate unsafe ones at every count."""

    def __init__(self, n_agents=8, weights_safe=(1.0, 2.0, 3.0, 4.0),
                 weights_unsafe=(0.5, 1.0, 1.5, 2.0), cost_offset=3.0,
                 horizon=2, alpha=0.5):
        self.n_agents = n_agents
        self.weights_safe = np.asarray(weights_safe, dtype=float)
        self.weights_unsafe = np.asarray(weights_unsafe, dtype=float)
        self.cost_offset = float(cost_offset)
        self.horizon = horizon
        self.alpha = alpha
        self.n_actions = len(self.weights_safe)
        if len(self.weights_unsafe) != self.n_actions:
            raise ValueError("weight vectors must have equal length")
        for w in (self.weights_safe, self.weights_unsafe):
            if not np.all(np.diff(w) > 0):
                raise ValueError("weights must be strictly increasing")
        ks = np.arange(1, n_agents + 1)[:, None]
        if not np.all(ks * self.weights_safe[None, :]
                      > ks * self.weights_unsafe[None, :] - self.cost_offset):
            raise ValueError("safe rewards must dominate unsafe ones at "
                             "every count")
        self.reward_scale = n_agents * self.weights_safe[-1]


SAFE, UNSAFE = 0, 1


def build_congestion_game(cfg=None):
    """N-agent congestion game with count symmetry declared.

    Stage quantities depend on the joint action only through the action
    counts: an agent picking action a earns k_a * w_a (safe) or
    max(0, k_a * w_a - c_off) (unsafe); the state flips to unsafe when the
    top count k* exceeds N/2 and returns to safe when k* <= N/4; congestion
    in the unsafe state at the first step costs 1.
    """
    if cfg is None:
        cfg = CongestionConfig()
    n, A, H = cfg.n_agents, cfg.n_actions, cfg.horizon
    scale = cfg.reward_scale

    def raw_reward(state, a, counts):
        k = counts[a]
        if state == SAFE:
            return k * cfg.weights_safe[a]
        return max(0.0, k * cfg.weights_unsafe[a] - cfg.cost_offset)

    def agent_reward(h, s, a, counts):
        return raw_reward(s, a, counts) / scale

    def cost(j, h, s, counts):
        if h == 0 and s == UNSAFE and max(counts) > n / 2:
            return 1.0
        return 0.0

    def next_dist(h, s, counts):
        k_star = max(counts)
        out = np.zeros(2)
        if s == SAFE:
            out[UNSAFE if k_star > n / 2 else SAFE] = 1.0
        else:
            out[SAFE if k_star <= n / 4 else UNSAFE] = 1.0
        return out

    # dense joint tables built from the count-level definitions
    K = A ** n
    digits = np.zeros((K, n), dtype=int)
    idx = np.arange(K)
    for i in range(n - 1, -1, -1):
        digits[:, i] = idx % A
        idx //= A
    counts = np.stack([(digits == a).sum(axis=1) for a in range(A)], axis=1)
    k_star = counts.max(axis=1)
    rewards = np.zeros((n, H, 2, K))
    for i in range(n):
        a_i = digits[:, i]
        k_i = counts[np.arange(K), a_i]
        safe_r = k_i * cfg.weights_safe[a_i] / scale
        unsafe_r = np.maximum(0.0, k_i * cfg.weights_unsafe[a_i]
                              - cfg.cost_offset) / scale
        for h in range(H):
            rewards[i, h, SAFE] = safe_r
            rewards[i, h, UNSAFE] = unsafe_r
    costs = np.zeros((1, H, 2, K))
    costs[0, 0, UNSAFE] = (k_star > n / 2).astype(float)
    transitions = np.zeros((H, 2, K, 2))
    from_safe_unsafe = (k_star > n / 2)
    from_unsafe_safe = (k_star <= n / 4)
    for h in range(H):
        transitions[h, SAFE, :, UNSAFE] = from_safe_unsafe
        transitions[h, SAFE, :, SAFE] = ~from_safe_unsafe
        transitions[h, UNSAFE, :, SAFE] = from_unsafe_safe
        transitions[h, UNSAFE, :, UNSAFE] = ~from_unsafe_safe
    mu = np.array([0.5, 0.5])
    sym = CountSymmetry(A, agent_reward, cost, next_dist)
    return Cmpg(n_agents=n, n_states=2, n_actions=(A,) * n, horizon=H,
                transitions=transitions, rewards=rewards, costs=costs,
                thresholds=[cfg.alpha], initial_dist=mu, cooperative=False,
                reward_scale=scale, count_symmetry=sym)


def build_bimatrix(A, B, alpha):
    """Single-state, single-step two-agent game from raw matrices."""
    return BimatrixCmpg(A, B, alpha).to_cmpg()
