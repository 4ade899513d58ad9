"""Shared builders for the test suite: canonical bimatrix instances and
random model/game generators used by the property batteries."""
import numpy as np

from cmpg import AgentPolicy, BimatrixCmpg, Cmdp, Cmpg, JointPolicy


def counterexample():
    """The 2x2 instance with a strict duality gap."""
    return BimatrixCmpg([[3, 2], [2, 4]], [[0, 0], [0, 1]], 0.5)


def modified_variant():
    """The 2x2 instance where duality holds but a dual argmax is not Nash."""
    return BimatrixCmpg([[3, 3], [3, 4]], [[0, 0], [0, 1]], 0.5)


def pure_pair(a1, a2, n_actions=2):
    acts = np.zeros((1, 1), dtype=int)
    return JointPolicy([AgentPolicy.deterministic(acts + a1, n_actions),
                        AgentPolicy.deterministic(acts + a2, n_actions)])


def random_cmdp(rng, n_states=3, n_actions=2, horizon=2, threshold=None):
    P = rng.random((horizon, n_states, n_actions, n_states)) ** 2 + 1e-3
    P /= P.sum(axis=-1, keepdims=True)
    r = rng.random((horizon, n_states, n_actions))
    c = rng.random((horizon, n_states, n_actions))
    mu = rng.random(n_states) + 1e-3
    mu /= mu.sum()
    if threshold is None:
        threshold = horizon  # slack constraint by default
    return Cmdp(n_states, n_actions, horizon, P, r, c, threshold, mu)


def random_policy(rng, horizon, n_states, n_actions):
    raw = rng.random((horizon, n_states, n_actions)) + 1e-3
    return AgentPolicy(raw / raw.sum(axis=-1, keepdims=True))


def random_game(rng, n_agents=2, n_states=3, n_actions=(2, 2), horizon=2,
                cooperative=True, alpha=None):
    """A random CMPG; cooperative games share one reward table."""
    K = int(np.prod(n_actions))
    P = rng.random((horizon, n_states, K, n_states)) ** 2 + 1e-3
    P /= P.sum(axis=-1, keepdims=True)
    if cooperative:
        shared = rng.random((horizon, n_states, K))
        rewards = np.repeat(shared[None], n_agents, axis=0)
    else:
        rewards = rng.random((n_agents, horizon, n_states, K))
    costs = rng.random((1, horizon, n_states, K))
    mu = rng.random(n_states) + 1e-3
    mu /= mu.sum()
    if alpha is None:
        alpha = float(horizon)  # always feasible
    return Cmpg(n_agents=n_agents, n_states=n_states, n_actions=n_actions,
                horizon=horizon, transitions=P, rewards=rewards, costs=costs,
                thresholds=[alpha], initial_dist=mu, cooperative=cooperative)


def joint_min_cost(game):
    """Minimum achievable V^c over joint deterministic policies (exact DP)."""
    S = game.n_states
    V = np.zeros(S)
    for h in np.flip(range(game.horizon)):
        Q = game.costs[0, h] + game.transitions[h] @ V
        V = Q.min(axis=1)
    return float(V @ game.initial_dist)


def random_joint_policy(rng, game):
    return JointPolicy([random_policy(rng, game.horizon, game.n_states, a)
                        for a in game.n_actions])
