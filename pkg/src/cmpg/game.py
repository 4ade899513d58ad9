"""
Data model for tabular constrained Markov potential games and exact
evaluation by backward induction over the joint process.

Conventions used throughout the package:
  - steps are 0-indexed internally (h = 0..H-1)
  - joint actions are flattened in C order, agent 0 most significant
  - transitions: (H, S, K, S), rewards: (n, H, S, K), costs: (k, H, S, K)
"""
import itertools
import json
import numpy as np

PROB_TOL = 1e-12
VALUE_TOL = 1e-10


class CountSymmetry:
    """Declares that a game's stage quantities depend on opponents only
    through action counts, and provides the count-level tables.

    All agents must share a single action set.  `agent_reward(h, s, a, counts)`
    gives the reward of an agent playing action a when the full count vector
    (including that agent) is `counts`; `cost(j, h, s, counts)` and
    `next_dist(h, s, counts)` are count-level versions of the cost and
    transition tables.
    """

    def __init__(self, n_actions, agent_reward, cost, next_dist):
        self.n_actions = n_actions
        self.agent_reward = agent_reward
        self.cost = cost
        self.next_dist = next_dist


def compositions(total, slots):
    """All count vectors of `slots` nonnegative ints summing to `total`."""
    if slots == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        for rest in compositions(total - first, slots - 1):
            out.append((first,) + rest)
    return out


class Cmpg:
    """A constrained Markov potential game in dense tabular form."""

    def __init__(self, n_agents, n_states, n_actions, horizon, transitions,
                 rewards, costs, thresholds, initial_dist, cooperative=False,
                 reward_scale=1.0, count_symmetry=None):
        self.n_agents = n_agents
        self.n_states = n_states
        self.n_actions = tuple(int(a) for a in n_actions)
        self.horizon = horizon
        self.transitions = np.asarray(transitions, dtype=float)
        self.rewards = np.asarray(rewards, dtype=float)
        self.costs = np.asarray(costs, dtype=float)
        self.thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
        self.initial_dist = np.asarray(initial_dist, dtype=float)
        self.cooperative = cooperative
        # raw-scale reporting factor: raw value = scaled value * reward_scale
        self.reward_scale = reward_scale
        self.count_symmetry = count_symmetry
        self.validate()

    @property
    def n_joint_actions(self):
        return int(np.prod(self.n_actions))

    @property
    def n_constraints(self):
        return len(self.thresholds)

    def validate(self):
        n, S, K, H = self.n_agents, self.n_states, self.n_joint_actions, self.horizon
        if len(self.n_actions) != n:
            raise ValueError("need one action count per agent")
        if self.transitions.shape != (H, S, K, S):
            raise ValueError("transitions shape %s, expected %s"
                             % (self.transitions.shape, (H, S, K, S)))
        if self.rewards.shape != (n, H, S, K):
            raise ValueError("rewards shape %s, expected %s"
                             % (self.rewards.shape, (n, H, S, K)))
        if self.costs.shape != (self.n_constraints, H, S, K):
            raise ValueError("costs shape %s, expected %s"
                             % (self.costs.shape, (self.n_constraints, H, S, K)))
        if self.initial_dist.shape != (S,):
            raise ValueError("initial_dist shape %s" % (self.initial_dist.shape,))
        row_sums = self.transitions.sum(axis=-1)
        if np.max(np.abs(row_sums - 1.0)) > PROB_TOL or np.min(self.transitions) < 0:
            raise ValueError("transition rows must be distributions")
        if np.min(self.rewards) < -PROB_TOL or np.max(self.rewards) > 1 + PROB_TOL:
            raise ValueError("rewards must lie in [0,1]")
        if np.min(self.costs) < -PROB_TOL or np.max(self.costs) > 1 + PROB_TOL:
            raise ValueError("costs must lie in [0,1]")
        if np.min(self.thresholds) < 0 or np.max(self.thresholds) > H:
            raise ValueError("thresholds must lie in [0,H]")
        if abs(self.initial_dist.sum() - 1.0) > PROB_TOL or np.min(self.initial_dist) < 0:
            raise ValueError("initial_dist must be a distribution")

    def joint_index(self, actions):
        """Flatten a tuple of per-agent actions into a joint-action index."""
        return int(np.ravel_multi_index(tuple(actions), self.n_actions))

    def to_dict(self):
        d = {
            "n_agents": self.n_agents,
            "states": self.n_states,
            "actions_per_agent": list(self.n_actions),
            "horizon": self.horizon,
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "costs": self.costs.tolist(),
            "thresholds": self.thresholds.tolist(),
            "initial_dist": self.initial_dist.tolist(),
        }
        if self.cooperative:
            d["cooperative"] = True
        if self.reward_scale != 1.0:
            d["reward_scale"] = self.reward_scale
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            n_agents=d["n_agents"],
            n_states=d["states"],
            n_actions=d["actions_per_agent"],
            horizon=d["horizon"],
            transitions=d["transitions"],
            rewards=d["rewards"],
            costs=d["costs"],
            thresholds=d["thresholds"],
            initial_dist=d["initial_dist"],
            cooperative=d.get("cooperative", False),
            reward_scale=d.get("reward_scale", 1.0),
        )

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


class AgentPolicy:
    """A step- and state-indexed action distribution, shape (H, S, A)."""

    def __init__(self, dist):
        self.dist = np.asarray(dist, dtype=float)
        if self.dist.ndim != 3:
            raise ValueError("policy must have shape (H, S, A)")
        rows = self.dist.sum(axis=-1)
        if np.max(np.abs(rows - 1.0)) > PROB_TOL or np.min(self.dist) < 0:
            raise ValueError("policy rows must be distributions")

    @classmethod
    def deterministic(cls, actions, n_actions):
        """Build a one-hot policy from an (H, S) int array of actions."""
        actions = np.asarray(actions, dtype=int)
        H, S = actions.shape
        dist = np.zeros((H, S, n_actions))
        h_idx, s_idx = np.meshgrid(range(H), range(S), indexing="ij")
        dist[h_idx, s_idx, actions] = 1.0
        return cls(dist)

    @classmethod
    def uniform(cls, horizon, n_states, n_actions):
        return cls(np.full((horizon, n_states, n_actions), 1.0 / n_actions))

    @property
    def horizon(self):
        return self.dist.shape[0]

    @property
    def n_states(self):
        return self.dist.shape[1]

    @property
    def n_actions(self):
        return self.dist.shape[2]

    def copy(self):
        return AgentPolicy(self.dist.copy())


class JointPolicy:
    """A product policy profile: one AgentPolicy per agent."""

    def __init__(self, agents):
        self.agents = list(agents)

    def __len__(self):
        return len(self.agents)

    def __getitem__(self, i):
        return self.agents[i]

    def with_agent(self, i, policy):
        agents = list(self.agents)
        agents[i] = policy
        return JointPolicy(agents)

    def copy(self):
        return JointPolicy([a.copy() for a in self.agents])

    def check_matches(self, game):
        if len(self.agents) != game.n_agents:
            raise ValueError("policy has %d agents, game has %d"
                             % (len(self.agents), game.n_agents))
        for i, ap in enumerate(self.agents):
            if ap.dist.shape != (game.horizon, game.n_states, game.n_actions[i]):
                raise ValueError(
                    "agent %d policy shape %s does not match game (%d,%d,%d)"
                    % (i, ap.dist.shape, game.horizon, game.n_states,
                       game.n_actions[i]))

    def joint_rows(self, h, n_states):
        """Dense joint action distribution per state at step h, shape (S, K)."""
        mat = np.ones((n_states, 1))
        for ap in self.agents:
            mat = (mat[:, :, None] * ap.dist[h][:, None, :]).reshape(n_states, -1)
        return mat


class EvalResult:
    """Exact values of a joint policy: per-agent rewards, per-constraint costs."""

    def __init__(self, reward_values, cost_values, per_step_state_values=None):
        self.reward_values = np.asarray(reward_values, dtype=float)
        self.cost_values = np.asarray(cost_values, dtype=float)
        self.per_step_state_values = per_step_state_values


def evaluate(game, policy, use_counts=False, per_step=False):
    """Exact V^{r_i} and V^{c_j} of a joint policy by backward induction.

    With use_counts=True (requires game.count_symmetry) the joint-action sums
    are computed by count-convolution marginalization instead of enumerating
    all |A|^n profiles; the result is identical up to round-off.
    """
    policy.check_matches(game)
    if use_counts:
        return _evaluate_counts(game, policy)
    H, S = game.horizon, game.n_states
    # stack reward and cost layers so one DP pass computes everything
    tables = np.concatenate([game.rewards, game.costs], axis=0)  # (L,H,S,K)
    L = tables.shape[0]
    V = np.zeros((L, S))
    steps = [] if per_step else None
    for h in np.flip(range(H)):
        cont = np.einsum("sko,lo->lsk", game.transitions[h], V)
        Q = tables[:, h] + cont
        rows = policy.joint_rows(h, S)
        V = np.einsum("sk,lsk->ls", rows, Q)
        if per_step:
            steps.append(V.copy())
    values = V @ game.initial_dist
    if per_step:
        steps.reverse()
    n = game.n_agents
    return EvalResult(values[:n], values[n:], per_step_state_values=steps)


def _evaluate_counts(game, policy):
    # each agent's value equals the value of its induced single-agent model
    # under its own policy; induction uses the count-convolution marginalizer
    from .cmdp import induce_cmdp, policy_value
    if game.count_symmetry is None:
        raise ValueError("game does not declare count symmetry")
    rewards = np.zeros(game.n_agents)
    costs = None
    for i in range(game.n_agents):
        model = induce_cmdp(game, i, policy, use_counts=True)
        v_r, v_c = policy_value(model, policy.agents[i])
        rewards[i] = v_r
        if i == 0:
            costs = np.atleast_1d(v_c)
    return EvalResult(rewards, costs)


def is_feasible(game, policy, tol=1e-8):
    """Whether V^{c_j}(policy) <= alpha_j + tol for all j; returns slacks too."""
    res = evaluate(game, policy)
    slacks = game.thresholds - res.cost_values
    return bool(np.all(slacks >= -tol)), slacks


def potential_gap(game, policy, deviation, agent):
    """V^{r_i}(deviation, pi_{-i}) - V^{r_i}(pi) for a cooperative game.

    Equals the potential difference Phi(deviation, pi_{-i}) - Phi(pi) since
    the shared value is a potential function in cooperative games.
    """
    if not game.cooperative:
        raise ValueError("potential_gap requires a cooperative game")
    base = evaluate(game, policy).reward_values[agent]
    dev = evaluate(game, policy.with_agent(agent, deviation)).reward_values[agent]
    return dev - base


def sample_episode(game, policy, rng):
    """One trajectory [(s_h, a_h, rewards_h, costs_h)] for h = 1..H."""
    rng = np.random.default_rng(rng)
    policy.check_matches(game)
    s = int(rng.choice(game.n_states, p=game.initial_dist))
    traj = []
    for h in range(game.horizon):
        actions = tuple(int(rng.choice(game.n_actions[i], p=policy.agents[i].dist[h, s]))
                        for i in range(game.n_agents))
        k = game.joint_index(actions)
        rewards = game.rewards[:, h, s, k].copy()
        costs = game.costs[:, h, s, k].copy()
        traj.append((s, actions, rewards, costs))
        s = int(rng.choice(game.n_states, p=game.transitions[h, s, k]))
    return traj


def simulate_batch(game, policy, n_episodes, rng):
    """Cumulative rewards/costs of n_episodes vectorized rollouts.

    Returns (total_rewards (n_episodes, n_agents), total_costs (n_episodes, k)).
    """
    rng = np.random.default_rng(rng)
    policy.check_matches(game)
    M = int(n_episodes)
    states = rng.choice(game.n_states, size=M, p=game.initial_dist)
    total_r = np.zeros((M, game.n_agents))
    total_c = np.zeros((M, game.n_constraints))
    for h in range(game.horizon):
        joint = np.zeros(M, dtype=np.int64)
        for i in range(game.n_agents):
            cdf = np.cumsum(policy.agents[i].dist[h], axis=-1)
            u = rng.random(M)
            a_i = (u[:, None] > cdf[states]).sum(axis=1)
            a_i = np.minimum(a_i, game.n_actions[i] - 1)
            joint = joint * game.n_actions[i] + a_i
        total_r += game.rewards[:, h, states, joint].T
        total_c += game.costs[:, h, states, joint].T
        cdf_s = np.cumsum(game.transitions[h, states, joint], axis=-1)
        u = rng.random(M)
        states = (u[:, None] > cdf_s).sum(axis=1)
        states = np.minimum(states, game.n_states - 1)
    return total_r, total_c
