"""
Coordinate-ascent Nash finding for constrained Markov potential games.

Each cycle, every agent solves its induced CMDP against the frozen profile;
only the agent with the largest exact (or estimated) improvement gap updates
its policy, and only if that gap exceeds epsilon/2.  All intermediate
profiles stay feasible because every candidate policy is feasible for the
induced CMDP by construction.
"""
import math
import time

import numpy as np
from scipy.optimize import linprog
import scipy.sparse as sp

from .game import AgentPolicy, JointPolicy, evaluate, is_feasible, simulate_batch
from .cmdp import (Cmdp, induce_cmdp, solve_cmdp_lp, solve_mdp,
                   solve_cmdp_generative, online_to_batch_select,
                   GenerativeModel, flow_constraints)


class InfeasibleGame(Exception):
    """No policy satisfies the constraints (or the supplied init does not)."""


class RunTrace:
    """Per-cycle record of gaps, the selected agent, values and sample usage."""

    def __init__(self, n_agents, n_constraints):
        self.n_agents = n_agents
        self.n_constraints = n_constraints
        self.cycles = []
        self.gaps = []            # per cycle: (n_agents,) array
        self.selected = []        # agent index or None on termination
        self.cost_values = []     # per cycle: (k,) costs of pi^t
        self.reward_values = []   # per cycle: (n,) rewards of pi^t
        self.wall_clock = []
        self.episodes_used = []   # cumulative episodes after the cycle
        self.env_steps = []       # cumulative H * episodes
        self.gen_samples = []     # cumulative generative-oracle draws

    def record(self, cycle, gaps, selected, cost_values, reward_values,
               wall_clock, episodes_used=0, env_steps=0, gen_samples=0):
        self.cycles.append(cycle)
        self.gaps.append(np.asarray(gaps, dtype=float))
        self.selected.append(selected)
        self.cost_values.append(np.asarray(cost_values, dtype=float))
        self.reward_values.append(np.asarray(reward_values, dtype=float))
        self.wall_clock.append(wall_clock)
        self.episodes_used.append(episodes_used)
        self.env_steps.append(env_steps)
        self.gen_samples.append(gen_samples)

    def __len__(self):
        return len(self.cycles)

    def to_csv(self, path):
        n = self.n_agents
        header = ["cycle", "agent", "gap", "selected", "V_c"]
        header += ["V_r_agent%d" % i for i in range(n)]
        header += ["episodes_used"]
        with open(path, "w") as f:
            f.write(",".join(header) + "\n")
            for t in range(len(self.cycles)):
                sel = self.selected[t]
                for i in range(n):
                    row = [str(self.cycles[t]), str(i),
                           "%.17g" % self.gaps[t][i],
                           "1" if sel == i else "0",
                           "%.17g" % self.cost_values[t][0]]
                    row += ["%.17g" % v for v in self.reward_values[t]]
                    row += [str(self.episodes_used[t])]
                    f.write(",".join(row) + "\n")


class ExploreConfig:
    """Exploration-mode parameters derived from (epsilon, delta).

    M is the episode count per estimated policy, T the cycle budget and
    delta_prime the per-solver confidence.  `slater` is the Slater constant
    handed to the generative solver; `solver_overrides` may replace the
    theory-scale N/T/U of the inner solver for desk-scale runs.
    """

    def __init__(self, epsilon, delta, n_agents, horizon, slater=None,
                 solver="generative", solver_overrides=None):
        if not (0 < delta < 1):
            raise ValueError("delta must lie in (0,1)")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.n_agents = n_agents
        self.horizon = horizon
        self.slater = slater
        self.solver = solver
        self.solver_overrides = dict(solver_overrides or {})
        n, H = n_agents, horizon
        self.M = math.ceil(32 * H ** 2 / epsilon ** 2
                           * math.log(32 * n ** 2 * H / (epsilon * delta)))
        self.T = math.ceil(4 * n * H / epsilon)
        self.delta_prime = epsilon * delta / (8 * n ** 2 * H)


def ca_cmpg_known(game, init, epsilon, t_max=None, cmdp_solver=None,
                  use_counts=False):
    """Known-model coordinate ascent (exact gaps, exact-feasibility solver).

    Returns (policy, RunTrace).  The returned policy is the last accepted
    profile; it is feasible and epsilon-Nash on termination.
    """
    init.check_matches(game)
    ok, _ = is_feasible(game, init)
    if not ok:
        raise InfeasibleGame("initial policy violates the constraints")
    if cmdp_solver is None:
        cmdp_solver = solve_cmdp_lp
    n, H = game.n_agents, game.horizon
    T = math.ceil(2 * n * H / epsilon) if t_max is None else int(t_max)
    trace = RunTrace(n, game.n_constraints)
    pi = init
    base = evaluate(game, pi, use_counts=use_counts)
    t0 = time.monotonic()
    for t in range(1, T + 1):
        gaps = np.zeros(n)
        cands = [None] * n
        cand_evals = [None] * n
        for i in range(n):
            model = induce_cmdp(game, i, pi, use_counts=use_counts)
            cand, _, _ = cmdp_solver(model)
            cands[i] = cand
            cand_evals[i] = evaluate(game, pi.with_agent(i, cand),
                                     use_counts=use_counts)
            gaps[i] = cand_evals[i].reward_values[i] - base.reward_values[i]
        j = int(np.argmax(gaps))
        if gaps[j] > epsilon / 2:
            pi = pi.with_agent(j, cands[j])
            base = cand_evals[j]
            trace.record(t, gaps, j, base.cost_values, base.reward_values,
                         time.monotonic() - t0)
        else:
            trace.record(t, gaps, None, base.cost_values, base.reward_values,
                         time.monotonic() - t0)
            break
    return pi, trace


def _explore_candidate(game, agent, pi, cfg, rng):
    """One agent's inner CMDP solve in exploration mode."""
    model = induce_cmdp(game, agent, pi)
    if cfg.solver == "exact":
        cand, _, _ = solve_cmdp_lp(model)
        return cand, 0
    if cfg.solver == "generative":
        gen = GenerativeModel(model.transitions, rng)
        cand, _, _ = solve_cmdp_generative(
            gen, model, cfg.slater, cfg.epsilon / 4, cfg.delta_prime,
            **cfg.solver_overrides)
        return cand, gen.total_samples
    if callable(cfg.solver):
        # safe-stream mode: caller supplies a stream of feasible policies
        stream = cfg.solver(agent, model, rng)
        episodes = cfg.solver_overrides.get("stream_episodes")
        cand, _, _ = online_to_batch_select(stream, model=model,
                                            episodes=episodes, rng=rng)
        return cand, 0
    raise ValueError("unknown solver selection %r" % (cfg.solver,))


def ca_cmpg_explore(game, init, cfg, rng):
    """Exploration-mode coordinate ascent: gaps from Monte-Carlo estimates.

    The current profile's M-episode batch is executed once per cycle and
    shared across all agents' estimates; each candidate gets a fresh batch.
    The RunTrace ledger counts episodes, environment steps (H per episode)
    and generative-oracle draws.
    """
    rng = np.random.default_rng(rng)
    init.check_matches(game)
    ok, _ = is_feasible(game, init)
    if not ok:
        raise InfeasibleGame("initial policy violates the constraints")
    n, H = game.n_agents, game.horizon
    trace = RunTrace(n, game.n_constraints)
    pi = init
    episodes = 0
    gen_samples = 0
    t0 = time.monotonic()
    for t in range(1, cfg.T + 1):
        # one shared batch estimates all n agents' values of pi^{t-1}
        r_batch, _ = simulate_batch(game, pi, cfg.M, rng)
        episodes += cfg.M
        base_hat = r_batch.mean(axis=0)
        gaps = np.zeros(n)
        cands = [None] * n
        for i in range(n):
            cand, used = _explore_candidate(game, i, pi, cfg, rng)
            gen_samples += used
            cands[i] = cand
            r_cand, _ = simulate_batch(game, pi.with_agent(i, cand), cfg.M, rng)
            episodes += cfg.M
            gaps[i] = r_cand[:, i].mean() - base_hat[i]
        j = int(np.argmax(gaps))
        selected = j if gaps[j] > cfg.epsilon / 2 else None
        if selected is not None:
            pi = pi.with_agent(j, cands[j])
        exact = evaluate(game, pi)
        trace.record(t, gaps, selected, exact.cost_values, exact.reward_values,
                     time.monotonic() - t0, episodes_used=episodes,
                     env_steps=episodes * H, gen_samples=gen_samples)
        if selected is None:
            break
    return pi, trace


def feasible_init_single_constraint(game):
    """Deterministic feasible profile via the joint min-cost MDP (Example 1).

    Solves the joint-action MDP that minimizes V^{c_1} by backward induction
    (ties to the lowest joint-action index), factors the deterministic joint
    policy per agent, and verifies feasibility.
    """
    if game.n_constraints != 1:
        raise ValueError("single-constraint initialization requires k = 1")
    H, S, K = game.horizon, game.n_states, game.n_joint_actions
    V = np.zeros(S)
    joint_acts = np.zeros((H, S), dtype=np.int64)
    idx = np.arange(S)
    for h in np.flip(range(H)):
        Q = game.costs[0, h] + game.transitions[h] @ V
        joint_acts[h] = np.argmin(Q, axis=1)
        V = Q[idx, joint_acts[h]]
    min_cost = float(V @ game.initial_dist)
    if min_cost > game.thresholds[0] + 1e-8:
        raise InfeasibleGame("minimum achievable cost %.6g exceeds threshold %.6g"
                             % (min_cost, game.thresholds[0]))
    per_agent = np.array(np.unravel_index(joint_acts, game.n_actions))
    policies = [AgentPolicy.deterministic(per_agent[i], game.n_actions[i])
                for i in range(game.n_agents)]
    return JointPolicy(policies)


class FactoredAgentModel:
    """One agent's independent MDP piece plus its cost contributions.

    transitions: (H, S_i, A_i, S_i); costs: (k, H, S_i, A_i) giving the
    agent's additive share of each composite constraint.
    """

    def __init__(self, n_states, n_actions, horizon, transitions, costs,
                 initial_dist):
        self.n_states = n_states
        self.n_actions = n_actions
        self.horizon = horizon
        self.transitions = np.asarray(transitions, dtype=float)
        self.costs = np.asarray(costs, dtype=float)
        self.initial_dist = np.asarray(initial_dist, dtype=float)


def feasible_init_independent(agent_models, thresholds):
    """Feasible init for independent transitions + composite costs (Example 2).

    Per agent, minimizes the worst constraint contribution max_j V^{c_j^i}
    (an MDP for k = 1, a small LP otherwise); feasibility of the product is
    verified against the additive composition sum_i V^{c_j^i} <= alpha_j.
    Returns (per-agent policies, per-agent worst-cost values).
    """
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
    k = len(thresholds)
    policies = []
    contrib = np.zeros((len(agent_models), k))
    for i, m in enumerate(agent_models):
        if m.costs.shape[0] != k:
            raise ValueError("agent %d supplies %d cost tables, expected %d"
                             % (i, m.costs.shape[0], k))
        if k == 1:
            dummy = Cmdp(m.n_states, m.n_actions, m.horizon, m.transitions,
                         np.zeros_like(m.costs[0]), m.costs[0], 0.0,
                         m.initial_dist)
            pol, neg_val = solve_mdp(dummy, stage_reward=-m.costs[0])
            policies.append(pol)
            contrib[i, 0] = -neg_val
        else:
            pol, vals = _minimize_worst_cost_lp(m)
            policies.append(pol)
            contrib[i] = vals
    totals = contrib.sum(axis=0)
    if np.any(totals > thresholds + 1e-8):
        raise InfeasibleGame("composite costs %s exceed thresholds %s"
                             % (totals, thresholds))
    return policies, contrib


def _minimize_worst_cost_lp(m):
    """min over policies of max_j V^{c_j} via an occupancy LP with a slack."""
    from .occupancy import OccupancyMeasure, policy_from_occupancy
    H, S, A = m.horizon, m.n_states, m.n_actions
    nvar = H * S * A
    A_eq, b_eq = flow_constraints(m.transitions, m.initial_dist)
    A_eq = sp.hstack([A_eq, sp.csr_matrix((A_eq.shape[0], 1))]).tocsr()
    k = m.costs.shape[0]
    A_ub = sp.hstack([sp.csr_matrix(m.costs.reshape(k, nvar)),
                      -np.ones((k, 1))]).tocsr()
    c = np.zeros(nvar + 1)
    c[-1] = 1.0
    res = linprog(c=c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * nvar + [(None, None)], method="highs")
    if res.status != 0:
        raise RuntimeError("worst-cost LP failed: %s" % res.message)
    rho = np.clip(res.x[:nvar].reshape(H, S, A), 0.0, None)
    pol = policy_from_occupancy(OccupancyMeasure(rho), A)
    vals = m.costs.reshape(k, nvar) @ rho.ravel()
    return pol, vals


class SlaterEstimate:
    def __init__(self, value, exact, n_samples):
        self.value = value
        self.exact = exact          # True only for the closed-form LP case
        self.n_samples = n_samples  # opponent profiles examined

    def __repr__(self):
        kind = "exact" if self.exact else "upper bound (%d samples)" % self.n_samples
        return "SlaterEstimate(%.6g, %s)" % (self.value, kind)


def _matrix_game_value(C):
    """max over column mixtures q of min over rows of (C q) -- small LP."""
    m, k = C.shape
    # variables: (q_1..q_k, v); maximize v
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-C, np.ones((m, 1))])
    A_eq = np.zeros((1, k + 1))
    A_eq[0, :k] = 1.0
    res = linprog(c=c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * k + [(None, None)], method="highs")
    if res.status != 0:
        raise RuntimeError("matrix-game LP failed: %s" % res.message)
    return float(res.x[-1])


def slater_constant(game, n_samples=200, rng=0):
    """Slater constant: worst-case best achievable slack across agents.

    zeta = min_i min_{pi_{-i}} max_{pi_i} (alpha - V^c).  Exact for the
    two-agent single-state single-step case (inner max over vertices makes
    the objective a matrix game in the opponent's mixture); otherwise the
    minimum over sampled opponent product profiles of the exact inner max,
    reported explicitly as an upper bound.
    """
    if game.n_constraints != 1:
        raise ValueError("Slater constant implemented for k = 1")
    alpha = float(game.thresholds[0])
    if game.n_agents == 2 and game.n_states == 1 and game.horizon == 1:
        C = game.costs[0, 0, 0].reshape(game.n_actions)
        z0 = alpha - _matrix_game_value(C)
        z1 = alpha - _matrix_game_value(C.T)
        return SlaterEstimate(min(z0, z1), True, 0)
    rng = np.random.default_rng(rng)
    H, S = game.horizon, game.n_states
    best = np.inf
    for i in range(game.n_agents):
        for _ in range(n_samples):
            others = []
            for j in range(game.n_agents):
                raw = rng.random((H, S, game.n_actions[j]))
                others.append(AgentPolicy(raw / raw.sum(axis=-1, keepdims=True)))
            model = induce_cmdp(game, i, JointPolicy(others),
                                use_counts=game.count_symmetry is not None)
            _, neg_min_cost = solve_mdp(model, stage_reward=-model.costs)
            best = min(best, alpha + neg_min_cost)
    return SlaterEstimate(best, False, n_samples * game.n_agents)


def verify_nash(game, policy, tol=1e-8, use_counts=False):
    """Per-agent best-response gaps via induced-CMDP LPs.

    Returns (gaps array, max gap).  The input policy must be feasible.
    """
    ok, _ = is_feasible(game, policy, tol=tol)
    if not ok:
        raise InfeasibleGame("verify_nash requires a feasible policy")
    base = evaluate(game, policy, use_counts=use_counts)
    gaps = np.zeros(game.n_agents)
    for i in range(game.n_agents):
        model = induce_cmdp(game, i, policy, use_counts=use_counts)
        _, v_best, _ = solve_cmdp_lp(model)
        gaps[i] = v_best - base.reward_values[i]
    if np.min(gaps) < -1e-8:
        raise RuntimeError("negative best-response gap %.3g: LP inconsistency"
                           % np.min(gaps))
    return gaps, float(np.max(gaps))


def estimate_value_mc(game, policy, n_episodes, rng):
    """Monte-Carlo value estimates from n_episodes rollouts (one shared batch)."""
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    r, c = simulate_batch(game, policy, n_episodes, rng)
    return r.mean(axis=0), c.mean(axis=0)
