"""
Everything single-agent: CMDP induction from a game by marginalizing the
opponents out, exact solving (occupancy-measure LP and unconstrained
backward induction), the generative-model primal-dual solver, and the
online-to-batch selection wrapper.
"""
import math

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .game import AgentPolicy, compositions, PROB_TOL
from .occupancy import (OccupancyMeasure, ZERO_MASS, occupancy_from_policy,
                        policy_from_occupancy, average_occupancies,
                        value_from_occupancy)

LP_TOL = 1e-8


class CmdpInfeasible(Exception):
    """The constrained feasible set is empty for this model."""


class ConfigError(ValueError):
    """A solver configuration violates its invariants."""


class Cmdp:
    """A single-agent constrained MDP with one cost constraint."""

    def __init__(self, n_states, n_actions, horizon, transitions, rewards,
                 costs, threshold, initial_dist):
        self.n_states = n_states
        self.n_actions = n_actions
        self.horizon = horizon
        self.transitions = np.asarray(transitions, dtype=float)
        self.rewards = np.asarray(rewards, dtype=float)
        self.costs = np.asarray(costs, dtype=float)
        self.threshold = float(threshold)
        self.initial_dist = np.asarray(initial_dist, dtype=float)
        self.validate()

    def validate(self):
        H, S, A = self.horizon, self.n_states, self.n_actions
        if self.transitions.shape != (H, S, A, S):
            raise ValueError("transitions shape %s, expected %s"
                             % (self.transitions.shape, (H, S, A, S)))
        if self.rewards.shape != (H, S, A) or self.costs.shape != (H, S, A):
            raise ValueError("reward/cost tables must have shape (H, S, A)")
        rows = self.transitions.sum(axis=-1)
        if np.max(np.abs(rows - 1.0)) > PROB_TOL or np.min(self.transitions) < 0:
            raise ValueError("transition rows must be distributions")
        if abs(self.initial_dist.sum() - 1.0) > PROB_TOL or np.min(self.initial_dist) < 0:
            raise ValueError("initial_dist must be a distribution")

    def with_threshold(self, threshold):
        return Cmdp(self.n_states, self.n_actions, self.horizon,
                    self.transitions, self.rewards, self.costs, threshold,
                    self.initial_dist)

    def to_dict(self):
        """Serialize using the game schema with n_agents = 1."""
        return {
            "n_agents": 1,
            "states": self.n_states,
            "actions_per_agent": [self.n_actions],
            "horizon": self.horizon,
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards[None].tolist(),
            "costs": self.costs[None].tolist(),
            "thresholds": [self.threshold],
            "initial_dist": self.initial_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d["n_agents"] != 1:
            raise ValueError("CMDP serialization requires n_agents = 1")
        return cls(d["states"], d["actions_per_agent"][0], d["horizon"],
                   d["transitions"], np.asarray(d["rewards"])[0],
                   np.asarray(d["costs"])[0], d["thresholds"][0],
                   d["initial_dist"])


def policy_value(model, policy):
    """Exact (V^r, V^c) of a policy on a CMDP by backward induction."""
    if policy.dist.shape != (model.horizon, model.n_states, model.n_actions):
        raise ValueError("policy shape %s does not match model"
                         % (policy.dist.shape,))
    Vr = np.zeros(model.n_states)
    Vc = np.zeros(model.n_states)
    for h in np.flip(range(model.horizon)):
        Qr = model.rewards[h] + model.transitions[h] @ Vr
        Qc = model.costs[h] + model.transitions[h] @ Vc
        Vr = np.einsum("sa,sa->s", policy.dist[h], Qr)
        Vc = np.einsum("sa,sa->s", policy.dist[h], Qc)
    return float(Vr @ model.initial_dist), float(Vc @ model.initial_dist)


def induce_cmdp(game, agent, others, use_counts=False):
    """Marginalize the opponents' (frozen) policies out of a game, producing
    the single-agent constrained model faced by `agent`.

    `others` is a JointPolicy; the entry at `agent` is ignored.  With
    use_counts=True the marginalization runs over opponent action-count
    vectors instead of full opponent profiles (requires count symmetry).
    """
    if game.n_constraints != 1:
        raise ValueError("induction implemented for single-constraint games")
    if use_counts:
        return _induce_counts(game, agent, others)
    H, S = game.horizon, game.n_states
    dims = game.n_actions
    A_i = dims[agent]
    # opponent product distribution per (h,s), flattened in agent order
    opp = np.ones((H, S, 1))
    for j in range(game.n_agents):
        if j == agent:
            continue
        pj = others.agents[j].dist
        if pj.shape != (H, S, dims[j]):
            raise ValueError("agent %d policy shape %s does not match game"
                             % (j, pj.shape))
        opp = (opp[:, :, :, None] * pj[:, :, None, :]).reshape(H, S, -1)

    def marginalize(table):
        # (H,S,K) -> (H,S,A_i) against the opponent distribution
        t = np.moveaxis(table.reshape((H, S) + dims), 2 + agent, 2)
        t = t.reshape(H, S, A_i, -1)
        return np.einsum("hsxo,hso->hsx", t, opp)

    r = marginalize(game.rewards[agent])
    c = marginalize(game.costs[0])
    P = np.empty((H, S, A_i, S))
    for h in range(H):
        t = np.moveaxis(game.transitions[h].reshape((S,) + dims + (S,)),
                        1 + agent, 1).reshape(S, A_i, -1, S)
        P[h] = np.einsum("sxot,so->sxt", t, opp[h])
    # kill round-off drift before validation
    P = np.clip(P, 0.0, None)
    P /= P.sum(axis=-1, keepdims=True)
    return Cmdp(S, A_i, H, P, np.clip(r, 0.0, 1.0), np.clip(c, 0.0, 1.0),
                float(game.thresholds[0]), game.initial_dist)


def _induce_counts(game, agent, others):
    cs = game.count_symmetry
    if cs is None:
        raise ValueError("game does not declare count symmetry")
    H, S, A = game.horizon, game.n_states, cs.n_actions
    n = game.n_agents
    opp_counts = compositions(n - 1, A)
    r = np.zeros((H, S, A))
    c = np.zeros((H, S, A))
    P = np.zeros((H, S, A, S))
    for h in range(H):
        for s in range(S):
            # convolve opponents' action distributions into a count distribution
            dist = {(0,) * A: 1.0}
            for j in range(n):
                if j == agent:
                    continue
                pj = others.agents[j].dist[h, s]
                nxt = {}
                for counts, p in dist.items():
                    for a in range(A):
                        if pj[a] == 0.0:
                            continue
                        key = counts[:a] + (counts[a] + 1,) + counts[a + 1:]
                        nxt[key] = nxt.get(key, 0.0) + p * pj[a]
                dist = nxt
            for a in range(A):
                for counts, p in dist.items():
                    full = counts[:a] + (counts[a] + 1,) + counts[a + 1:]
                    r[h, s, a] += p * cs.agent_reward(h, s, a, full)
                    c[h, s, a] += p * cs.cost(0, h, s, full)
                    P[h, s, a] += p * np.asarray(cs.next_dist(h, s, full))
    P = np.clip(P, 0.0, None)
    P /= P.sum(axis=-1, keepdims=True)
    return Cmdp(S, A, H, P, np.clip(r, 0.0, 1.0), np.clip(c, 0.0, 1.0),
                float(game.thresholds[0]), game.initial_dist)


def solve_mdp(model, stage_reward=None):
    """Unconstrained backward induction; ties broken by lowest action index.

    Returns (deterministic AgentPolicy, optimal value).  `stage_reward`
    overrides model.rewards (used for cost minimization and the primal-dual
    inner argmax r - lambda*c).
    """
    stage = model.rewards if stage_reward is None else np.asarray(stage_reward)
    H, S, A = model.horizon, model.n_states, model.n_actions
    acts = np.zeros((H, S), dtype=np.int64)
    V = np.zeros(S)
    idx = np.arange(S)
    for h in np.flip(range(H)):
        Q = stage[h] + model.transitions[h] @ V
        acts[h] = np.argmax(Q, axis=1)
        V = Q[idx, acts[h]]
    return AgentPolicy.deterministic(acts, A), float(V @ model.initial_dist)


def flow_constraints(transitions, initial_dist):
    """Equality constraints of the occupancy polytope (Def. D.1 recursion).

    Variables are rho flattened in (h,s,a) order; returns (A_eq, b_eq).
    """
    H, S, A, _ = transitions.shape
    nvar = H * S * A
    # identity block: sum_a rho_h(s,a) appears in row h*S+s
    rows = [np.repeat(np.arange(H * S), A)]
    cols = [np.arange(nvar)]
    data = [np.ones(nvar)]
    if H > 1:
        # flow block: -P_{h-1}(t|s,a) on rho_{h-1}(s,a) in row h*S+t
        h_i, s_i, a_i, t_i = np.meshgrid(np.arange(1, H), np.arange(S),
                                         np.arange(A), np.arange(S),
                                         indexing="ij")
        coeff = -transitions[h_i.ravel() - 1, s_i.ravel(),
                             a_i.ravel(), t_i.ravel()]
        mask = coeff != 0.0
        rows.append((h_i.ravel() * S + t_i.ravel())[mask])
        cols.append((((h_i.ravel() - 1) * S + s_i.ravel()) * A + a_i.ravel())[mask])
        data.append(coeff[mask])
    A_eq = sp.coo_matrix((np.concatenate(data),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(H * S, nvar)).tocsr()
    b_eq = np.zeros(H * S)
    b_eq[:S] = initial_dist
    return A_eq, b_eq


def solve_cmdp_lp(model):
    """Exact CMDP solve as an LP over the occupancy polytope.

    maximize sum rho*r  s.t. flow constraints, rho >= 0, sum rho*c <= alpha.
    Returns (AgentPolicy, V^r, V^c); raises CmdpInfeasible when the
    constrained set is empty.
    """
    H, S, A = model.horizon, model.n_states, model.n_actions
    nvar = H * S * A
    A_eq, b_eq = flow_constraints(model.transitions, model.initial_dist)
    res = linprog(c=-model.rewards.ravel(),
                  A_ub=model.costs.reshape(1, nvar), b_ub=[model.threshold],
                  A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        raise CmdpInfeasible("occupancy LP infeasible (threshold %.6g)"
                             % model.threshold)
    if res.status != 0:
        raise RuntimeError("LP solver failed: %s" % res.message)
    rho = np.clip(res.x.reshape(H, S, A), 0.0, None)
    occ = OccupancyMeasure(rho)
    if not occ.check_normalized(tol=LP_TOL) or not occ.check_flow(model, tol=LP_TOL):
        raise RuntimeError("LP solution violates flow constraints")
    policy = policy_from_occupancy(occ, A)
    # the optimal occupancy says nothing about states it never visits; fill
    # those rows with the greedy continuation instead of leaving them uniform
    # (zero mass there, so values and feasibility are unaffected)
    mass = rho.sum(axis=-1)
    if np.any(mass <= ZERO_MASS):
        greedy, _ = solve_mdp(model)
        dist = policy.dist.copy()
        dist[mass <= ZERO_MASS] = greedy.dist[mass <= ZERO_MASS]
        policy = AgentPolicy(dist)
    v_r = value_from_occupancy(occ, model.rewards)
    v_c = value_from_occupancy(occ, model.costs)
    if v_c > model.threshold + LP_TOL:
        raise RuntimeError("LP solution violates the cost threshold")
    return policy, v_r, v_c


class GenerativeModel:
    """Sampling oracle for a transition model, with a per-(h,s,a) counter."""

    def __init__(self, transitions, rng):
        self.transitions = np.asarray(transitions, dtype=float)
        self.rng = np.random.default_rng(rng)
        H, S, A, _ = self.transitions.shape
        self.sample_counts = np.zeros((H, S, A), dtype=np.int64)

    def sample(self, h, s, a):
        self.sample_counts[h, s, a] += 1
        return int(self.rng.choice(self.transitions.shape[-1],
                                   p=self.transitions[h, s, a]))

    def sample_frequencies(self, h, s, a, n):
        """Empirical counts of n i.i.d. next-state draws from (h,s,a)."""
        self.sample_counts[h, s, a] += n
        return self.rng.multinomial(n, self.transitions[h, s, a])

    @property
    def total_samples(self):
        return int(self.sample_counts.sum())


def build_empirical_cmdp(gen, template, n_samples, alpha_prime):
    """Alg. step: estimate every transition row from n_samples draws.

    Rewards/costs are copied from the template (they are assumed known);
    the threshold is set to the tightened alpha_prime.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample per (h,s,a)")
    H, S, A = template.horizon, template.n_states, template.n_actions
    P_hat = np.zeros((H, S, A, S))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                P_hat[h, s, a] = gen.sample_frequencies(h, s, a, n_samples) / n_samples
    return Cmdp(S, A, H, P_hat, template.rewards, template.costs,
                alpha_prime, template.initial_dist)


class PrimalDualConfig:
    """Parameters of the projected dual-ascent CMDP solver.

    from_accuracy derives every quantity from the target accuracy
    epsilon_prime, the confidence delta_prime and the Slater constant; the
    plain constructor accepts explicit (desk-scale) values.
    """

    def __init__(self, projection_bound, iterations, horizon, eta=None,
                 eps_opt=None, delta=0.0, n_samples=None, epsilon_prime=None,
                 delta_prime=None, slater=None):
        self.projection_bound = float(projection_bound)   # U
        self.iterations = int(iterations)                 # T
        self.horizon = int(horizon)
        self.eta = (self.projection_bound / (math.sqrt(self.iterations) * self.horizon)
                    if eta is None else float(eta))
        # Suboptimality of the averaged policy on the empirical model
        self.eps_opt = (self.projection_bound * self.horizon / math.sqrt(self.iterations)
                        if eps_opt is None else float(eps_opt))
        self.delta = float(delta)                         # threshold tightening
        self.n_samples = n_samples                        # N per (h,s,a)
        self.epsilon_prime = epsilon_prime
        self.delta_prime = delta_prime
        self.slater = slater

    @classmethod
    def from_accuracy(cls, epsilon_prime, delta_prime, slater, horizon,
                      n_states, n_actions):
        H, zeta = horizon, slater
        if not (0 < epsilon_prime <= H):
            raise ConfigError("epsilon_prime must lie in (0, H]")
        if not (0 < delta_prime < 1) or zeta <= 0:
            raise ConfigError("need delta_prime in (0,1) and slater > 0")
        delta = epsilon_prime * zeta / (16 * H)
        eps_opt = delta / 5
        U = 8 * H / zeta
        # worst case lambda* <= U/4 substituted into the iteration count
        T = math.ceil(U ** 2 * H ** 2 / eps_opt ** 2 * (1 + 16 / (9 * U ** 2)))
        eta = U / (math.sqrt(T) * H)
        target = 4 * delta / 5
        confidence = delta_prime / 5
        N = math.ceil(H ** 4 * math.log(2 * n_states ** 2 * n_actions * H
                                        / confidence) / target ** 2)
        cfg = cls(projection_bound=U, iterations=T, horizon=H, eta=eta,
                  eps_opt=eps_opt, delta=delta, n_samples=N,
                  epsilon_prime=epsilon_prime, delta_prime=delta_prime,
                  slater=zeta)
        cfg.check(zeta)
        return cfg

    def check(self, slater):
        if not self.delta < slater / 2:
            raise ConfigError("threshold tightening must satisfy delta < zeta/2")
        if not self.eps_opt < self.delta:
            raise ConfigError("eps_opt must be smaller than delta")
        if not self.projection_bound > 2 * self.horizon / slater:
            raise ConfigError("projection bound must exceed 2H/zeta")


class PrimalDualResult:
    """Iterates, averaged policy and dual trace of a primal-dual run."""

    def __init__(self, actions, policy_bar, occupancy_bar, lambdas,
                 v_hat_r, v_hat_c):
        self.actions = actions          # (T, H, S) greedy iterates
        self.policy_bar = policy_bar
        self.occupancy_bar = occupancy_bar
        self.lambdas = lambdas          # (T,)
        self.v_hat_r = v_hat_r          # (T,) per-iterate reward value
        self.v_hat_c = v_hat_c          # (T,) per-iterate cost value

    def iterate_policy(self, t, n_actions):
        return AgentPolicy.deterministic(self.actions[t], n_actions)

    def dual_regret(self, lam, alpha_prime):
        """(1/T) sum_t (lambda_t - lam) * (alpha' - V^c(pi_t))."""
        return float(np.mean((self.lambdas - lam) * (alpha_prime - self.v_hat_c)))

    def write_trace(self, path):
        with open(path, "w") as f:
            f.write("t,lambda,V_hat_r,V_hat_c\n")
            for t in range(len(self.lambdas)):
                f.write("%d,%.17g,%.17g,%.17g\n"
                        % (t, self.lambdas[t], self.v_hat_r[t], self.v_hat_c[t]))


def primal_dual_solve(model, cfg):
    """Projected dual ascent with an exact backward-induction inner argmax.

    The model's threshold is assumed to already hold the tightened alpha'.
    Iterates are converted into a single policy by averaging their occupancy
    measures.
    """
    H, S, A = model.horizon, model.n_states, model.n_actions
    T, U, eta = cfg.iterations, cfg.projection_bound, cfg.eta
    alpha_prime = model.threshold
    idx = np.arange(S)
    lam = 0.0
    actions = np.zeros((T, H, S), dtype=np.int64)
    lambdas = np.zeros(T)
    v_hat_r = np.zeros(T)
    v_hat_c = np.zeros(T)
    occ_sum = np.zeros((H, S, A))
    trans = model.transitions
    for t in range(T):
        lambdas[t] = lam
        # greedy policy for the stage reward r - lambda*c, plus its r/c values
        Vm = np.zeros(S)
        Vr = np.zeros(S)
        Vc = np.zeros(S)
        for h in range(H - 1, -1, -1):
            cont = trans[h] @ Vm
            Q = model.rewards[h] - lam * model.costs[h] + cont
            a = np.argmax(Q, axis=1)
            actions[t, h] = a
            Vm = Q[idx, a]
            P_sel = trans[h][idx, a]
            Vr = model.rewards[h][idx, a] + P_sel @ Vr
            Vc = model.costs[h][idx, a] + P_sel @ Vc
        v_hat_r[t] = Vr @ model.initial_dist
        v_hat_c[t] = Vc @ model.initial_dist
        # accumulate the iterate's occupancy measure
        state_dist = model.initial_dist.copy()
        for h in range(H):
            a = actions[t, h]
            np.add.at(occ_sum[h], (idx, a), state_dist)
            state_dist = state_dist @ trans[h][idx, a]
        lam = min(max(lam - eta * (alpha_prime - v_hat_c[t]), 0.0), U)
    occ_bar = OccupancyMeasure(occ_sum / T)
    policy_bar = policy_from_occupancy(occ_bar, A)
    return PrimalDualResult(actions, policy_bar, occ_bar, lambdas,
                            v_hat_r, v_hat_c)


def solve_cmdp_generative(gen, template, zeta, epsilon_prime, delta_prime,
                          n_samples=None, iterations=None,
                          projection_bound=None, delta=None):
    """Generative-model CMDP solver: empirical model + primal-dual.

    The template carries the known rewards/costs and the true threshold
    alpha; its transitions are ignored in favour of sampled ones.  The
    optional overrides replace the theory-derived N / T / U / tightening
    delta for desk-scale runs.  Returns (policy, PrimalDualResult, empirical model).
    """
    cfg = PrimalDualConfig.from_accuracy(epsilon_prime, delta_prime, zeta,
                                         template.horizon, template.n_states,
                                         template.n_actions)
    if n_samples is not None:
        cfg.n_samples = int(n_samples)
    if iterations is not None:
        cfg.iterations = int(iterations)
        cfg.eta = cfg.projection_bound / (math.sqrt(cfg.iterations) * cfg.horizon)
    if projection_bound is not None:
        cfg.projection_bound = float(projection_bound)
        cfg.eta = cfg.projection_bound / (math.sqrt(cfg.iterations) * cfg.horizon)
    if delta is not None:
        cfg.delta = float(delta)
    alpha_prime = template.threshold - cfg.delta
    empirical = build_empirical_cmdp(gen, template, cfg.n_samples, alpha_prime)
    result = primal_dual_solve(empirical, cfg)
    return result.policy_bar, result, empirical


def simulate_cmdp_batch(model, policy, n_episodes, rng):
    """Vectorized rollouts; returns per-episode (total reward, total cost)."""
    rng = np.random.default_rng(rng)
    M = int(n_episodes)
    states = rng.choice(model.n_states, size=M, p=model.initial_dist)
    total_r = np.zeros(M)
    total_c = np.zeros(M)
    for h in range(model.horizon):
        cdf = np.cumsum(policy.dist[h], axis=-1)
        u = rng.random(M)
        acts = (u[:, None] > cdf[states]).sum(axis=1)
        acts = np.minimum(acts, model.n_actions - 1)
        total_r += model.rewards[h, states, acts]
        total_c += model.costs[h, states, acts]
        cdf_s = np.cumsum(model.transitions[h, states, acts], axis=-1)
        u = rng.random(M)
        states = (u[:, None] > cdf_s).sum(axis=1)
        states = np.minimum(states, model.n_states - 1)
    return total_r, total_c


def online_to_batch_select(policy_stream, model=None, episodes=None, rng=None):
    """Pick the best policy from a stream of (assumed feasible) policies.

    With episodes=None the model must be supplied and the true argmax is
    returned; otherwise each policy's V^r is estimated from `episodes`
    Monte-Carlo rollouts.  Ties go to the earliest index.  Returns
    (policy, index, estimates).
    """
    if len(policy_stream) == 0:
        raise ValueError("empty policy stream")
    if episodes is None:
        if model is None:
            raise ValueError("exact mode needs the model")
        estimates = np.array([policy_value(model, p)[0] for p in policy_stream])
    else:
        rng = np.random.default_rng(rng)
        estimates = np.zeros(len(policy_stream))
        for i, p in enumerate(policy_stream):
            r, _ = simulate_cmdp_batch(model, p, episodes, rng)
            estimates[i] = r.mean()
    best = int(np.argmax(estimates))
    return policy_stream[best], best, estimates


def lemma_f3_episodes(epsilon, delta, horizon, regret_coeff):
    """Episode count M = (16 H^2 / eps^2) * log(2 C / (eps * delta))."""
    return math.ceil(16 * horizon ** 2 / epsilon ** 2
                     * math.log(2 * regret_coeff / (epsilon * delta)))
