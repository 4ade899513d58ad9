"""
Single-state bimatrix constrained games: exact primal and dual computation
and the duality-gap report.

The shared reward is pi1' A pi2, the constraint pi1' B pi2 <= alpha.  The
dual function d(lambda) = max_pi { pi1' A pi2 + lambda (alpha - pi1' B pi2) }
is attained at a pure action pair (a bilinear form over a product of
simplices maximizes at a vertex pair), so d is the upper envelope of one
line per pure joint action and the dual problem is solved exactly from the
envelope's breakpoints.
"""
import numpy as np
from scipy.optimize import minimize_scalar

from .game import Cmpg, AgentPolicy, JointPolicy

TIE_TOL = 1e-9


class BimatrixCmpg:
    """Raw-scale bimatrix game; wraps into the [0,1]-ranged game on demand."""

    def __init__(self, A, B, alpha):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.alpha = float(alpha)
        if self.A.shape != self.B.shape or self.A.ndim != 2:
            raise ValueError("A and B must be matrices of equal shape")
        if not np.all(np.isfinite(self.A)) or not np.all(np.isfinite(self.B)):
            raise ValueError("matrices must be finite")
        if np.min(self.B) < 0:
            raise ValueError("cost matrix must be nonnegative")
        if not (0 <= self.alpha <= max(self.B.max(), 0.0) + 1e-12):
            raise ValueError("alpha must lie in [0, max stage cost]")

    def value(self, p1, p2):
        """Raw shared reward of mixed strategies (vectors over rows/cols)."""
        return float(np.asarray(p1) @ self.A @ np.asarray(p2))

    def cost(self, p1, p2):
        return float(np.asarray(p1) @ self.B @ np.asarray(p2))

    def to_cmpg(self):
        """Wrap into a single-state, single-step game with [0,1] ranges.

        Rewards are shifted/scaled affinely (gap structure preserved up to
        the stored reward_scale); costs are scaled by cost_scale, alpha with
        them.  Raw gap = scaled gap * reward_scale.
        """
        offset = min(self.A.min(), 0.0)
        span = max((self.A - offset).max(), 1.0)
        cost_scale = max(self.B.max(), self.alpha, 1.0)
        m, p = self.A.shape
        K = m * p
        rewards = ((self.A - offset) / span).reshape(1, 1, 1, K)
        rewards = np.repeat(rewards, 2, axis=0)
        costs = (self.B / cost_scale).reshape(1, 1, 1, K)
        game = Cmpg(n_agents=2, n_states=1, n_actions=(m, p), horizon=1,
                    transitions=np.ones((1, 1, K, 1)),
                    rewards=rewards, costs=costs,
                    thresholds=[self.alpha / cost_scale],
                    initial_dist=[1.0], cooperative=True,
                    reward_scale=span)
        return game


def _pure_lines(gamebm):
    """Slope/intercept of d's lines: intercept A_ij, slope alpha - B_ij."""
    return gamebm.A.ravel(), (gamebm.alpha - gamebm.B).ravel()


def dual_function(gamebm, lam):
    """d(lambda) and the lexicographically first maximizing pure joint pair."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    intercepts, slopes = _pure_lines(gamebm)
    vals = intercepts + lam * slopes
    k = int(np.argmax(vals))
    return float(vals[k]), tuple(int(x) for x in
                                 np.unravel_index(k, gamebm.A.shape))


def default_lambda_max(gamebm):
    slacks = (gamebm.alpha - gamebm.B).ravel()
    pos = slacks[slacks > 1e-12]
    scale = 2.0 * max(np.abs(gamebm.A).max(), 1.0)
    if len(pos) == 0:
        return scale
    return scale / pos.min()


def solve_dual(gamebm, lambda_max=None, grid_points=1000):
    """Exact minimizer of the piecewise-linear convex d over [0, lambda_max].

    The minimum is attained at 0, lambda_max or a pairwise intersection of
    the lines; all candidates are enumerated.  Returns (lambda*, D*,
    argmax pure pairs at lambda*, per-pair feasibility verdicts).
    """
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    if lambda_max is None:
        lambda_max = default_lambda_max(gamebm)
    intercepts, slopes = _pure_lines(gamebm)
    candidates = [0.0, float(lambda_max)]
    K = len(intercepts)
    for i in range(K):
        for j in range(i + 1, K):
            ds = slopes[i] - slopes[j]
            if ds != 0.0:
                lam = (intercepts[j] - intercepts[i]) / ds
                if 0.0 <= lam <= lambda_max:
                    candidates.append(float(lam))
    best_lam, best_val = None, np.inf
    for lam in sorted(candidates):
        val = np.max(intercepts + lam * slopes)
        if val < best_val - TIE_TOL:
            best_lam, best_val = lam, float(val)
    vals = intercepts + best_lam * slopes
    arg = np.flatnonzero(vals >= best_val - TIE_TOL)
    pairs = [tuple(int(x) for x in np.unravel_index(k, gamebm.A.shape))
             for k in arg]
    feasible = [bool(gamebm.B[p] <= gamebm.alpha + 1e-12) for p in pairs]
    return best_lam, best_val, pairs, feasible


def dual_trace(gamebm, lo=0.0, hi=2.0, points=1000):
    """d(lambda) on an equidistant grid, as a (points, 2) array."""
    intercepts, slopes = _pure_lines(gamebm)
    lams = np.linspace(lo, hi, points)
    vals = np.max(intercepts[None, :] + lams[:, None] * slopes[None, :], axis=1)
    return np.column_stack([lams, vals])


def solve_primal_grid(gamebm, resolution=1000):
    """Constrained primal optimum for 2x2 games by grid + boundary refinement.

    Parametrizes each strategy by its probability of action 2.  For each p
    on the grid the inner problem is linear in q, so it is solved exactly on
    the feasible q-interval; the outer maximization is then refined by a
    bounded scalar search around the best grid point.  Returns (P*, (p, q)).
    """
    if gamebm.A.shape != (2, 2):
        raise ValueError("primal grid search implemented for 2x2 games")
    if resolution < 100:
        raise ValueError("resolution must be >= 100")
    A, B, alpha = gamebm.A, gamebm.B, gamebm.alpha

    def best_q(p):
        p1 = np.array([1 - p, p])
        fa = p1 @ A   # objective = fa[0](1-q) + fa[1] q
        ga = p1 @ B
        f0, f1 = fa[0], fa[1] - fa[0]
        g0, g1 = ga[0], ga[1] - ga[0]
        lo_q, hi_q = 0.0, 1.0
        if g1 > 1e-15:
            hi_q = min(1.0, (alpha - g0) / g1)
        elif g1 < -1e-15:
            lo_q = max(0.0, (alpha - g0) / g1)
        else:
            if g0 > alpha + 1e-12:
                return None, -np.inf
        if hi_q < lo_q - 1e-12:
            return None, -np.inf
        hi_q = max(hi_q, lo_q)
        q = hi_q if f1 > 0 else lo_q
        return q, f0 + f1 * q

    grid = np.linspace(0.0, 1.0, resolution + 1)
    best = (-np.inf, None, None)
    for p in grid:
        q, val = best_q(p)
        if val > best[0]:
            best = (val, p, q)
    if best[1] is None:
        raise ValueError("no feasible point on the grid")
    step = 1.0 / resolution
    lo = max(0.0, best[1] - step)
    hi = min(1.0, best[1] + step)
    res = minimize_scalar(lambda p: -best_q(p)[1], bounds=(lo, hi),
                          method="bounded",
                          options={"xatol": 1e-12})
    p_star = float(res.x)
    q_star, val = best_q(p_star)
    if val < best[0]:
        p_star, q_star, val = best[1], best[2], best[0]
    return float(val), (p_star, float(q_star))


def _pair_policy(pair, shape):
    """A pure joint pair as a JointPolicy on the wrapped single-state game."""
    a1 = np.zeros((1, 1), dtype=int) + pair[0]
    a2 = np.zeros((1, 1), dtype=int) + pair[1]
    return JointPolicy([AgentPolicy.deterministic(a1, shape[0]),
                        AgentPolicy.deterministic(a2, shape[1])])


def duality_gap_report(gamebm, trace_lo=0.0, trace_hi=2.0, trace_points=1000):
    """Primal/dual solutions, the gap, and a Nash audit of dual argmaxes.

    Every pure pair attaining d(lambda*) is checked for feasibility and,
    when feasible, for its best-response gap; the uniform mixed pair is
    audited too whenever it also attains d(lambda*).  All numbers are in
    raw matrix scale.  The lambda-grid trace matches the dual_trace export.
    """
    from .coordinate_ascent import verify_nash
    p_star, p_arg = solve_primal_grid(gamebm)
    lam_star, d_star, pairs, feas = solve_dual(gamebm)
    game = gamebm.to_cmpg()
    scale = game.reward_scale
    table = []
    for pair, ok in zip(pairs, feas):
        entry = {"policy": [list(np.eye(gamebm.A.shape[0])[pair[0]]),
                            list(np.eye(gamebm.A.shape[1])[pair[1]])],
                 "pure_pair": list(pair), "feasible": ok, "nash_gap": None}
        if ok:
            _, gap = verify_nash(game, _pair_policy(pair, gamebm.A.shape))
            entry["nash_gap"] = gap * scale
        table.append(entry)
    # audit the uniform mixed pair whenever it attains the dual optimum
    m, p = gamebm.A.shape
    u1 = np.full(m, 1.0 / m)
    u2 = np.full(p, 1.0 / p)
    lag = gamebm.value(u1, u2) + lam_star * (gamebm.alpha - gamebm.cost(u1, u2))
    if abs(lag - d_star) <= TIE_TOL:
        entry = {"policy": [list(u1), list(u2)], "pure_pair": None,
                 "feasible": bool(gamebm.cost(u1, u2) <= gamebm.alpha + 1e-12),
                 "nash_gap": None}
        if entry["feasible"]:
            mixed = JointPolicy([AgentPolicy(u1[None, None, :]),
                                 AgentPolicy(u2[None, None, :])])
            _, gap = verify_nash(game, mixed)
            entry["nash_gap"] = gap * scale
        table.append(entry)
    gap = d_star - p_star
    notes = []
    if gap > 1e-6:
        notes.append("strong duality fails: D* - P* = %.6g > 0" % gap)
        infeas = [e for e in table if not e["feasible"]]
        if infeas:
            notes.append("the dual argmax set contains infeasible policies; "
                         "recovering a primal solution from the dual is unsafe")
    else:
        notes.append("strong duality holds within grid tolerance")
        bad = [e for e in table
               if e["feasible"] and e["nash_gap"] is not None
               and e["nash_gap"] > 1e-6]
        if bad:
            notes.append("a feasible dual-argmax policy is not a Nash policy "
                         "(best-response gap %.6g)" % max(e["nash_gap"] for e in bad))
    return {
        "primal": {"value": p_star, "argmax_p2": list(p_arg)},
        "dual": {"lambda_star": lam_star, "value": d_star},
        "gap": gap,
        "dual_argmax": table,
        "trace": dual_trace(gamebm, trace_lo, trace_hi, trace_points),
        "notes": notes,
    }


def write_dual_trace_csv(trace, path):
    with open(path, "w") as f:
        f.write("lambda,d_lambda\n")
        for lam, val in trace:
            f.write("%.17g,%.17g\n" % (lam, val))
