"""
Occupancy measures for single-agent finite-horizon models.

An occupancy measure rho_h(s,a) is the probability of visiting (s,a) at
step h under a policy.  Values are linear in rho, the set of valid
occupancies is a polytope, and averaging occupancies of several policies
yields a policy whose values are the average of theirs -- the device used
to convert primal-dual iterates into a single policy.
"""
import numpy as np

from .game import AgentPolicy

# below this mass a state is treated as unreachable and the extracted
# policy row falls back to uniform
ZERO_MASS = 1e-14


class OccupancyMeasure:
    """Dense step-indexed state-action visitation table, shape (H, S, A)."""

    def __init__(self, rho):
        self.rho = np.asarray(rho, dtype=float)
        if self.rho.ndim != 3:
            raise ValueError("occupancy must have shape (H, S, A)")
        if np.min(self.rho) < -1e-12:
            raise ValueError("occupancy must be nonnegative")

    @property
    def horizon(self):
        return self.rho.shape[0]

    def check_normalized(self, tol=1e-10):
        sums = self.rho.sum(axis=(1, 2))
        return np.max(np.abs(sums - 1.0)) <= tol

    def check_flow(self, model, tol=1e-8):
        """Verify the defining recursion against a model's mu and transitions."""
        state_mass = self.rho.sum(axis=-1)  # (H, S)
        err = np.max(np.abs(state_mass[0] - model.initial_dist))
        for h in range(1, self.horizon):
            inflow = np.einsum("sa,sat->t", self.rho[h - 1], model.transitions[h - 1])
            err = max(err, np.max(np.abs(state_mass[h] - inflow)))
        return err <= tol


def occupancy_from_policy(model, policy):
    """Forward recursion: rho_1 = mu * pi_1, rho_h = (rho_{h-1} P_{h-1}) * pi_h."""
    if policy.dist.shape != (model.horizon, model.n_states, model.n_actions):
        raise ValueError("policy shape %s does not match model (%d,%d,%d)"
                         % (policy.dist.shape, model.horizon, model.n_states,
                            model.n_actions))
    H, S, A = policy.dist.shape
    rho = np.zeros((H, S, A))
    state_dist = model.initial_dist
    for h in range(H):
        rho[h] = state_dist[:, None] * policy.dist[h]
        state_dist = np.einsum("sa,sat->t", rho[h], model.transitions[h])
    return OccupancyMeasure(rho)


def policy_from_occupancy(occ, n_actions):
    """Normalize each (h,s) row of rho; uniform 1/|A| where the mass is ~0."""
    rho = occ.rho
    if rho.shape[2] != n_actions:
        raise ValueError("occupancy has %d actions, expected %d"
                         % (rho.shape[2], n_actions))
    mass = rho.sum(axis=-1, keepdims=True)
    dist = np.where(mass > ZERO_MASS,
                    rho / np.maximum(mass, ZERO_MASS),
                    1.0 / n_actions)
    # guard against round-off: renormalize rows exactly
    dist = np.maximum(dist, 0.0)
    dist /= dist.sum(axis=-1, keepdims=True)
    return AgentPolicy(dist)


def value_from_occupancy(occ, stage):
    """sum_h sum_{s,a} rho_h(s,a) * l_h(s,a) for a per-step table l."""
    stage = np.asarray(stage, dtype=float)
    if stage.shape != occ.rho.shape:
        raise ValueError("stage table shape %s does not match occupancy %s"
                         % (stage.shape, occ.rho.shape))
    return float(np.sum(occ.rho * stage))


def average_occupancies(occs):
    """Elementwise mean of occupancy measures (valid by convexity)."""
    if len(occs) == 0:
        raise ValueError("empty occupancy list")
    shapes = {o.rho.shape for o in occs}
    if len(shapes) != 1:
        raise ValueError("occupancies must share a shape")
    return OccupancyMeasure(np.mean([o.rho for o in occs], axis=0))


def dump_csv(occ, path):
    """Debugging dump with columns h,s,a,rho."""
    with open(path, "w") as f:
        f.write("h,s,a,rho\n")
        H, S, A = occ.rho.shape
        for h in range(H):
            for s in range(S):
                for a in range(A):
                    f.write("%d,%d,%d,%.17g\n" % (h, s, a, occ.rho[h, s, a]))
