import numpy as np
import pytest

import cmpg
from cmpg import AgentPolicy, Cmdp, OccupancyMeasure
from cmpg.cmdp import policy_value

from conftest import random_cmdp, random_policy


def single_state_model():
    P = np.ones((1, 1, 2, 1))
    r = np.array([[[0.2, 0.8]]])
    c = np.zeros((1, 1, 2))
    return Cmdp(1, 2, 1, P, r, c, 1.0, np.array([1.0]))


def test_occupancy_single_state():
    occ = cmpg.occupancy_from_policy(single_state_model(),
                                     AgentPolicy(np.array([[[0.3, 0.7]]])))
    assert np.allclose(occ.rho[0, 0], [0.3, 0.7], atol=1e-15)


def test_occupancy_deterministic_chain():
    # two states, action 0 moves 0 -> 1, everything else self-loops
    P = np.zeros((2, 2, 2, 2))
    P[:, 0, 0, 1] = 1.0
    P[:, 0, 1, 0] = 1.0
    P[:, 1, :, 1] = 1.0
    m = Cmdp(2, 2, 2, P, np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), 1.0,
             np.array([1.0, 0.0]))
    acts = np.zeros((2, 2), dtype=int)
    occ = cmpg.occupancy_from_policy(m, AgentPolicy.deterministic(acts, 2))
    expect = np.zeros((2, 2, 2))
    expect[0, 0, 0] = 1.0   # start in state 0, play 0
    expect[1, 1, 0] = 1.0   # deterministic move to state 1
    assert np.array_equal(occ.rho, expect)


def test_occupancy_mass_is_one_per_step():
    rng = np.random.default_rng(0)
    m = random_cmdp(rng, n_states=3, horizon=3)
    occ = cmpg.occupancy_from_policy(m, random_policy(rng, 3, 3, 2))
    occ.check_normalized()
    occ.check_flow(m)


def test_policy_from_occupancy_single_state():
    rho = np.array([[[0.3, 0.7]]])
    pol = cmpg.policy_from_occupancy(OccupancyMeasure(rho), 2)
    assert np.allclose(pol.dist[0, 0], [0.3, 0.7], atol=1e-15)


def test_policy_from_occupancy_zero_mass_uniform():
    rho = np.zeros((1, 2, 4))
    rho[0, 0] = [1.0, 0.0, 0.0, 0.0]
    pol = cmpg.policy_from_occupancy(OccupancyMeasure(rho), 4)
    assert np.allclose(pol.dist[0, 1], [0.25, 0.25, 0.25, 0.25], atol=1e-15)


def test_round_trip_on_reachable_states():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m = random_cmdp(rng, n_states=int(rng.integers(2, 5)),
                        horizon=int(rng.integers(1, 4)))
        pol = random_policy(rng, m.horizon, m.n_states, m.n_actions)
        occ = cmpg.occupancy_from_policy(m, pol)
        back = cmpg.policy_from_occupancy(occ, m.n_actions)
        mass = occ.rho.sum(axis=-1)
        reachable = mass > 1e-12
        assert np.allclose(back.dist[reachable], pol.dist[reachable], atol=1e-10)


def test_value_from_occupancy_constants():
    rng = np.random.default_rng(2)
    m = random_cmdp(rng, n_states=4, horizon=3)
    occ = cmpg.occupancy_from_policy(m, random_policy(rng, 3, 4, 2))
    assert cmpg.value_from_occupancy(occ, np.zeros((3, 4, 2))) == 0.0
    assert abs(cmpg.value_from_occupancy(occ, np.ones((3, 4, 2))) - 3.0) < 1e-10


def test_value_from_occupancy_matches_dp():
    rng = np.random.default_rng(3)
    for _ in range(10):
        m = random_cmdp(rng, n_states=3, horizon=3)
        pol = random_policy(rng, 3, 3, 2)
        occ = cmpg.occupancy_from_policy(m, pol)
        v_r, v_c = policy_value(m, pol)
        assert abs(cmpg.value_from_occupancy(occ, m.rewards) - v_r) < 1e-10
        assert abs(cmpg.value_from_occupancy(occ, m.costs) - v_c) < 1e-10


def test_average_occupancies_identity_and_mean():
    rng = np.random.default_rng(4)
    m = random_cmdp(rng)
    occ = cmpg.occupancy_from_policy(m, random_policy(rng, 2, 3, 2))
    same = cmpg.average_occupancies([occ])
    assert np.array_equal(same.rho, occ.rho)
    a = OccupancyMeasure(np.array([[[1.0, 0.0]]]))
    b = OccupancyMeasure(np.array([[[0.0, 1.0]]]))
    avg = cmpg.average_occupancies([a, b])
    assert np.allclose(avg.rho, [[[0.5, 0.5]]], atol=1e-15)
    with pytest.raises(ValueError):
        cmpg.average_occupancies([])


def test_mixture_theorem():
    # extracting a policy from averaged occupancies preserves mean values
    rng = np.random.default_rng(5)
    for _ in range(10):
        S = int(rng.integers(2, 6))
        H = int(rng.integers(1, 5))
        T = int(rng.integers(2, 21))
        m = random_cmdp(rng, n_states=S, horizon=H)
        pols = [random_policy(rng, H, S, 2) for _ in range(T)]
        occs = [cmpg.occupancy_from_policy(m, p) for p in pols]
        bar = cmpg.policy_from_occupancy(cmpg.average_occupancies(occs), 2)
        vr_bar, vc_bar = policy_value(m, bar)
        vals = np.array([policy_value(m, p) for p in pols])
        assert abs(vr_bar - vals[:, 0].mean()) < 1e-9
        assert abs(vc_bar - vals[:, 1].mean()) < 1e-9


def test_convex_combination_stays_valid():
    rng = np.random.default_rng(6)
    m = random_cmdp(rng, n_states=4, horizon=3)
    occs = [cmpg.occupancy_from_policy(m, random_policy(rng, 3, 4, 2))
            for _ in range(3)]
    w = rng.random(3)
    w /= w.sum()
    mix = OccupancyMeasure(sum(wi * o.rho for wi, o in zip(w, occs)))
    mix.check_normalized()
    mix.check_flow(m)


def test_unreachable_convention_never_affects_values():
    # deterministic chain: state 1 unreachable at h=0; perturb its policy row
    P = np.zeros((2, 2, 2, 2))
    P[:, :, :, 0] = 1.0
    m = Cmdp(2, 2, 2, P, np.ones((2, 2, 2)) * 0.5, np.zeros((2, 2, 2)), 1.0,
             np.array([1.0, 0.0]))
    pol = AgentPolicy(np.full((2, 2, 2), 0.5))
    occ = cmpg.occupancy_from_policy(m, pol)
    back = cmpg.policy_from_occupancy(occ, 2)
    tweaked = AgentPolicy(back.dist.copy())
    tweaked.dist[0, 1] = [1.0, 0.0]   # unreachable row, arbitrary change
    assert policy_value(m, back) == policy_value(m, tweaked)


def test_csv_dump(tmp_path):
    rng = np.random.default_rng(7)
    m = random_cmdp(rng)
    occ = cmpg.occupancy_from_policy(m, random_policy(rng, 2, 3, 2))
    path = tmp_path / "occ.csv"
    from cmpg.occupancy import dump_csv
    dump_csv(occ, str(path))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "h,s,a,rho"
    assert len(lines) == 1 + occ.rho.size
