"""Tabular finite-horizon toolkit for constrained Markov potential games."""

from .game import (Cmpg, AgentPolicy, JointPolicy, EvalResult, CountSymmetry,
                   evaluate, is_feasible, potential_gap, sample_episode,
                   simulate_batch)
from .occupancy import (OccupancyMeasure, occupancy_from_policy,
                        policy_from_occupancy, value_from_occupancy,
                        average_occupancies)
from .cmdp import (Cmdp, CmdpInfeasible, ConfigError, GenerativeModel,
                   PrimalDualConfig, PrimalDualResult, induce_cmdp,
                   policy_value, solve_mdp, solve_cmdp_lp,
                   build_empirical_cmdp, primal_dual_solve,
                   solve_cmdp_generative, online_to_batch_select,
                   lemma_f3_episodes)
from .coordinate_ascent import (RunTrace, ExploreConfig, InfeasibleGame,
                                SlaterEstimate, ca_cmpg_known, ca_cmpg_explore,
                                feasible_init_single_constraint,
                                feasible_init_independent, FactoredAgentModel,
                                slater_constant, verify_nash, estimate_value_mc)
from .duality import (BimatrixCmpg, dual_function, solve_dual, dual_trace,
                      solve_primal_grid, duality_gap_report)
from .envs import (GridWorldConfig, CongestionConfig, build_grid_world,
                   build_congestion_game, build_bimatrix)
