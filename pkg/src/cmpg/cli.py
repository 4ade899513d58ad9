"""
Reproduction driver: load a JSON config, build an environment, run one of
the pipelines (duality report, known-model coordinate ascent, exploration
coordinate ascent, Nash verification) and emit CSV artifacts plus their
figure renderings.

Exit codes: 0 success, 1 configuration error, 2 infeasibility.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from .game import Cmpg, AgentPolicy, JointPolicy, evaluate
from .cmdp import CmdpInfeasible, ConfigError
from .coordinate_ascent import (ca_cmpg_known, ca_cmpg_explore, ExploreConfig,
                                feasible_init_single_constraint, verify_nash,
                                InfeasibleGame)
from .duality import BimatrixCmpg, duality_gap_report, write_dual_trace_csv
from .envs import (GridWorldConfig, CongestionConfig, build_grid_world,
                   build_congestion_game)
from . import plotting

log = logging.getLogger("cmpg")


class BadConfig(Exception):
    pass


def _build_environment(spec):
    if not isinstance(spec, dict) or "type" not in spec:
        raise BadConfig("environment spec must be an object with a 'type'")
    kind = spec["type"]
    params = {k: v for k, v in spec.items() if k != "type"}
    try:
        if kind == "grid_world":
            return build_grid_world(GridWorldConfig(**params)), None
        if kind == "congestion":
            return build_congestion_game(CongestionConfig(**params)), None
        if kind == "bimatrix":
            bm = BimatrixCmpg(params["A"], params["B"], params["alpha"])
            return bm.to_cmpg(), bm
        if kind == "file":
            return Cmpg.from_json(params["path"]), None
    except (KeyError, TypeError, ValueError, OSError) as e:
        raise BadConfig("bad environment spec: %s" % e)
    raise BadConfig("unknown environment type %r" % kind)


def _initial_policy(game, cfg):
    init = cfg.get("init", "min_cost")
    if init == "min_cost":
        return feasible_init_single_constraint(game)
    if init == "round_robin":
        # agent i deterministically plays i mod |A_i| everywhere
        agents = []
        for i in range(game.n_agents):
            acts = np.full((game.horizon, game.n_states), i % game.n_actions[i])
            agents.append(AgentPolicy.deterministic(acts, game.n_actions[i]))
        return JointPolicy(agents)
    if isinstance(init, str):
        return _load_policy(init, game)
    raise BadConfig("unknown init %r" % (init,))


def _load_policy(path, game):
    try:
        with open(path) as f:
            data = json.load(f)
        return JointPolicy([AgentPolicy(np.asarray(d)) for d in data])
    except (OSError, ValueError) as e:
        raise BadConfig("cannot load policy %s: %s" % (path, e))


def _save_policy(policy, path):
    with open(path, "w") as f:
        json.dump([a.dist.tolist() for a in policy.agents], f)


def _write_curves(trace, game, out):
    cycles = list(trace.cycles)
    costs = [c[0] for c in trace.cost_values]
    max_gaps = [float(np.max(g)) for g in trace.gaps]
    with open(os.path.join(out, "cost_curve.csv"), "w") as f:
        f.write("cycle,cost\n")
        for t, c in zip(cycles, costs):
            f.write("%d,%.17g\n" % (t, c))
    with open(os.path.join(out, "gap_curve.csv"), "w") as f:
        f.write("cycle,max_gap\n")
        for t, g in zip(cycles, max_gaps):
            f.write("%d,%.17g\n" % (t, g))
    trace.to_csv(os.path.join(out, "run_trace.csv"))
    plotting.plot_curve(cycles, {"cost": costs},
                        os.path.join(out, "cost_curve.png"),
                        "cycle", "constraint cost",
                        hline=float(game.thresholds[0]), hline_label="alpha")
    plotting.plot_curve(cycles, {"max gap": max_gaps},
                        os.path.join(out, "gap_curve.png"),
                        "cycle", "best-response gap")


def _run_duality(cfg, bm, out):
    if bm is None:
        raise BadConfig("duality_report requires a bimatrix environment")
    report = duality_gap_report(bm)
    trace = report.pop("trace")
    write_dual_trace_csv(trace, os.path.join(out, "dual_trace.csv"))
    plotting.plot_dual_trace(trace, os.path.join(out, "dual_trace.png"),
                             report["dual"]["lambda_star"],
                             report["dual"]["value"])
    with open(os.path.join(out, "report.json"), "w") as f:
        json.dump(report, f, indent=2)
    log.info("P*=%.6g D*=%.6g gap=%.6g", report["primal"]["value"],
             report["dual"]["value"], report["gap"])
    return 0


def _run_ca_known(cfg, game, out):
    epsilon = float(cfg.get("epsilon", 0.05))
    use_counts = bool(cfg.get("use_counts", game.count_symmetry is not None))
    init = _initial_policy(game, cfg)
    policy, trace = ca_cmpg_known(game, init, epsilon, use_counts=use_counts)
    _write_curves(trace, game, out)
    _save_policy(policy, os.path.join(out, "policy.json"))
    res = evaluate(game, policy)
    log.info("converged after %d cycles; V_c=%.6g", len(trace),
             res.cost_values[0])
    return 0


def _run_ca_explore(cfg, game, out, seed):
    if seed is None:
        raise BadConfig("ca_explore requires a seed")
    epsilon = float(cfg.get("epsilon", 0.2))
    delta = float(cfg.get("delta", 0.1))
    ecfg = ExploreConfig(epsilon, delta, game.n_agents, game.horizon,
                         slater=cfg.get("slater"),
                         solver=cfg.get("solver", "generative"),
                         solver_overrides=cfg.get("solver_overrides"))
    init = _initial_policy(game, cfg)
    policy, trace = ca_cmpg_explore(game, init, ecfg, np.random.default_rng(seed))
    _write_curves(trace, game, out)
    _save_policy(policy, os.path.join(out, "policy.json"))
    log.info("finished after %d cycles; %d episodes", len(trace),
             trace.episodes_used[-1])
    return 0


def _run_verify(cfg, game, out):
    if "policy" not in cfg:
        raise BadConfig("verify requires a 'policy' file")
    policy = _load_policy(cfg["policy"], game)
    use_counts = bool(cfg.get("use_counts", game.count_symmetry is not None))
    gaps, worst = verify_nash(game, policy, use_counts=use_counts)
    res = evaluate(game, policy, use_counts=use_counts)
    report = {"gaps": gaps.tolist(), "max_gap": worst,
              "reward_values": res.reward_values.tolist(),
              "cost_values": res.cost_values.tolist(),
              "thresholds": game.thresholds.tolist()}
    with open(os.path.join(out, "report.json"), "w") as f:
        json.dump(report, f, indent=2)
    log.info("max best-response gap %.6g", worst)
    return 0


def run(config_path, out_dir=None, seed=None, log_level="info"):
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.INFO),
                        format="%(levelname)s %(message)s")
    try:
        with open(config_path) as f:
            cfg = json.load(f)
    except (OSError, ValueError) as e:
        log.error("cannot read config: %s", e)
        return 1
    try:
        out = out_dir or cfg.get("out", ".")
        os.makedirs(out, exist_ok=True)
        game, bm = _build_environment(cfg.get("environment"))
        if seed is None:
            seed = cfg.get("seed")
        algorithm = cfg.get("algorithm")
        if algorithm == "duality_report":
            return _run_duality(cfg, bm, out)
        if algorithm == "ca_known":
            return _run_ca_known(cfg, game, out)
        if algorithm == "ca_explore":
            return _run_ca_explore(cfg, game, out, seed)
        if algorithm == "verify":
            return _run_verify(cfg, game, out)
        raise BadConfig("unknown algorithm %r" % (algorithm,))
    except (BadConfig, ConfigError) as e:
        log.error("%s", e)
        return 1
    except (InfeasibleGame, CmdpInfeasible) as e:
        log.error("infeasible: %s", e)
        return 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cmpg",
        description="Constrained Markov potential game experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a configured pipeline")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="overrides the config seed")
    p_run.add_argument("--log-level", default="info",
                       choices=["debug", "info", "warning", "error"])
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.seed, args.log_level)
    return 1


if __name__ == "__main__":
    sys.exit(main())
