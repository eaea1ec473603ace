"""Command-line entry points."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import causal_env, fqi, harness, mdp, oracle


def _cmd_solve(args) -> int:
    process = mdp.TabularPeriodicMdp.from_json(Path(args.mdp).read_text())
    q = mdp.value_iteration(process, tol=args.tol)
    policy = mdp.greedy_policy(q)
    payload = {
        "q_tables": [t.tolist() for t in q.tables],
        "greedy_actions": [m.argmax(axis=1).tolist() for m in policy.maps],
        "residual": mdp.bellman_residual(process, q),
    }
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_variant(args) -> int:
    params = causal_env.load_env(args.env)
    coeffs = json.loads(args.coeffs) if args.coeffs else None
    spec = causal_env.VariantSpec(kind=args.kind, xi=args.xi,
                                  scale_divisor=args.scale_divisor, coeffs=coeffs)
    if spec.kind == "interaction_MA" and coeffs is None:
        if args.xi == 0:
            raise causal_env.ConfigurationError(
                "interaction_MA needs --coeffs or a nonzero --xi")
        spec = causal_env.VariantSpec(
            kind=spec.kind, xi=spec.xi, scale_divisor=spec.scale_divisor,
            coeffs={"theta_M": causal_env.default_interaction_coeffs(params, args.xi)})
    out = causal_env.make_variant(params, spec)
    text = out.to_json()
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_check(args) -> int:
    params = causal_env.load_env(args.env)
    payload = {}
    for pattern in ("zeros", "ones"):
        res = causal_env.check_stationarity(params, pattern)
        entry = {"eigenvalues": list(res.eigenvalues), "stationary": res.stationary}
        if res.stationary:
            mean_c = float(params.theta_C[0])
            alpha_r, alpha_e = causal_env.limiting_mean(params, pattern, mean_c)
            entry["limiting_mean"] = {"R": alpha_r, "E": alpha_e}
        payload[pattern] = entry
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_ste(args) -> int:
    params = causal_env.load_env(args.env)
    policy = fqi.near_optimal_policy(
        params, n_episodes=args.fit_episodes, horizon=args.fit_horizon,
        gamma_bar=args.gamma_bar, seed=args.seed)
    ste = causal_env.estimate_ste(params, policy, n_episodes=args.episodes,
                                  horizon_D=args.horizon, rng_seed=args.seed)
    print(json.dumps({"ste": ste, "episodes": args.episodes,
                      "horizon": args.horizon}))
    return 0


def _apply_seed_override(config: harness.ExperimentConfig) -> harness.ExperimentConfig:
    override = os.environ.get("BAGGED_RL_SEED")
    if override is None:
        return config
    from dataclasses import replace
    return replace(config, master_seed=int(override))


def _cmd_simulate(args) -> int:
    config = harness.ExperimentConfig.from_json(args.experiment)
    config = _apply_seed_override(config)
    if args.output:
        from dataclasses import replace
        config = replace(config, output_dir=args.output)
    if args.workers:
        from dataclasses import replace
        config = replace(config, workers=args.workers)
    results = harness.run_experiment(config)
    out_dir = config.output_dir or "out"
    written = harness.emit_outputs(results, out_dir, plot=config.plot)
    for name, path in written.items():
        print(f"{name}: {path}")
    if results.errors:
        print(f"{len(results.errors)} cell(s) failed", file=sys.stderr)
        return 1
    return 0


def _cmd_compare_states(args) -> int:
    config = harness.ExperimentConfig.from_json(args.experiment)
    config = _apply_seed_override(config)
    config = harness.compare_states_config(config, xi=args.xi)
    if args.output:
        from dataclasses import replace
        config = replace(config, output_dir=args.output)
    results = harness.run_experiment(config)
    out_dir = config.output_dir or "out_states"
    written = harness.emit_outputs(results, out_dir, plot=config.plot)
    for name, path in written.items():
        print(f"{name}: {path}")
    return 1 if results.errors else 0


def _cmd_plot(args) -> int:
    path = harness.plot_from_csv(args.results, args.output)
    print(f"plot: {path}")
    return 0


def _cmd_theorem2(args) -> int:
    payload = json.loads(Path(args.instance).read_text())
    gamma_bar = args.gamma if args.gamma is not None else payload.get("gamma_bar", 0.5)
    env = oracle.DiscreteDagEnv.from_json(json.dumps(payload["env"]))
    result = oracle.theorem2_gap(env, args.fine, args.coarse, gamma_bar)
    print(f"fine={args.fine} coarse={args.coarse} gamma_bar={gamma_bar}")
    print(f"{'step':>4} {'coarse state':<24} {'gap':>12} condition")
    for entry in result.entries:
        print(f"{entry.k:>4} {str(entry.coarse_state):<24} "
              f"{entry.gap:>12.6f} {entry.condition_holds}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bagged-rl",
                                     description="RL for bagged decision times")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a tabular periodic decision process")
    p.add_argument("mdp")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("variant", help="derive a testbed variant")
    p.add_argument("env")
    p.add_argument("--kind", required=True, choices=causal_env.VARIANT_KINDS)
    p.add_argument("--xi", type=float, default=0.0)
    p.add_argument("--scale-divisor", type=float, default=1.0)
    p.add_argument("--coeffs", help="JSON object with the variant's coefficients")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_variant)

    p = sub.add_parser("check", help="stationarity and limiting means")
    p.add_argument("env")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("ste", help="standardized treatment effect")
    p.add_argument("env")
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--horizon", type=int, default=252)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--gamma-bar", type=float, default=0.99)
    p.add_argument("--fit-episodes", type=int, default=2000)
    p.add_argument("--fit-horizon", type=int, default=10)
    p.set_defaults(func=_cmd_ste)

    p = sub.add_parser("simulate", help="run an experiment grid")
    p.add_argument("experiment")
    p.add_argument("-o", "--output")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare-states", help="state-construction comparison on "
                                              "the mediator-interaction variant")
    p.add_argument("experiment")
    p.add_argument("-o", "--output")
    p.add_argument("--xi", type=float, default=0.6)
    p.set_defaults(func=_cmd_compare_states)

    p = sub.add_parser("plot", help="plot emitted results")
    p.add_argument("results")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("theorem2", help="coarse/fine value comparison table")
    p.add_argument("--instance", required=True)
    p.add_argument("--fine", default=oracle.KIND_S_PRIME,
                   choices=oracle.ORACLE_STATE_KINDS)
    p.add_argument("--coarse", default=oracle.KIND_S_DOUBLEPRIME,
                   choices=oracle.ORACLE_STATE_KINDS)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=_cmd_theorem2)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
