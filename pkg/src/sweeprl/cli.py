"""Command-line entry points: train, eval, compare, patrol, oracle.

Every subcommand reads an experiment config file; flags override the seed
and choose output paths. Usage problems exit 2, runtime failures exit 1
with a one-line diagnostic on stderr.
"""
from __future__ import annotations

import argparse
import sys

from .errors import SweepError
from .harness import (
    check_horizon,
    evaluate_agent_kind,
    instance_for,
    make_simulator,
    parse_experiment_config,
    run_experiment,
    run_greedy_policy,
    sign_test_pvalue,
    train_dps_max,
    write_report_csv,
    _stream,
    _WORLD,
)
from .baselines import PatrolAgent, plan_patrol
from .rlearn import load_agent, write_diagnostics_csv
from .sim import write_events_csv, write_runlog_csv
from .tabular import gridworld_to_smdp, greedy_policy, smdp_value_iteration


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sweeprl",
        description="Continual-sweeping agents: training, evaluation, comparisons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a dps_max agent on one instance")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--out", default="agent.ckpt", help="checkpoint path")
    train.add_argument("--diagnostics", default=None, help="training CSV path")

    evl = sub.add_parser("eval", help="evaluate a trained checkpoint")
    evl.add_argument("--config", required=True)
    evl.add_argument("--checkpoint", required=True)
    evl.add_argument("--seed", type=int, default=None)
    evl.add_argument("--out", default=None, help="run log CSV path")
    evl.add_argument("--events-out", default=None, help="event table CSV path")

    compare = sub.add_parser("compare", help="agent vs. baseline across instances")
    compare.add_argument("--config", required=True)
    compare.add_argument("--out", default="report.csv")

    patrol = sub.add_parser("patrol", help="run the coverage-patrol baseline")
    patrol.add_argument("--config", required=True)
    patrol.add_argument("--seed", type=int, default=None)
    patrol.add_argument("--out", default=None, help="run log CSV path")

    oracle = sub.add_parser(
        "oracle", help="solve a small explicit-site instance exactly"
    )
    oracle.add_argument("--config", required=True)
    return parser


def _default_seed(config, override: int | None) -> int:
    return config.seeds[0] if override is None else override


def _cmd_train(args) -> int:
    config = parse_experiment_config(args.config)
    seed = _default_seed(config, args.seed)
    spec = instance_for(config, seed)
    agent, rows = train_dps_max(
        config.grid, spec, seed, config.agent_config, config.encoding
    )
    agent.save(args.out)
    if args.diagnostics:
        write_diagnostics_csv(rows, args.diagnostics)
    print(f"trained {agent.step_count} updates, gain {agent.gain:.6f} -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    config = parse_experiment_config(args.config)
    seed = _default_seed(config, args.seed)
    spec = instance_for(config, seed)
    check_horizon(spec, config.horizon)
    agent = load_agent(args.checkpoint, config.grid, config.agent_config)
    sim = make_simulator(config.grid, spec, _stream(seed, _WORLD))
    run_greedy_policy(agent, sim, config.horizon)
    if args.out:
        write_runlog_csv(sim.log, args.out)
    if args.events_out:
        write_events_csv(sim.log, args.events_out)
    print(f"adt {sim.metric_adt():.6f} dps {sim.metric_dps():.6f}")
    return 0


def _cmd_compare(args) -> int:
    config = parse_experiment_config(args.config)
    report = run_experiment(config)
    write_report_csv(report, args.out)
    n = len(report.rows)
    pvalue = sign_test_pvalue(report.dps_wins, n)
    print(
        f"{report.ours} vs {report.base}: mean dps diff {report.mean_dps_pct:+.2f}% "
        f"(sd {report.std_dps_pct:.2f}), mean adt diff {report.mean_adt_pct:+.2f}% "
        f"(sd {report.std_adt_pct:.2f}), dps wins {report.dps_wins}/{n} "
        f"(sign test p={pvalue:.4f}) -> {args.out}"
    )
    return 0


def _cmd_patrol(args) -> int:
    config = parse_experiment_config(args.config)
    seed = _default_seed(config, args.seed)
    spec = instance_for(config, seed)
    check_horizon(spec, config.horizon)
    plan = plan_patrol(config.grid)
    sim = make_simulator(config.grid, spec, _stream(seed, _WORLD), start=plan.cycle[0])
    PatrolAgent(plan).run(sim, config.horizon)
    if args.out:
        write_runlog_csv(sim.log, args.out)
    print(f"adt {sim.metric_adt():.6f} dps {sim.metric_dps():.6f}")
    return 0


def _cmd_oracle(args) -> int:
    config = parse_experiment_config(args.config)
    spec = config.explicit_spec
    if spec is None or spec.kind != "binomial":
        raise ValueError("oracle needs explicit binomial sites in [events]")
    if spec.bound != 1:
        raise ValueError("oracle supports bound 1 only")
    smdp = gridworld_to_smdp(config.grid, dict(zip(spec.cells, spec.values)))
    rho, values = smdp_value_iteration(smdp)
    policy = greedy_policy(smdp, rho, values)
    print(f"optimal detections per second: {rho:.6f}")
    for state in range(smdp.n_states):
        label = smdp.state_labels[state] if smdp.state_labels else str(state)
        target = (
            smdp.action_labels[policy[state]]
            if smdp.action_labels
            else str(policy[state])
        )
        print(f"  {label} -> go to {target}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "patrol": _cmd_patrol,
    "oracle": _cmd_oracle,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SweepError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
