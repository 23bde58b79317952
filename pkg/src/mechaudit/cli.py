"""Command-line entry point: ``mechaudit run --config exp.toml`` plus per-audit shortcuts."""

from __future__ import annotations

import argparse
import json
import sys

from .analysis import solve_parameters
from .experiment import (AUDITS, ConfigError, ExperimentConfig, config_from_dict, emit_report,
                         load_config, report_csv, run_experiment)


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials (overrides the config)")
    p.add_argument("--out", help="output directory; the report goes to stdout when omitted")
    p.add_argument("--format", choices=("json", "csv"), help="report format")
    p.add_argument("--workers", type=int, help="threads for Monte Carlo blocks")


def _add_mechanism(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, help="manual privacy level (solved when omitted)")
    p.add_argument("--delta", type=float, help="manual uniform-arm weight")
    p.add_argument("--v-max", type=float, dest="v_max", help="manual participation threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mechaudit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the audits listed in a TOML config")
    run.add_argument("--config", required=True)
    _add_output(run)

    for name in ("dp", "dominance", "accuracy"):
        p = sub.add_parser(f"audit-{name}", help=f"run only the {name} audit of a config")
        p.add_argument("--config", required=True)
        _add_output(p)

    solve = sub.add_parser("solve-params", help="closed-form epsilon, delta and v_max")
    solve.add_argument("--n", type=int, required=True)
    solve.add_argument("--alpha", type=float, default=0.5)
    solve.add_argument("--g", type=float, required=True, help="gap of the game")
    solve.add_argument("--alternatives", type=int, required=True, help="number of alternatives |S|")
    solve.add_argument("--sensitivity", type=float, default=1.0)

    poll = sub.add_parser("poll", help="audit the electronic poll")
    poll.add_argument("--n", type=int, required=True)
    poll.add_argument("--m", type=int, default=2)
    poll.add_argument("--g", type=float, default=0.5)
    poll.add_argument("--audits", nargs="+", choices=AUDITS, default=["claim1"])
    _add_mechanism(poll)
    _add_output(poll)

    goods = sub.add_parser("digital-goods", help="audit single-price digital-goods pricing")
    goods.add_argument("--n", type=int, required=True)
    goods.add_argument("--q", type=int, default=10)
    goods.add_argument("--audits", nargs="+", choices=AUDITS, default=["accuracy"])
    _add_mechanism(goods)
    _add_output(goods)
    return parser


def _overrides(cfg: ExperimentConfig, args, audits=None) -> ExperimentConfig:
    fields = {k: v for k, v in cfg.__dict__.items()}
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.trials is not None:
        fields["trials"] = args.trials
    if args.format is not None:
        fields["output_format"] = args.format
    if args.out is not None:
        fields["output_dir"] = args.out
    if args.workers is not None:
        fields["workers"] = args.workers
    if audits is not None:
        fields["audits"] = tuple(audits)
    return ExperimentConfig(**fields)


def _instance_config(args, builtin: str) -> ExperimentConfig:
    instance = {"builtin": builtin, "n": args.n}
    if builtin == "poll":
        instance.update(m=args.m, g=args.g)
    else:
        instance["q"] = args.q
    manual = [args.epsilon, args.delta, args.v_max]
    if all(x is None for x in manual):
        mechanism = {"solve": True, "alpha": args.alpha}
    elif any(x is None for x in manual):
        raise ConfigError("--epsilon, --delta and --v-max must be given together")
    else:
        mechanism = {"epsilon": args.epsilon, "delta": args.delta, "v_max": args.v_max,
                     "alpha": args.alpha}
    return config_from_dict({"instance": instance, "mechanism": mechanism,
                             "audits": list(args.audits)})


def _execute(cfg: ExperimentConfig) -> int:
    report = run_experiment(cfg)
    if cfg.output_dir is None:
        sys.stdout.write(report.to_json() if cfg.output_format == "json" else report_csv(report))
    else:
        for path in emit_report(report, cfg.output_dir, cfg.output_format):
            print(path, file=sys.stderr)
    return 0 if report.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve-params":
            solved = solve_parameters(args.n, args.alpha, args.g, args.alternatives, args.sensitivity)
            print(json.dumps(solved.to_json(), indent=2))
            return 0 if solved.feasible else 1
        if args.command in ("poll", "digital-goods"):
            cfg = _overrides(_instance_config(args, args.command), args)
        else:
            audits = None
            if args.command.startswith("audit-"):
                audits = [args.command.removeprefix("audit-")]
            cfg = _overrides(load_config(args.config), args, audits)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"mechaudit: error: {exc}", file=sys.stderr)
        return 2
    return _execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
