"""Command-line driver: ``twcc <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import CONTROLLERS, Config, ConfigError, dump_config, load_config

log = logging.getLogger("twcc")


def _config(args) -> Config:
    cfg = load_config(args.config)
    sc = {}
    if getattr(args, "seed", None) is not None:
        sc["seed"] = args.seed
    if getattr(args, "scenario", None):
        sc["kind"] = args.scenario
    if getattr(args, "model", None):
        sc["model_path"] = args.model
    if getattr(args, "trials", None):
        sc["trials"] = args.trials
    if sc:
        cfg = cfg.replace(scenario=sc)
    if getattr(args, "episodes", None):
        cfg = cfg.replace(train={"episodes": args.episodes})
    return cfg


def _controllers(value: str | None):
    if value in (None, "all"):
        return CONTROLLERS
    names = tuple(v.strip() for v in value.split(","))
    for n in names:
        if n not in CONTROLLERS:
            raise ConfigError(f"unknown controller {n!r}; choose from {', '.join(CONTROLLERS)}")
    return names


def cmd_simulate(args) -> int:
    from .harness import run_trial, write_json, write_trace

    cfg = _config(args)
    controller = args.controller or cfg.scenario.controller
    rec = run_trial(cfg, args.trial, controller)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.scenario.kind}_{controller}_{args.trial:03d}"
    write_trace(rec, out / f"trace_{stem}.csv")
    write_json(rec.metrics, out / f"metrics_{stem}.json")
    print(f"{controller}: {rec.outcome}, tracking RMSE {rec.metrics['tracking_rmse_m']:.3f} m, "
          f"travel {rec.metrics['travel_distance_m']:.1f} m")
    return 0


def cmd_batch(args) -> int:
    from .harness import run_batch

    cfg = _config(args)
    summary, _ = run_batch(cfg, _controllers(args.controller), cfg.scenario.trials,
                           out_dir=args.out, workers=args.workers)
    print(format_summary(summary))
    return 0


def cmd_collect(args) -> int:
    from .harness import collect_training_flights

    cfg = _config(args)
    train, tests = collect_training_flights(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train.save(out / "train_log.csv")
    for i, lg in enumerate(tests):
        lg.save(out / f"test_log_{i}.csv")
    lo, hi = train.speed_range()
    print(f"train log: {len(train)} rows, speed {lo:.2f}..{hi:.2f} m/s; {len(tests)} test logs")
    return 0


def cmd_train(args) -> int:
    from .pipeline import compare_estimators, load_logs, prepare_datasets

    cfg = _config(args)
    data = None
    if args.logs:
        d = Path(args.logs)
        tests = sorted(d.glob("test_log_*.csv"))
        data = prepare_datasets(cfg, load_logs([d / "train_log.csv", *tests]))
    report = compare_estimators(cfg, args.out, data)
    for row in report["tests"]:
        print(f"test {row['index']}: paRNN {row['parnn']:.4f}  vanilla {row['vanilla']:.4f}  "
              f"flat plate {row['flat_plate']:.4f}  improvement {100 * row['improvement']:.1f}%")
    print(f"mean improvement {100 * report['mean_improvement']:.1f}%, "
          f"{report['wall_time_s']:.0f} s; models written to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .aero.dataset import SampleBatch, build_dataset
    from .aero.rnn import RnnModel, evaluate
    from .aero.dataset import FlightLog
    from .pipeline import flat_plate_rmse

    cfg = _config(args)
    model = RnnModel.load(args.model or cfg.scenario.model_path)
    rows = []
    for p in args.logs:
        batch = SampleBatch.from_samples(build_dataset(FlightLog.load(p), cfg.drone,
                                                       cfg.train.window, cfg.train.smoothing))
        rows.append({"log": str(p), "samples": len(batch),
                     model.kind: evaluate(model, batch, cfg.drone),
                     "flat_plate": flat_plate_rmse(batch, cfg)})
        print(f"{p}: {model.kind} {rows[-1][model.kind]:.4f} N, flat plate {rows[-1]['flat_plate']:.4f} N")
    if args.out:
        from .harness import write_json

        write_json(rows, args.out)
    return 0


def format_summary(summary: dict) -> str:
    lines = [f"scenario {summary['scenario']}  seed {summary['seed']}",
             f"{'controller':<12}{'trials':>7}{'success':>9}{'travel m':>10}{'RMSE m':>9}"]
    for name, s in summary["controllers"].items():
        lines.append(f"{name:<12}{s['trials']:>7}{100 * s['success_rate']:>8.1f}%"
                     f"{s['mean_travel_distance_m']:>10.1f}{s['rmse_mean']:>9.3f}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    from .harness import write_json

    merged = []
    for d in args.inputs:
        path = Path(d)
        path = path / "summary.json" if path.is_dir() else path
        with open(path) as fh:
            summary = json.load(fh)
        merged.append(summary)
        print(format_summary(summary))
        print()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text("\n\n".join(format_summary(s) for s in merged) + "\n")
        write_json(merged, out / "report.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twcc", description="Foldable-wing quadrotor simulation and experiments")
    parser.add_argument("--dump-config", action="store_true", help="print the default configuration and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p, seed=True):
        p.add_argument("--config", default="default", help="INI config file, or 'default'")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="scenario seed")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("simulate", help="run one trial and write its trace and metrics")
    common(p)
    p.add_argument("--controller", choices=CONTROLLERS)
    p.add_argument("--scenario", choices=("forest", "steering_sweep", "hover_checks"))
    p.add_argument("--trial", type=int, default=0, help="trial index (picks the paired world)")
    p.add_argument("--model", help="trained paRNN model file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("batch", help="paired-seed trials for several controllers")
    common(p)
    p.add_argument("--scenario", choices=("forest", "steering_sweep"))
    p.add_argument("--trials", type=int)
    p.add_argument("--controller", help="comma-separated list or 'all'")
    p.add_argument("--model", help="trained paRNN model file")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("collect", help="random wings-spread flights for training")
    common(p, seed=False)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train paRNN and the vanilla baseline")
    common(p, seed=False)
    p.add_argument("--episodes", type=int)
    p.add_argument("--logs", help="directory written by 'collect' (collects afresh if omitted)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model on flight logs")
    p.add_argument("--config", default="default")
    p.add_argument("--model")
    p.add_argument("--out", help="JSON file for the scores")
    p.add_argument("logs", nargs="+")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="tabulate batch summaries")
    p.add_argument("inputs", nargs="+", help="batch output directories or summary.json files")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.dump_config:
        sys.stdout.write(dump_config(Config()))
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        with np.errstate(over="raise", invalid="raise"):
            return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, FloatingPointError) as exc:
        print(f"twcc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
