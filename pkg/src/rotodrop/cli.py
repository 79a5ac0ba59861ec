"""Command-line entry point.

Subcommands mirror the library surface: gen-mask (mask streams), hw-cost
(cycle/resource model), train (overfit study), sweep-r (rotate-amount
sweep), mask-stats (generator statistics).  Experiment commands read an
INI config file, let flags override it, and write CSVs, a text summary,
and rendered figures under a fresh run directory.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys

from . import hwcost
from .config import (ConfigError, generator_config_from, load_config_file,
                     spec_from_config)
from .experiments import (DatasetMissing, emit_report, mask_statistics,
                          mask_stats_summary_text, run_overfit_study,
                          run_r_sweep, study_summary_text, sweep_summary_text)
from .generators import GeneratorKind, generator_stream


def _parse_int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _generator_config_from_args(args):
    values = load_config_file(args.config) if args.config else {}
    schedule_values = args.schedule_values
    if schedule_values is None and args.r is not None:
        schedule_values = (args.r,)
    return generator_config_from(
        values,
        kind=args.kind,
        n=args.n,
        p=args.p,
        seed=args.seed,
        lfsr_width=args.lfsr_width,
        sample_bits=args.sample_bits,
        predefined=args.predefined,
        schedule_mode=args.schedule,
        schedule_values=schedule_values,
    )


def _add_generator_flags(parser, default_count: int):
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--kind", default=None,
                        help="general | general-serial | general-parallel | proposed")
    parser.add_argument("--n", type=int, default=None, help="mask length in bits")
    parser.add_argument("--p", type=float, default=None, help="keep probability")
    parser.add_argument("--count", type=int, default=default_count,
                        help="number of masks to emit")
    parser.add_argument("--r", type=int, default=None,
                        help="constant rotate amount (proposed kind)")
    parser.add_argument("--schedule", choices=("constant", "sequence", "random"),
                        default=None, help="rotate-amount schedule")
    parser.add_argument("--schedule-values", type=_parse_int_list, default=None,
                        help="comma-separated amounts for constant/sequence schedules")
    parser.add_argument("--predefined", choices=("exact", "bernoulli"), default=None,
                        help="how the stored mask of the proposed kind is drawn")
    parser.add_argument("--lfsr-width", type=int, default=None, choices=(8, 16, 32),
                        help="hardware RNG register width")
    parser.add_argument("--sample-bits", type=int, default=None,
                        help="bits per uniform draw (default: register width)")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (default: config file value, else 0)")


def _run_dir(args, prefix: str, seed: int) -> str:
    if args.run_dir:
        os.makedirs(args.run_dir, exist_ok=True)
        return args.run_dir
    stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
    path = os.path.join(args.out_dir, f"{prefix}-{stamp}-seed{seed}")
    os.makedirs(path, exist_ok=True)
    return path


def _add_run_dir_flags(parser):
    parser.add_argument("--out-dir", default="runs",
                        help="parent directory for run outputs")
    parser.add_argument("--run-dir", default=None,
                        help="exact run directory (overrides the timestamped name)")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip rendering PNG figures alongside the CSVs")


def _add_experiment_flags(parser):
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--dataset", dest="kind_override", default=None,
                        choices=("mnist", "blobs", "xor"), help="dataset kind")
    parser.add_argument("--data-dir", default=None, help="MNIST root directory")
    parser.add_argument("--train-size", type=int, default=None)
    parser.add_argument("--test-size", type=int, default=None)
    parser.add_argument("--hidden", type=_parse_int_list, default=None,
                        help="comma-separated hidden layer widths")
    parser.add_argument("--arms", default=None,
                        help="comma-separated subset of none,general,proposed")
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--learning-rate", type=float, default=None)
    parser.add_argument("--keep-p", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (default: config file value, else 0)")
    _add_run_dir_flags(parser)


def _spec_from_args(args, name: str):
    values = load_config_file(args.config) if args.config else {}
    overrides = dict(
        name=None if args.config else name,
        kind=args.kind_override,
        data_dir=args.data_dir,
        train_size=args.train_size,
        test_size=args.test_size,
        hidden=args.hidden,
        arms=tuple(a.strip() for a in args.arms.split(",")) if args.arms else None,
        trials=args.trials,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        keep_p=args.keep_p,
        seed=args.seed,
    )
    return spec_from_config(values, **overrides)


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen_mask(args) -> int:
    config = _generator_config_from_args(args)
    masks = generator_stream(config, args.count)
    _write_or_print("\n".join(m.to_literal() for m in masks) + "\n", args.out)
    return 0


def cmd_hw_cost(args) -> int:
    widths = args.n or [8, 64]
    if args.csv:
        reports = [hwcost.cost_model(kind, n, single_register=args.single_register)
                   for n in widths for kind in GeneratorKind]
        text = hwcost.reports_to_csv(reports)
    else:
        blocks = [hwcost.format_comparison(
            hwcost.compare_costs(n, single_register=args.single_register))
            for n in widths]
        blocks.append(hwcost.format_strategy_summary())
        text = "\n\n".join(blocks) + "\n"
    _write_or_print(text, args.out)
    return 0


def _finish_experiment(result, args, summary_text, prefix: str, seed: int) -> int:
    outdir = _run_dir(args, prefix, seed)
    paths = emit_report(result, outdir)
    if not args.no_figures:
        from . import plots
        paths += plots.render_figures(result, outdir)
    sys.stdout.write(summary_text(result))
    sys.stdout.write("wrote:\n" + "".join(f"  {p}\n" for p in paths))
    return 0


def cmd_train(args) -> int:
    spec = _spec_from_args(args, name="overfit-study")
    result = run_overfit_study(spec)
    return _finish_experiment(result, args, study_summary_text, spec.name, spec.seed)


def cmd_sweep_r(args) -> int:
    spec = _spec_from_args(args, name="r-sweep")
    result = run_r_sweep(spec, args.r_values)
    return _finish_experiment(result, args, sweep_summary_text, spec.name, spec.seed)


def cmd_mask_stats(args) -> int:
    config = _generator_config_from_args(args)
    report = mask_statistics(config, args.count)
    return _finish_experiment(report, args, mask_stats_summary_text,
                              f"mask-stats-{config.kind.value}", config.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotodrop",
        description="Dropout mask generation strategies, hardware cost model, "
                    "and a desk-scale training harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-mask", help="emit dropout masks, one literal per line")
    _add_generator_flags(p, default_count=1)
    p.add_argument("--out", default=None, help="write to a file instead of stdout")
    p.set_defaults(func=cmd_gen_mask)

    p = sub.add_parser("hw-cost", help="cycle and component cost per strategy")
    p.add_argument("--n", type=int, action="append",
                   help="mask width; repeatable (default: 8 and 64)")
    p.add_argument("--csv", action="store_true", help="machine-readable output")
    p.add_argument("--single-register", action="store_true",
                   help="model the in-place rotation variant (n register bits)")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; unused")
    p.add_argument("--out", default=None, help="write to a file instead of stdout")
    p.set_defaults(func=cmd_hw_cost)

    p = sub.add_parser("train", help="run the overfit study (3 arms by default)")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-r", help="train the rotation arm per constant r")
    _add_experiment_flags(p)
    p.add_argument("--r-values", type=_parse_int_list, default=(1, 2, 4, 8, 16, 32),
                   help="comma-separated rotate amounts")
    p.set_defaults(func=cmd_sweep_r)

    p = sub.add_parser("mask-stats", help="keep-frequency statistics of a generator")
    _add_generator_flags(p, default_count=10000)
    _add_run_dir_flags(p)
    p.set_defaults(func=cmd_mask_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DatasetMissing as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
