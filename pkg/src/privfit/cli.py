"""Command-line harness.

Subcommands:

* ``gen-data``     generate the synthetic dataset CSV
* ``overfit``      k-fold generalization-gap sweep (tables, curves, figures)
* ``convergence``  accuracy-vs-epochs comparison of both algorithms
* ``accountant``   print the privacy-budget table for a training schedule
* ``plot``         re-render SVG figures from previously emitted CSVs

Exit codes: 0 success, 2 configuration/validation error, 3 training
explosion under the abort policy.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import experiments, plots
from .config import SCALE_DESK, SCALE_PAPER, ConfigError, build_config
from .optim import TrainingExplosionError
from .privacy import OutOfRegimeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPLOSION = 3


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="flat key=value config file")
    parser.add_argument("--seed", type=int, metavar="U64", help="master seed override")
    parser.add_argument("--out", metavar="DIR", help="output directory override")
    parser.add_argument(
        "--scale",
        choices=(SCALE_DESK, SCALE_PAPER),
        default=SCALE_DESK,
        help="default bundle: desk (CI-sized) or paper (full-size)",
    )
    parser.add_argument(
        "--sigma",
        metavar="LIST",
        help="comma-separated noise scales overriding the configured sweep",
    )


def _parse_sigma_list(raw: str) -> tuple:
    try:
        values = tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad --sigma list {raw!r}: {exc}") from exc
    if not values:
        raise ConfigError(f"--sigma list {raw!r} is empty")
    return values


def _config_from_args(args, sigma_key: str | None) -> "build_config":
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if sigma_key is not None and args.sigma is not None:
        overrides[sigma_key] = _parse_sigma_list(args.sigma)
    return build_config(args.scale, args.config, overrides)


def _cmd_gen_data(args) -> int:
    config = _config_from_args(args, sigma_key=None)
    path = experiments.run_gen_data(config, config.out_dir)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_overfit(args) -> int:
    config = _config_from_args(args, sigma_key="sigma_list")
    outcome = experiments.run_overfit(config, config.out_dir)
    for result in outcome.per_sigma:
        reduction = 1.0 - max(result.dpsgd_diffs()) / max(result.sgd_diffs())
        print(
            f"sigma={result.sigma:g}: "
            f"sgd mean gap {sum(result.sgd_diffs()) / len(result.sgd):.4f}, "
            f"dpsgd mean gap {sum(result.dpsgd_diffs()) / len(result.dpsgd):.4f}, "
            f"max-gap reduction {reduction:.1%}"
        )
    print(f"outputs in {outcome.out_dir}")
    return EXIT_OK


def _cmd_convergence(args) -> int:
    config = _config_from_args(args, sigma_key="conv_sigma_list")
    outcome = experiments.run_convergence(config, config.out_dir)
    for result in outcome.per_sigma:
        def _describe(report):
            if report is None:
                return "no snapshots"
            train = report.epoch_train_converged
            test = report.epoch_test_converged
            return (
                f"train plateau @{train if train is not None else 'never'}, "
                f"test plateau @{test if test is not None else 'never'}"
            )

        print(f"sigma={result.sigma:g}: sgd {_describe(result.sgd_report)}; "
              f"dpsgd {_describe(result.dpsgd_report)}")
    print(f"outputs in {outcome.out_dir}")
    return EXIT_OK


def _cmd_accountant(args) -> int:
    rows = [
        experiments.accountant_row(sigma, args.q, args.steps, args.delta)
        for sigma in _parse_sigma_list(args.sigma)
    ]
    sys.stdout.write(experiments.format_accountant_table(rows))
    return EXIT_OK


def _detect_csv_kind(path: str) -> tuple[str, list[str], list[list[float]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path}: empty file")
        rows = [[float(v) for v in row] for row in reader]
    if header == ["alpha", "beta_sgd", "beta_dpsgd"]:
        return "curve", header, rows
    if header == ["epoch", "sgd_train", "sgd_test", "dpsgd_train", "dpsgd_test"]:
        return "history", header, rows
    raise ConfigError(f"{path}: unrecognized CSV header {header!r}")


def _cmd_plot(args) -> int:
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    for path in args.csv:
        kind, _, rows = _detect_csv_kind(path)
        if not rows:
            raise ConfigError(f"{path}: no data rows")
        base = os.path.splitext(os.path.basename(path))[0]
        target = os.path.join(out_dir, base + ".svg")
        columns = list(zip(*rows))
        if kind == "curve":
            fig = plots.curve_figure(columns[0], columns[1], columns[2], args.plot_sigma)
        else:
            series = {
                "sgd_train": columns[1],
                "sgd_test": columns[2],
                "dpsgd_train": columns[3],
                "dpsgd_test": columns[4],
            }
            fig = plots.history_figure(columns[0], series, args.plot_sigma)
        plots.save_svg(fig, target)
        print(f"wrote {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privfit",
        description="Differentially private SGD experiments on a synthetic "
        "biased-Bernoulli benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the dataset CSV")
    _add_experiment_flags(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("overfit", help="k-fold generalization-gap sweep")
    _add_experiment_flags(p)
    p.set_defaults(func=_cmd_overfit)

    p = sub.add_parser("convergence", help="accuracy-vs-epochs comparison")
    _add_experiment_flags(p)
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("accountant", help="print the privacy-budget table")
    p.add_argument("--sigma", required=True, metavar="LIST", help="noise scales")
    p.add_argument("--q", type=float, required=True, help="per-lot sampling ratio L/N")
    p.add_argument("--steps", type=int, required=True, help="number of training steps")
    p.add_argument("--delta", type=float, default=1e-5, help="target delta")
    p.set_defaults(func=_cmd_accountant)

    p = sub.add_parser("plot", help="re-render SVGs from emitted CSVs")
    p.add_argument("csv", nargs="+", help="curve or convergence CSV files")
    p.add_argument("--out", metavar="DIR", help="directory for the SVGs")
    p.add_argument(
        "--plot-sigma",
        type=float,
        default=None,
        help="noise scale to show in the figure title",
    )
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OutOfRegimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingExplosionError as exc:
        print(f"training exploded: {exc}", file=sys.stderr)
        return EXIT_EXPLOSION


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
