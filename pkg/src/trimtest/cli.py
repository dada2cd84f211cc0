"""Command-line interface.

Subcommands: estimate (point estimates only), bootstrap (adds draws and
covariances), test (full analysis with robustness tests), mc (simulation
studies), report (regenerate the report from stored draws), plot-data
(density grid from a stored draws file).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .analysis import (
    AnalysisConfig,
    point_estimates,
    regenerate_report,
    run_analysis,
    write_outputs,
)
from .csvio import atomic_write_text, format_float, grid_csv_text, read_draws_csv
from .errors import DataError, NumericalError
from .plotgrid import emit_plot_grid

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERICAL_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="path to the JSON analysis config")
    p.add_argument("--seed", type=int, default=None, help="override the bootstrap seed")
    p.add_argument(
        "--iterations", type=int, default=None, help="override the bootstrap iteration count"
    )
    p.add_argument("--threads", type=int, default=1, help="worker threads for bootstrap draws")
    p.add_argument("--output", default=None, help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trimtest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("estimate", "compute point estimates only"),
        ("bootstrap", "run the bootstrap and write draws and covariances"),
        ("test", "full analysis: bootstrap plus robustness tests"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("mc", help="Monte Carlo studies driven by the config's mc section")
    _add_common(p)

    p = sub.add_parser("report", help="regenerate the report from stored draws")
    p.add_argument("--output", required=True, help="directory holding results.json and draws")

    p = sub.add_parser("plot-data", help="write a density grid CSV from a draws file")
    p.add_argument("--draws", required=True, help="path to a draws CSV")
    p.add_argument("--columns", required=True, help="two 1-based stat columns, e.g. 1,2")
    p.add_argument("--output", required=True, help="output CSV path")
    return parser


def _load_config(args) -> AnalysisConfig:
    config = AnalysisConfig.from_json_file(args.config)
    return config.override(
        seed=args.seed, iterations=args.iterations, output_dir=args.output
    )


def _cmd_estimate(args) -> int:
    config = _load_config(args)
    doc = point_estimates(config)
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    path = os.path.join(config.output_dir, "estimates.json")
    atomic_write_text(path, text)
    sys.stdout.write(text)
    return 0


def _cmd_bootstrap(args) -> int:
    config = _load_config(args)
    bundle = run_analysis(config, n_threads=args.threads)
    paths = write_outputs(bundle)
    sys.stdout.write("wrote " + " ".join(sorted(paths.values())) + "\n")
    return 0


def _cmd_test(args) -> int:
    config = _load_config(args)
    bundle = run_analysis(config, n_threads=args.threads)
    paths = write_outputs(bundle)
    sys.stdout.write(bundle.table_text)
    sys.stdout.write("wrote " + " ".join(sorted(paths.values())) + "\n")
    return 0


def _cmd_mc(args) -> int:
    from .mc_oracle import DGPSpec, residual_trim_size_analysis, size_study

    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    mc_raw = raw.get("mc")
    if not mc_raw:
        raise DataError("config has no mc section")
    dgp_raw = dict(mc_raw.get("dgp", {}))
    kind = dgp_raw.pop("kind", None)
    if kind is None:
        raise DataError("mc.dgp needs a kind")
    dgp = DGPSpec(kind=kind, **dgp_raw)
    seed = args.seed if args.seed is not None else int(mc_raw.get("seed", 0))
    reps = int(mc_raw.get("reps", 100))
    alpha = float(mc_raw.get("alpha", 0.05))
    h = float(mc_raw.get("h", 0.0))
    analysis = residual_trim_size_analysis(
        multiplier=float(mc_raw.get("multiplier", 1.96)),
        inner_iterations=args.iterations
        if args.iterations is not None
        else int(mc_raw.get("inner_iterations", 299)),
        alpha=alpha,
        h=h,
        coefficient=mc_raw.get("coefficient", "x"),
    )
    report = size_study(dgp, analysis, reps=reps, seed=seed, alpha=alpha, h=h)
    doc = {
        "rejections": report.rejections,
        "reps": report.reps,
        "rate": report.rate,
        "std_error": report.std_error,
        "alpha": report.alpha,
        "h": report.h,
        "seed": seed,
    }
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    out_dir = args.output or raw.get("output", {}).get("directory", "trimtest-output")
    atomic_write_text(os.path.join(out_dir, "mc_results.json"), text)
    sys.stdout.write(text)
    return 0


def _cmd_report(args) -> int:
    pvals = regenerate_report(args.output)
    sys.stdout.write(json.dumps(pvals, sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_plot_data(args) -> int:
    try:
        i, j = (int(v) for v in args.columns.split(","))
    except ValueError:
        raise DataError("--columns must be two comma-separated integers") from None
    draws = read_draws_csv(args.draws)
    # 1-based, matching the stat_1..stat_d draw file header.
    if not (1 <= i <= draws.shape[1] and 1 <= j <= draws.shape[1]):
        raise DataError(f"columns {i},{j} out of range for {draws.shape[1]} statistics")
    grid = emit_plot_grid(draws[:, i - 1], draws[:, j - 1])
    atomic_write_text(args.output, grid_csv_text(grid.x, grid.y, grid.density))
    meta = {
        "bandwidth_x": format_float(grid.bandwidth_x),
        "bandwidth_y": format_float(grid.bandwidth_y),
        "diagonal_start": list(grid.diagonal_start),
        "diagonal_end": list(grid.diagonal_end),
        "point": list(grid.point),
    }
    sys.stdout.write(json.dumps(meta, sort_keys=True) + "\n")
    return 0


_COMMANDS = {
    "estimate": _cmd_estimate,
    "bootstrap": _cmd_bootstrap,
    "test": _cmd_test,
    "mc": _cmd_mc,
    "report": _cmd_report,
    "plot-data": _cmd_plot_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return DATA_EXIT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return NUMERICAL_EXIT
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
