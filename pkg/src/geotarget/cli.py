"""Command-line entry point.

    geotarget <subcommand> --config <path> [--out <dir>]

Subcommands run one pipeline stage each (reading the previous stage's
artifacts from the output directory); ``run`` executes the whole pipeline.
``evaluate --predictions file.csv`` scores a hand-made prediction CSV with
``truth`` and ``pred`` (or ``label``) columns.

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numeric failure.
Set ``GEOTARGET_THREADS`` to parallelize permutations and tree ensembles.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
import pandas as pd

from .clustering import ClusteringError
from .data import DataError
from .evaluation import (
    EvaluationError,
    confusion,
    exclusion_error,
    inclusion_error,
    secondary_metrics,
)
from .models import FitError
from .pca import PcaError
from .pipeline import ConfigError, STAGES, load_config, run_pipeline, run_stage
from .stats import StatsError
from .synthetic import SyntheticError
from .weights import WeightsError

USAGE_ERRORS = (ConfigError,)
DATA_ERRORS = (DataError, WeightsError, ClusteringError, EvaluationError, FileNotFoundError)
NUMERIC_ERRORS = (StatsError, PcaError, FitError, SyntheticError, np.linalg.LinAlgError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="geotarget", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", *STAGES):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run" else "run the full pipeline")
        p.add_argument("--config", required=True, help="pipeline config (TOML)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument(
            "--k",
            action="append",
            type=int,
            default=None,
            help="cluster count; repeat for several cuts (overrides config)",
        )
        if name == "evaluate":
            p.add_argument(
                "--predictions",
                default=None,
                help="standalone mode: score a CSV with truth and pred columns",
            )
    return parser


def _evaluate_predictions(path) -> None:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
        raise DataError(f"{path}: {exc}")
    if "truth" not in frame.columns:
        raise DataError(f"{path}: missing 'truth' column")
    pred_col = "pred" if "pred" in frame.columns else "label"
    if pred_col not in frame.columns:
        raise DataError(f"{path}: missing 'pred' (or 'label') column")
    c = confusion(frame["truth"].to_numpy(), frame[pred_col].to_numpy())
    sens, spec, _ = secondary_metrics(c)

    def pct(v):
        return "NA" if v is None else f"{100.0 * v:.2f}%"

    try:
        ee = exclusion_error(c)
    except EvaluationError:
        ee = None
    try:
        ie = inclusion_error(c)
    except EvaluationError:
        ie = None
    print(f"tp={c.tp} tn={c.tn} fp={c.fp} fn={c.fn}")
    print(f"EE = {pct(ee)}")
    print(f"IE = {pct(ie)}")
    print(f"sensitivity = {pct(sens)}")
    print(f"specificity = {pct(spec)}")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return 0 if not exc.code else 1

    try:
        if args.command == "evaluate" and getattr(args, "predictions", None):
            _evaluate_predictions(args.predictions)
        elif args.command == "run":
            out = run_pipeline(args.config, args.out, k_values=args.k)
            print(f"pipeline complete: {out}")
        else:
            config = load_config(args.config)
            if args.k:
                import dataclasses

                config = dataclasses.replace(config, k_values=list(args.k))
            run_stage(args.command, config, args.out)
            print(f"stage {args.command} complete")
    except USAGE_ERRORS as exc:
        print(f"geotarget: config error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"geotarget: data error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"geotarget: numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
