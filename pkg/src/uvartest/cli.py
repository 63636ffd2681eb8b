"""Command-line front end.

Two subcommands:

``uvartest test DATA.csv``
    Run the U-test, the F-test, or a permutation test on grouped
    observations given in long form (header ``treatment,value``, one
    observation per row) and print a JSON report.

``uvartest simulate PRESET-OR-CONFIG.json``
    Run a canned or user-configured Monte Carlo study and write the
    rejection table as CSV or Markdown.

Exit status: 0 on success, 1 when the requested test is degenerate
(all groups internally constant), 2 on input or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import Sequence

from .core import Dataset, DegenerateWithinVariance, TestResult, f_test, kappa, u_test
from .simlab import (
    PRESET_NAMES,
    permutation_pvalue,
    preset,
    run_scenario,
    scenario_from_dict,
    scenario_with_overrides,
)
from .randgen import SeedSpec

SEED_ENV_VAR = "UVARTEST_SEED"

EXIT_OK = 0
EXIT_DEGENERATE = 1
EXIT_INPUT_ERROR = 2


class InputError(Exception):
    """User-facing input problem; maps to exit status 2."""


def _read_grouped_csv(path: str) -> list[tuple[str, list[float]]]:
    """Parse a long-form CSV into (treatment, values) groups.

    Groups keep first-appearance order.  Raises InputError naming the
    offending line for malformed content.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    groups: dict[str, list[float]] = {}
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["treatment", "value"]:
            raise InputError(
                f"{path}: expected header 'treatment,value', got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise InputError(
                    f"{path}: line {lineno}: expected 2 fields, got {len(row)}"
                )
            treatment, raw_value = row
            if not treatment:
                raise InputError(f"{path}: line {lineno}: empty treatment label")
            try:
                value = float(raw_value)
            except ValueError:
                raise InputError(
                    f"{path}: line {lineno}: value {raw_value!r} is not a number"
                ) from None
            if not math.isfinite(value):
                raise InputError(f"{path}: line {lineno}: value must be finite")
            groups.setdefault(treatment, []).append(value)
    if not groups:
        raise InputError(f"{path}: no observations found")
    for treatment, values in groups.items():
        if len(values) < 2:
            raise InputError(
                f"{path}: treatment {treatment!r} has {len(values)} observation(s); "
                "every treatment needs at least 2"
            )
    if len(groups) < 2:
        raise InputError(f"{path}: need at least 2 treatments, found {len(groups)}")
    return list(groups.items())


def _report(result: TestResult, dataset: Dataset) -> dict:
    extras = dict(result.extras)
    if result.df is not None:
        extras["df"] = list(result.df)
    return {
        "method": result.method,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "reject": result.reject,
        "alpha": result.alpha,
        "k": dataset.design.k,
        "n": dataset.design.n,
        "group_sizes": list(dataset.design.group_sizes),
        "kappa": kappa(dataset.design),
        "extras": extras,
    }


def _default_seed(explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get(SEED_ENV_VAR)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"{SEED_ENV_VAR}={env!r} is not an integer") from None


def _cmd_test(args: argparse.Namespace) -> int:
    groups = _read_grouped_csv(args.data)
    dataset = Dataset([values for _, values in groups])
    try:
        if args.method == "u":
            reports = [_report(u_test(dataset, args.alpha), dataset)]
        elif args.method == "f":
            reports = [_report(f_test(dataset, args.alpha), dataset)]
        elif args.method == "both":
            reports = [
                _report(u_test(dataset, args.alpha), dataset),
                _report(f_test(dataset, args.alpha), dataset),
            ]
        else:  # perm
            seed = SeedSpec(_default_seed(args.seed))
            result = permutation_pvalue(
                dataset, args.n_perm, seed, alpha=args.alpha
            )
            reports = [_report(result, dataset)]
    except DegenerateWithinVariance as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    payload = reports[0] if len(reports) == 1 else reports
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _load_scenario(source: str):
    if source in PRESET_NAMES:
        return preset(source)
    if os.path.exists(source):
        try:
            with open(source, encoding="utf-8") as fh:
                config = json.load(fh)
            return scenario_from_dict(config)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"invalid scenario config {source}: {exc}") from exc
    raise InputError(
        f"{source!r} is neither a preset ({', '.join(PRESET_NAMES)}) nor a config file"
    )


def _cmd_simulate(args: argparse.Namespace) -> int:
    spec = _load_scenario(args.scenario)
    seed = _default_seed(args.seed) if (args.seed is not None or SEED_ENV_VAR in os.environ) else None
    spec = scenario_with_overrides(spec, replicates=args.replicates, master_seed=seed)
    table = run_scenario(spec, workers=args.workers)
    for cell in table.cells:
        print(
            f"{cell.scenario} k={cell.k} design={cell.design} "
            f"sigma_b2={cell.sigma_b2:g} {cell.method}: "
            f"rate={cell.rate:.4f} se={cell.se:.4f} n={cell.replicates}",
            file=sys.stderr,
        )
    rendered = table.to_csv_string() if args.format == "csv" else table.to_markdown()
    if args.out is None:
        sys.stdout.write(rendered)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(rendered)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvartest",
        description="Tests for the between-treatment variance component in one-way random effects data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    test = sub.add_parser("test", help="run a test on a long-form CSV of grouped observations")
    test.add_argument("data", help="CSV file with header 'treatment,value'")
    test.add_argument("--method", choices=("u", "f", "both", "perm"), default="both")
    test.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    test.add_argument("--n-perm", type=int, default=999, dest="n_perm",
                      help="permutation count for --method perm (default 999)")
    test.add_argument("--seed", type=int, default=None,
                      help=f"permutation seed (default: ${SEED_ENV_VAR} or 0)")

    sim = sub.add_parser("simulate", help="run a Monte Carlo study and write the rejection table")
    sim.add_argument("scenario", help="preset name or path to a JSON scenario config")
    sim.add_argument("--replicates", type=int, default=None, help="override the replicate count")
    sim.add_argument("--seed", type=int, default=None,
                     help=f"override the master seed (default: ${SEED_ENV_VAR} or the scenario's)")
    sim.add_argument("--out", default=None, help="output file (default: stdout)")
    sim.add_argument("--format", choices=("csv", "md"), default="csv")
    sim.add_argument("--workers", type=int, default=1, help="worker threads (results identical)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "test":
            return _cmd_test(args)
        return _cmd_simulate(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
