"""Command-line interface: price one experiment, reproduce tables, benchmark.

    chaospricer price --config experiment.ini [--set section.key=value ...]
    chaospricer tables --id 3 --scale desk --out results/
    chaospricer bench --workers 1,2,4,8 --out bench.csv

Validation failures exit with status 2 and a single diagnostic line on
stderr.  CSV files are written with 17-significant-digit floats so
repeated runs of the same experiment produce byte-identical files except
in the wall-clock timing columns.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .config import ConfigError, load_config
from .parallel import (
    WORKERS_ENV,
    physical_core_count,
    write_scalability_csv,
)
from .pricer import price_bermudan
from .tables import BENCH_REFERENCE_EFFICIENCY, run_bench, run_table

_TABLE_COLUMNS = ("table", "instance", "label", "chaos_order", "paths",
                  "runs", "fit", "price", "run_variance", "expected_price",
                  "expected_variance", "abs_error", "ls_price", "ls_expected",
                  "seconds")


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_price_csv(result, path: str) -> None:
    """Per-run prices; timing columns are the only run-to-run variable bytes."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run_index", "price", "continuation", "immediate",
                         "sim_seconds", "induction_seconds"])
        for rs in result.run_stats:
            writer.writerow([
                rs.run_index,
                f"{rs.price:.17g}",
                f"{rs.continuation:.17g}",
                f"{result.immediate:.17g}",
                f"{rs.sim_seconds:.17g}",
                f"{rs.induction_seconds:.17g}",
            ])


def write_table_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_TABLE_COLUMNS)
        for row in rows:
            writer.writerow([_fmt_cell(row.get(col)) for col in _TABLE_COLUMNS])


def _cmd_price(args) -> int:
    cfg = load_config(args.config, args.set or ())
    print("# resolved configuration")
    print(cfg.echo())
    result = price_bermudan(
        cfg.model, cfg.payoff, cfg.grid,
        chaos_order=cfg.chaos_order, path_count=cfg.path_count,
        runs=cfg.runs, seed=cfg.seed,
        use_itm_rule=cfg.itm_rule, union_exercise=cfg.union_exercise,
        fit=cfg.fit, options=cfg.execution_options(),
        progress=print if args.verbose else None,
    )
    print("# result")
    print(f"price = {result.price:.17g}")
    if result.run_count > 1:
        print(f"run_variance = {result.run_variance:.17g}")
    print(f"immediate_exercise = {result.immediate:.17g}")
    out_path = args.out or cfg.output_path
    if out_path:
        write_price_csv(result, out_path)
        print(f"wrote {out_path}")
    return 0


def _cmd_tables(args) -> int:
    if args.id == 5:
        counts = _parse_worker_counts(args.workers or "1,2,4,8")
        if args.scale == "paper":
            raise ConfigError(
                "table 5 at paper scale needs a large multi-node cluster; "
                "run --scale desk for worker counts on this machine"
            )
        rows = run_bench(counts, seed=args.seed, progress=print)
        out = os.path.join(args.out, "table5_bench.csv")
        os.makedirs(args.out, exist_ok=True)
        write_scalability_csv(rows, out)
        print(f"wrote {out}")
        return 0
    rows = run_table(args.id, args.scale, runs=args.runs, seed=args.seed,
                     progress=print)
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, f"table{args.id}_{args.scale}.csv")
    write_table_csv(rows, out)
    print(f"wrote {out}")
    return 0


def _parse_worker_counts(raw: str) -> tuple[int, ...]:
    try:
        counts = tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"--workers {raw!r} is not a comma-separated "
                          "list of integers") from None
    if not counts or any(c < 1 for c in counts):
        raise ConfigError(f"--workers {raw!r} must list positive integers")
    return counts


def _cmd_bench(args) -> int:
    counts = _parse_worker_counts(args.workers)
    cores = physical_core_count()
    print(f"physical cores: {cores}; worker counts: {', '.join(map(str, counts))}")
    rows = run_bench(counts, path_count=args.paths, chaos_order=args.order,
                     seed=args.seed, progress=print)
    write_scalability_csv(rows, args.out)
    print(f"wrote {args.out}")
    for row in rows:
        ref = BENCH_REFERENCE_EFFICIENCY.get(row.workers)
        note = f" (reference large-cluster efficiency {ref:g})" if ref else ""
        print(f"workers={row.workers}: efficiency {row.efficiency:.3f}{note}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaospricer",
        description="Bermudan option pricing by policy iteration with "
                    "Wiener chaos regression",
        epilog=f"The {WORKERS_ENV} environment variable sets the default "
               "worker count when execution.workers is 'auto'.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_price = sub.add_parser("price", help="price one configured experiment")
    p_price.add_argument("--config", required=True,
                         help="INI experiment configuration")
    p_price.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                         help="override a configuration entry")
    p_price.add_argument("--out", default=None,
                         help="per-run CSV path (overrides output.path)")
    p_price.add_argument("--verbose", action="store_true",
                         help="print per-run progress")
    p_price.set_defaults(func=_cmd_price)

    p_tables = sub.add_parser("tables", help="reproduce a reference table")
    p_tables.add_argument("--id", type=int, required=True,
                          choices=(1, 2, 3, 4, 5))
    p_tables.add_argument("--scale", choices=("desk", "paper"),
                          default="desk")
    p_tables.add_argument("--out", default=".", help="output directory")
    p_tables.add_argument("--runs", type=int, default=None,
                          help="override the per-row run count")
    p_tables.add_argument("--seed", type=int, default=0)
    p_tables.add_argument("--workers", default=None,
                          help="worker counts for table 5 (comma separated)")
    p_tables.set_defaults(func=_cmd_tables)

    p_bench = sub.add_parser("bench", help="strong-scaling benchmark")
    p_bench.add_argument("--workers", default="1,2,4,8",
                         help="comma-separated worker counts")
    p_bench.add_argument("--paths", type=int, default=None,
                         help="path count (default 1e6)")
    p_bench.add_argument("--order", type=int, default=None,
                         help="chaos order (default 3)")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default="bench.csv")
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
