"""Command-line entry point.

    fieldslab <exact-check|hydro-sweep|fluct-sweep|dual-check>
              --config <path> [--out <dir>] [--format csv|json]
              [--seed <u64>] [--threads <n>] [--no-plots]

Each run writes one table per result set (CSV or JSON), a meta.json with
the seed, config hash and version, and, unless disabled, rendered figures
alongside the tables.  Exit status is nonzero when any checked quantity
misses its tolerance (residual grids) or sits beyond |z| > 4 (sweeps).
"""

from __future__ import annotations

import argparse
import sys

from fieldslab.harness import commands, io
from fieldslab.harness.config import load_config, resolve_config

COMMANDS = {
    "exact-check": commands.cmd_exact_check,
    "hydro-sweep": commands.cmd_hydro_sweep,
    "fluct-sweep": commands.cmd_fluct_sweep,
    "dual-check": commands.cmd_dual_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fieldslab",
        description="simulation and verification lab for higher-order lattice-gas fields",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment configuration")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--format", choices=["csv", "json"], default="csv")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads")
        sp.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    cfg = resolve_config(cfg, {"seed": args.seed, "threads": args.threads})
    fn = COMMANDS[args.command]
    rows, tables, status = fn(cfg, args.out, fmt=args.format, plots=not args.no_plots)
    io.write_meta(args.out, args.command, cfg, cfg["seed"], tables)
    n_bad = sum(1 for r in rows if r.get("status") == "FAIL") + sum(
        1 for r in rows if r.get("z") is not None and abs(r["z"]) > 4
    )
    print(f"{args.command}: {len(rows)} rows -> {args.out} ({'ok' if status == 0 else f'{n_bad} flagged'})")
    return status


if __name__ == "__main__":
    sys.exit(main())
