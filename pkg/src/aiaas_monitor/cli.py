"""Command-line entry point: ``aiaas-monitor <command> [flags]``.

Exit codes: 0 ok, 1 configuration error, 2 malformed input, 3 invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import MODES, default_run_config, load_run_config
from .errors import ClockRegression, ConfigError, InvariantViolation, MalformedRecord, MonitorError, UnorderedInput
from .pipeline import bench, replay, run_pipeline, write_simulation

EXIT_OK, EXIT_CONFIG, EXIT_MALFORMED, EXIT_INVARIANT = 0, 1, 2, 3
LEVELS = ("metadata", "derived", "full")

log = logging.getLogger("aiaas_monitor")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (TOML); default: every scenario")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--level", choices=LEVELS, help="monitoring level")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--mode", choices=MODES, help="pipeline depth")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="aiaas-monitor", description="Simulate, monitor and audit AI service traffic.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write a synthetic transaction log and labels")
    sub.add_parser("run", parents=[common], help="simulate and run the monitoring pipeline")
    rp = sub.add_parser("replay", parents=[common], help="run the pipeline over an existing log")
    rp.add_argument("log", type=Path)
    bp = sub.add_parser("bench", parents=[common], help="measure monitoring overhead")
    bp.add_argument("--duration", type=int, default=None, help="simulated seconds per scenario")
    bp.add_argument("--repeats", type=int, default=3)
    sub.add_parser("validate-config", parents=[common], help="parse and check a configuration")
    return p


def _config(args):
    if args.config is None and args.command == "validate-config":
        raise ConfigError("--config", "validate-config needs a configuration file")
    cfg = load_run_config(args.config) if args.config else default_run_config()
    return cfg.with_overrides(seed=args.seed, level=args.level, out_dir=args.out, mode=args.mode)


def _dispatch(args) -> int:
    cfg = _config(args)
    if args.command == "validate-config":
        print(f"ok: {len(cfg.scenarios)} scenarios, {len(cfg.rules)} rules, level={cfg.level.value}, mode={cfg.mode}")
        return EXIT_OK
    if args.command == "simulate":
        n, labels = write_simulation(cfg)
        print(f"wrote {n} transactions and {labels} labels to {cfg.out_dir}")
        return EXIT_OK
    if args.command == "bench":
        print(json.dumps(bench(cfg, args.duration, repeats=args.repeats), indent=2, sort_keys=True))
        return EXIT_OK
    report = run_pipeline(cfg) if args.command == "run" else replay(args.log, cfg)
    print(f"{report.transactions} transactions, {sum(report.indicator_counts.values())} alerts, "
          f"{report.detected}/{report.labeled} labeled tenants detected, "
          f"{report.benign_rule_alerted} benign tenants with rule alerts -> {cfg.out_dir}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MalformedRecord, UnorderedInput, ClockRegression) as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except FileNotFoundError as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (InvariantViolation, MonitorError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
