"""
Command-line front end.

    python -m brick.cli run --scenario byzantine-f --seed 7 --out runs/byz
    python -m brick.cli bench --wardens 7,34,151 --rtt 100 --stagger 220
    python -m brick.cli battery --suite safety --seeds 1000 --workers 8
    python -m brick.cli scan --v 12,60,120 --f 1,2,3,5

Reports go to stdout as JSON, logs to stderr.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from brick.errors import BrickError, ConfigError
from brick.incentives import grid_scan
from brick.scenarios import (
    DEFAULT_BENCH_STAGGER_US,
    SCENARIOS,
    SUITES,
    bench_broadcast,
    export,
    load_config,
    property_battery,
    run,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def _int_list(raw: str) -> List[int]:
    try:
        return [int(item) for item in raw.split(',') if item.strip()]
    except ValueError as exc:
        raise ConfigError('config-invalid', f"expected comma-separated integers, got {raw!r}") from exc


def _overrides(pairs: Sequence[str]) -> Dict[str, str]:
    values = {}
    for pair in pairs:
        key, sep, value = pair.partition('=')
        if not sep:
            raise ConfigError('config-invalid', f"--set expects KEY=VALUE, got {pair!r}")
        values[key.strip().upper()] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Brick payment channels in a deterministic adversarial simulator')
    parser.add_argument('--log-level', default=os.getenv('BRICK_LOG_LEVEL', 'INFO'),
                        help='Logging level (default: $BRICK_LOG_LEVEL or INFO)')
    commands = parser.add_subparsers(dest='command', required=True)

    run_parser = commands.add_parser('run', help='Run one named scenario')
    run_parser.add_argument('--scenario', choices=SCENARIOS, default=None, help='Scenario preset')
    run_parser.add_argument('--seed', type=int, default=None, help='Run seed')
    run_parser.add_argument('--config', type=Path, default=None, help='KEY=VALUE config file')
    run_parser.add_argument('--out', type=Path, default=None,
                            help='Directory for trace.jsonl, chain.json and report.json')
    run_parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help='Override one config key (repeatable)')

    bench_parser = commands.add_parser('bench', help='Simulated broadcast latency per committee size')
    bench_parser.add_argument('--wardens', default='7,34,151', help='Comma-separated committee sizes')
    bench_parser.add_argument('--rtt', type=float, default=100, help='Round-trip time in ms')
    bench_parser.add_argument('--stagger', type=int, default=DEFAULT_BENCH_STAGGER_US,
                              help='Per-send stagger in microseconds')
    bench_parser.add_argument('--format', choices=['json', 'csv'], default='json')

    battery_parser = commands.add_parser('battery', help='Seeded property battery')
    battery_parser.add_argument('--suite', choices=SUITES, required=True)
    battery_parser.add_argument('--seeds', type=int, default=100)
    battery_parser.add_argument('--first-seed', type=int, default=0)
    battery_parser.add_argument('--workers', type=int, default=1)

    scan_parser = commands.add_parser('scan', help='Brute-force incentive grid scan')
    scan_parser.add_argument('--v', default='12,60,120', help='Channel values')
    scan_parser.add_argument('--f', default='1,2,3,5', help='Byzantine bounds')
    scan_parser.add_argument('--eps', default='1,2', help='Bribe premiums')
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides['SEED'] = str(args.seed)
    config = load_config(args.scenario, args.config, overrides)
    report = run(config)
    print(report.to_json())
    if args.out is not None:
        export(report, args.out)
    if report.exit_code:
        logger.error(f"❌ Safety violated in {config.name} (seed {config.seed})")
    return report.exit_code


def cmd_bench(args: argparse.Namespace) -> int:
    frame = bench_broadcast(_int_list(args.wardens), rtt_ms=args.rtt, stagger_us=args.stagger)
    if args.format == 'csv':
        print(frame.to_csv(index=False), end='')
    else:
        print(json.dumps(json.loads(frame.to_json(orient='records')), indent=2))
    return 0


def cmd_battery(args: argparse.Namespace) -> int:
    if args.seeds < 1 or args.workers < 1:
        raise ConfigError('config-invalid', "--seeds and --workers must be positive")
    summary = property_battery(args.suite, args.seeds, workers=args.workers, first_seed=args.first_seed)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if summary['passed'] else 1


def cmd_scan(args: argparse.Namespace) -> int:
    frame = grid_scan(_int_list(args.v), _int_list(args.f), _int_list(args.eps))
    agree = bool(((frame['best_strategy'] == 2) & (frame['payoff'] == frame['expected'])).all())
    bounded = bool(frame['stale_bound_ok'].all())
    rounded = int((frame['rounding_gap'] != 0).sum())
    print(json.dumps({'points': len(frame), 'strategy_two_everywhere': agree, 'stale_bound_ok': bounded,
                      'points_above_c_a_plus_v': rounded,
                      'grid': json.loads(frame.to_json(orient='records'))}, indent=2))
    return 0 if agree and bounded else 1


COMMANDS = {'run': cmd_run, 'bench': cmd_bench, 'battery': cmd_battery, 'scan': cmd_scan}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except BrickError as exc:
        logger.error(f"❌ {type(exc).__name__}: {exc}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
