"""
Command-line entry point.

    python -m proptail <command> --config <path> [--out <dir>] [--seed <int>] [-v]

Exit statuses: 0 pass, 1 internal error, 2 config error, 3 degenerate
estimation, 4 precondition violation, 5 validation thresholds not met.
"""
from typing import List, Optional
import argparse
import logging
import sys
from proptail.commands import HANDLERS
from proptail.config import build_cli_config, get_settings
from proptail.models.enums import Command
from proptail.utils.errors import ExitStatus, ProptailError

# Import event handlers to register them with the event bus
from proptail.events.handlers import progress  # noqa: F401

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='proptail',
        description='Extreme quantile regression under the proportional tail model',
    )
    parser.add_argument('command', choices=[c.value for c in Command])
    parser.add_argument('--config', required=True, help='flat key = value configuration file')
    parser.add_argument('--out', default=None, help='output directory (default: PROPTAIL_OUTPUT_DIR)')
    parser.add_argument('--seed', type=int, default=None, help='root seed, overrides the config')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='debug logging')
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.DEBUG if verbosity > 0 else getattr(logging, get_settings().log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        cfg = build_cli_config(args.command, args.config, args.out, args.seed, args.verbose)
        return HANDLERS[cfg.command](cfg)
    except ProptailError as e:
        logger.error(f'{args.command} failed: {e.detail}')
        print(f'error: {e.detail}', file=sys.stderr)
        return e.exit_status
    except Exception as e:
        logger.error(f'Unexpected error in {args.command}: {e}', exc_info=True)
        print(f'internal error: {e}', file=sys.stderr)
        return ExitStatus.INTERNAL
