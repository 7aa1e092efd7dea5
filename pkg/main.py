import argparse
import sys
from typing import List, Optional

from commands import register_all
from utils.errors import CasaError
from utils.logger import setup_logging
from utils.settings import get_settings

logger = setup_logging(get_settings().log_level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casa",
        description="Object-centric video learning with a conditional slot prior and attention consistency"
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    register_all(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        status = args.handler(args)
    except CasaError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130

    if status == 0:
        logger.info(f"✓ casa {args.command} finished")
    return status


if __name__ == "__main__":
    sys.exit(main())
