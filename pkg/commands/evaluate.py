import argparse

from commands.common import add_common_args, prepare_run
from services.ablation import ablation_grid
from services.evaluator import evaluate
from utils.logger import get_logger

logger = get_logger("casa.cli.evaluate")


def evaluate_command(args: argparse.Namespace) -> int:
    cfg, device = prepare_run(args, "evaluate")
    evaluate(cfg, split=args.split, use_dynamics=not args.no_dynamics, device=device)
    return 0


def ablation_command(args: argparse.Namespace) -> int:
    cfg, device = prepare_run(args, "ablation")
    ablation_grid(cfg, include_control=args.with_control, device=device)
    return 0


def register(subparsers):
    parser = subparsers.add_parser("evaluate", help="Score discovery and rollouts on a split")
    add_common_args(parser)
    parser.add_argument("--split", default="test", choices=["train", "readout_fit", "test"])
    parser.add_argument("--no-dynamics", action="store_true", help="Discovery metrics only")
    parser.set_defaults(handler=evaluate_command)

    parser = subparsers.add_parser("ablation-grid", help="Train and score the ablation cells")
    add_common_args(parser)
    parser.add_argument("--with-control", action="store_true", help="Add the vanilla (no prior, no OPC) control")
    parser.set_defaults(handler=ablation_command)
