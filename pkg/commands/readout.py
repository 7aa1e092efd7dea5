import argparse

from commands.common import add_common_args, prepare_run
from services.readout_trainer import run_readout
from utils.logger import get_logger

logger = get_logger("casa.cli.readout")


def train_readout_command(args: argparse.Namespace) -> int:
    flags = {}
    if args.linear:
        flags["readout.linear"] = True
    if args.shuffle_labels:
        flags["readout.shuffle_labels"] = True
    cfg, device = prepare_run(args, "readout", flags)
    run_readout(cfg, device)
    return 0


def register(subparsers):
    parser = subparsers.add_parser("train-readout", help="Fit the Obs./Dyn. contact probes")
    add_common_args(parser)
    parser.add_argument("--linear", action="store_true", help="Single linear layer per slot pair")
    parser.add_argument("--shuffle-labels", action="store_true", help="Permutation baseline")
    parser.set_defaults(handler=train_readout_command)
