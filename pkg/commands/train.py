import argparse

from commands.common import add_common_args, prepare_run
from services.rollout import rollout_split
from services.slot_extractor import extract_slots
from services.trainer_dyn import train_dyn
from services.trainer_oc import train_oc
from utils.logger import get_logger

logger = get_logger("casa.cli.train")

SPLIT_CHOICES = ("train", "readout_fit", "test")


def train_oc_command(args: argparse.Namespace) -> int:
    """Stage 1: object-centric model"""
    flags = {"model.prior_kind": args.prior}
    if args.no_opc:
        flags["loss.use_opc"] = False
    cfg, device = prepare_run(args, "oc", flags)
    train_oc(cfg, device)
    return 0


def extract_slots_command(args: argparse.Namespace) -> int:
    cfg, device = prepare_run(args, "extract")
    for split in args.split or SPLIT_CHOICES:
        extract_slots(cfg, split, device)
    return 0


def train_dyn_command(args: argparse.Namespace) -> int:
    """Stage 2: slot dynamics"""
    cfg, device = prepare_run(args, "dyn")
    train_dyn(cfg, device)
    return 0


def rollout_command(args: argparse.Namespace) -> int:
    cfg, device = prepare_run(args, "rollout")
    for split in args.split or ("readout_fit", "test"):
        rollout_split(cfg, split, device)
    return 0


def register(subparsers):
    parser = subparsers.add_parser("train-oc", help="Train the object-centric video model")
    add_common_args(parser)
    parser.add_argument("--prior", choices=["gru", "mlp", "none"], default=None, help="Slot prior kind")
    parser.add_argument("--no-opc", action="store_true", help="Disable the attention consistency loss")
    parser.set_defaults(handler=train_oc_command)

    parser = subparsers.add_parser("extract-slots", help="Cache slots of every episode in a split")
    add_common_args(parser)
    parser.add_argument("--split", action="append", choices=SPLIT_CHOICES, help="Split(s); default all")
    parser.set_defaults(handler=extract_slots_command)

    parser = subparsers.add_parser("train-dyn", help="Train the slot dynamics transformer")
    add_common_args(parser)
    parser.set_defaults(handler=train_dyn_command)

    parser = subparsers.add_parser("rollout", help="Write burn-in + predicted slot caches")
    add_common_args(parser)
    parser.add_argument("--split", action="append", choices=SPLIT_CHOICES,
                        help="Split(s); default readout_fit and test")
    parser.set_defaults(handler=rollout_command)
