import argparse

from commands.common import add_common_args, prepare_run
from services.dataset_io import write_dataset
from services.synthgen import generate_dataset
from utils.logger import get_logger

logger = get_logger("casa.cli.data")


def generate_data(args: argparse.Namespace) -> int:
    """Generate the synthetic bouncing-shapes dataset"""
    cfg, _ = prepare_run(args, "data")
    episodes = generate_dataset(cfg.data, cfg.seed)
    write_dataset(
        episodes,
        cfg.data_root,
        split_ratio=cfg.data.split_ratio,
        force=args.force,
        seed=cfg.seed,
        gen_config=cfg.data.gen,
    )
    return 0


def register(subparsers):
    parser = subparsers.add_parser("generate-data", help="Generate the synthetic dataset")
    add_common_args(parser)
    parser.add_argument("--force", action="store_true", help="Overwrite an existing dataset")
    parser.set_defaults(handler=generate_data)
