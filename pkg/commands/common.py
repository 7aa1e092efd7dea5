import argparse
from typing import Any, Dict, Optional, Tuple

import torch

from models.schemas import RunConfig
from services.preset_service import PresetService
from utils.config_loader import build_run_config, echo_config
from utils.logger import get_logger, setup_logging
from utils.settings import get_settings, resolve_device

logger = get_logger("casa.cli")


def add_common_args(parser: argparse.ArgumentParser):
    """Options shared by every pipeline stage"""
    parser.add_argument("--config", type=str, default=None, help="JSON or YAML run config")
    parser.add_argument("--preset", type=str, default=None, help="Named preset from the presets directory")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="Dotted override, e.g. model.num_slots=7 (repeatable)"
    )
    parser.add_argument("--seed", type=int, default=None, help="Run seed")
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    parser.add_argument("--device", type=str, default=None, help="cpu, cuda or auto (default: CASA_DEVICE)")


def prepare_run(
    args: argparse.Namespace,
    stage: str,
    flags: Optional[Dict[str, Any]] = None
) -> Tuple[RunConfig, torch.device]:
    """
    Build the effective config of a stage, start file logging under its
    output directory and echo the config there.
    """
    preset = PresetService().preset_config(args.preset) if args.preset else None

    all_flags = {"seed": args.seed, "paths.out_dir": args.out}
    all_flags.update(flags or {})
    cfg = build_run_config(stage, preset, args.config, args.overrides, all_flags)

    setup_logging(get_settings().log_level, cfg.log_dir)
    device = resolve_device(args.device)

    logger.info("=" * 60)
    logger.info(f"casa {stage}: out={cfg.paths.out_dir} seed={cfg.seed} device={device}")
    logger.info("=" * 60)

    echo_config(cfg)
    return cfg, device
