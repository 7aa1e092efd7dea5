import argparse

from rich.table import Table

from services.preset_service import PresetService
from utils.logger import console, get_logger

logger = get_logger("casa.cli.presets")


def list_presets(args: argparse.Namespace) -> int:
    """Print the available run presets"""
    presets = PresetService().get_all_presets()
    if not presets:
        logger.warning("No presets found")
        return 0

    table = Table(title="Run presets")
    table.add_column("ID", style="bold")
    table.add_column("Name")
    table.add_column("Description")
    for preset in presets:
        table.add_row(preset.get("id", "?"), preset.get("name", ""), preset.get("description", ""))
    console.print(table)
    return 0


def register(subparsers):
    parser = subparsers.add_parser("presets", help="List named run presets")
    parser.set_defaults(handler=list_presets)
