import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import torch
from rich.table import Table

from models.schemas import AblationRow, RunConfig
from services.dataset_io import read_manifest
from services.evaluator import evaluate
from services.trainer_oc import train_oc
from utils.config_loader import deep_merge
from utils.logger import console, get_logger

logger = get_logger("casa.ablation")

# Column order of the comparison table; LPIPS is reported as unavailable
TABLE_COLUMNS = ("psnr", "ssim", "lpips", "ar", "ari", "fg_ari", "fg_miou", "tci")


@dataclass(frozen=True)
class AblationCell:
    name: str
    slug: str
    prior: str
    aux_loss: bool


ABLATION_CELLS = (
    AblationCell("CA-SA (GRU prior + OPC loss)", "casa", "gru", True),
    AblationCell("w/o prior", "no_prior", "none", True),
    AblationCell("w/o aux. loss", "no_aux_loss", "gru", False),
    AblationCell("StoSAVi (MLP prior)", "stosavi", "mlp", False),
)

CONTROL_CELL = AblationCell("Vanilla video SA", "vanilla", "none", False)


def cell_config(base_cfg: RunConfig, cell: AblationCell) -> RunConfig:
    """Base config with the cell's prior and loss switches and its own output directory"""
    update = {
        "stage": "ablation",
        "model": {"prior_kind": cell.prior},
        "loss": {"use_opc": cell.aux_loss},
        "data": {"root": str(base_cfg.data_root)},
        "paths": {
            "out_dir": str(base_cfg.paths.out_dir / "ablation" / cell.slug),
            "oc_checkpoint": None,
            "dyn_checkpoint": None,
            "slot_dir": None,
        },
    }
    return RunConfig.model_validate(deep_merge(base_cfg.model_dump(mode="json"), update))


def ablation_table(rows: List[AblationRow]) -> Table:
    table = Table(title="Video object discovery ablation")
    table.add_column("Model", style="bold")
    table.add_column("Prior")
    table.add_column("OPC")
    for column in TABLE_COLUMNS:
        table.add_column(column.upper().replace("_", "-"), justify="right")

    for row in rows:
        metrics = row.metrics.model_dump()
        cells = []
        for column in TABLE_COLUMNS:
            value = metrics.get(column)
            cells.append("n/a" if value is None else f"{value:.4f}")
        table.add_row(row.name, row.prior, "yes" if row.aux_loss else "no", *cells)
    return table


def write_ablation(rows: List[AblationRow], report_dir: Path):
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / "ablation.json").write_text(
        "[\n" + ",\n".join(row.model_dump_json(indent=2) for row in rows) + "\n]\n"
    )
    with open(report_dir / "ablation.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["name", "prior", "aux_loss", *TABLE_COLUMNS])
        for row in rows:
            metrics = row.metrics.model_dump()
            writer.writerow([row.name, row.prior, row.aux_loss, *[metrics.get(c) for c in TABLE_COLUMNS]])


def ablation_grid(
    base_cfg: RunConfig,
    include_control: bool = False,
    device: Optional[torch.device] = None
) -> List[AblationRow]:
    """
    Train and evaluate every ablation cell with the same seed and dataset.

    Args:
        base_cfg: Shared configuration; each cell overrides prior_kind and use_opc
        include_control: Also run the vanilla control (no prior, no OPC)
        device: Torch device

    Returns:
        One AblationRow per cell, in table order
    """
    read_manifest(base_cfg.data_root)

    cells = list(ABLATION_CELLS) + ([CONTROL_CELL] if include_control else [])
    rows = []
    for index, cell in enumerate(cells, start=1):
        logger.info("=" * 60)
        logger.info(f"Ablation cell {index}/{len(cells)}: {cell.name}")
        logger.info("=" * 60)

        cfg = cell_config(base_cfg, cell)
        try:
            train_oc(cfg, device)
            report = evaluate(cfg, split="test", use_dynamics=False, device=device)
        except Exception as e:
            logger.error(f"Ablation cell '{cell.name}' failed: {e}")
            raise

        rows.append(AblationRow(name=cell.name, prior=cell.prior, aux_loss=cell.aux_loss, metrics=report.discovery))

    write_ablation(rows, base_cfg.report_dir)
    console.print(ablation_table(rows))
    logger.info(f"✓ Ablation written to {base_cfg.report_dir}")
    return rows
