"""Shared training-loop helpers: LR schedule, JSON-lines log, progress bar"""

import math
from pathlib import Path
from typing import Iterator

from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeRemainingColumn
from torch.optim import Optimizer
from torch.optim.lr_scheduler import LambdaLR
from torch.utils.data import DataLoader

from models.schemas import LossRecord
from utils.logger import console


def warmup_cosine_schedule(optimizer: Optimizer, warmup_steps: int, total_steps: int) -> LambdaLR:
    """Linear warmup to the base LR, then cosine decay to zero"""

    def factor(step: int) -> float:
        if warmup_steps > 0 and step < warmup_steps:
            return (step + 1) / warmup_steps
        progress = (step - warmup_steps) / max(total_steps - warmup_steps, 1)
        return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))

    return LambdaLR(optimizer, factor)


def cycle(loader: DataLoader) -> Iterator:
    """Iterate a loader forever, reshuffling every pass"""
    while True:
        for batch in loader:
            yield batch


class JsonlWriter:
    """Appends LossRecords to a JSON-lines file (truncated on open)"""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def write(self, record: LossRecord):
        with open(self.path, "a") as handle:
            handle.write(record.model_dump_json() + "\n")


def training_progress() -> Progress:
    return Progress(
        TextColumn("[bold blue]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TextColumn("{task.fields[loss]}"),
        TimeRemainingColumn(),
        console=console,
        transient=True,
    )
