import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import torch
import torch.nn as nn

from models.schemas import RunConfig
from utils.errors import MissingArtifactError
from utils.logger import get_logger

logger = get_logger("casa.checkpoint")


@dataclass
class Checkpoint:
    """Flat parameter map keyed by module path plus the RunConfig that produced it"""
    state: Dict[str, torch.Tensor]
    config: RunConfig
    step: Optional[int] = None
    extra: Dict = field(default_factory=dict)

    def module_state(self, prefix: str) -> Dict[str, torch.Tensor]:
        """State dict of the sub-module saved under `prefix`"""
        head = prefix + "."
        picked = {key[len(head):]: value for key, value in self.state.items() if key.startswith(head)}
        if not picked:
            raise MissingArtifactError(f"Checkpoint has no parameters under '{prefix}'")
        return picked


def save_checkpoint(
    path: Path,
    modules: Dict[str, nn.Module],
    config: RunConfig,
    step: Optional[int] = None,
    extra: Optional[Dict] = None
) -> Path:
    """
    Write a single archive with every parameter tensor and the run config.

    The file is written to a temporary name and moved into place, so an
    interrupted save never clobbers the previous checkpoint.

    Args:
        path: Destination file
        modules: Top-level name -> module; keys become "<name>.<param path>"
        config: RunConfig that produced the parameters
        step: Training step
        extra: Additional JSON-serializable metadata

    Returns:
        The checkpoint path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    state = {}
    for name, module in modules.items():
        for key, tensor in module.state_dict().items():
            state[f"{name}.{key}"] = tensor.detach().cpu()

    archive = {
        "state": state,
        "config": config.model_dump(mode="json"),
        "step": step,
        "extra": extra or {},
    }

    tmp_path = path.with_name(path.name + ".tmp")
    torch.save(archive, tmp_path)
    os.replace(tmp_path, path)
    logger.debug(f"Saved checkpoint {path} (step={step})")
    return path


def load_checkpoint(path: Path, map_location: str = "cpu") -> Checkpoint:
    """Load an archive written by save_checkpoint"""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Checkpoint not found: {path}")

    archive = torch.load(path, map_location=map_location, weights_only=True)
    return Checkpoint(
        state=archive["state"],
        config=RunConfig.model_validate(archive["config"]),
        step=archive.get("step"),
        extra=archive.get("extra") or {},
    )
