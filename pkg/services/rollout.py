from pathlib import Path
from typing import Optional

import numpy as np
import torch

from models.schemas import RunConfig
from services.slot_extractor import slot_cache_path
from services.trainer_dyn import load_dynamics
from utils.errors import ShapeMismatchError
from utils.logger import get_logger
from utils.settings import resolve_device
from utils.slot_cache import read_slot_cache, write_slot_cache

logger = get_logger("casa.rollout")


def rollout_cache_path(cfg: RunConfig, split: str) -> Path:
    return cfg.slot_dir / f"rollout_{split}.slots"


@torch.no_grad()
def rollout_split(cfg: RunConfig, split: str, device: Optional[torch.device] = None) -> Path:
    """
    Burn-in slots followed by predicted slots for every episode of `split`.

    The output cache holds (burnin + L) steps per episode with the burn-in
    length recorded in its header.

    Returns:
        Path of <slot_dir>/rollout_<split>.slots
    """
    device = device or resolve_device()
    model, checkpoint = load_dynamics(cfg.dyn_checkpoint, device)
    burnin = checkpoint.config.dynamics.burnin
    steps = cfg.dynamics.rollout

    cache = read_slot_cache(slot_cache_path(cfg, split))
    if cache.slot_dim != model.slot_dim:
        raise ShapeMismatchError(f"Slot cache has D_slot={cache.slot_dim}, dynamics expects {model.slot_dim}")
    if cache.num_frames < burnin:
        raise ShapeMismatchError(f"Trajectories have {cache.num_frames} steps, fewer than burnin={burnin}")

    logger.info(f"Rolling out {len(cache)} episodes of '{split}': burnin={burnin}, steps={steps}")

    batch_size = cfg.dynamics.optim.batch_size
    chunks = []
    for start in range(0, len(cache), batch_size):
        observed = torch.from_numpy(cache.slots[start:start + batch_size, :burnin]).to(device)
        predicted = model.rollout(observed, steps)
        chunks.append(torch.cat([observed, predicted], dim=1).cpu().numpy())

    trajectories = np.concatenate(chunks) if chunks else np.zeros(
        (0, burnin + steps, cache.num_slots, cache.slot_dim), dtype=np.float32
    )
    path = write_slot_cache(
        rollout_cache_path(cfg, split),
        cache.episode_ids,
        trajectories,
        burnin=burnin,
        extra={"split": split, "rollout_steps": steps, "dyn_checkpoint": str(cfg.dyn_checkpoint)},
    )
    logger.info(f"✓ Rollouts written to {path}")
    return path
