from pathlib import Path
from typing import Optional

import numpy as np
import torch

from models.oc_model import ObjectCentricVideoModel, OCOutput
from models.schemas import RunConfig
from services.dataset_io import read_split
from services.synthgen import VideoEpisode
from services.trainer_oc import load_oc_model
from utils.logger import get_logger
from utils.seeding import derive_seed, make_generator
from utils.settings import resolve_device
from utils.slot_cache import write_slot_cache

logger = get_logger("casa.slot_extractor")

_EVAL_STREAM = 3


def eval_generator(seed: int, episode_index: int, device: torch.device) -> torch.Generator:
    """Generator for the first-frame slot sample of one episode in deterministic mode"""
    return make_generator(derive_seed(seed, _EVAL_STREAM, episode_index), device)


@torch.no_grad()
def infer_episode(
    model: ObjectCentricVideoModel,
    episode: VideoEpisode,
    seed: int,
    episode_index: int,
    device: torch.device,
    decode: bool = False
) -> OCOutput:
    """Run the model over a whole episode using the prior mean at t >= 2"""
    video = torch.from_numpy(episode.frames).unsqueeze(0).to(device)
    generator = eval_generator(seed, episode_index, device)
    return model(video, generator=generator, stochastic=False, decode=decode)


def slot_cache_path(cfg: RunConfig, split: str) -> Path:
    return cfg.slot_dir / f"{split}.slots"


def extract_slots(cfg: RunConfig, split: str, device: Optional[torch.device] = None) -> Path:
    """
    Extract per-frame slots of every episode in `split` with the trained model.

    Returns:
        Path of <slot_dir>/<split>.slots

    Raises:
        MissingArtifactError: checkpoint or split missing
    """
    device = device or resolve_device()
    logger.info(f"Extracting slots for split '{split}'")

    model, checkpoint = load_oc_model(cfg.oc_checkpoint, device)
    episodes = read_split(cfg.data_root, split)

    slots = []
    for index, episode in enumerate(episodes):
        output = infer_episode(model, episode, cfg.seed, index, device)
        slots.append(output.slots[0].cpu().numpy())

    path = write_slot_cache(
        slot_cache_path(cfg, split),
        [episode.episode_id for episode in episodes],
        np.stack(slots),
        extra={
            "split": split,
            "seed": cfg.seed,
            "oc_checkpoint": str(cfg.oc_checkpoint),
            "oc_step": checkpoint.step,
        },
    )
    logger.info(f"✓ Extracted {len(episodes)} episodes of '{split}'")
    return path
