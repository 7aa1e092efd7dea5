import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset

from models.backbone import SpatialBroadcastDecoder
from models.dynamics import SlotDynamics, dynamics_loss
from models.schemas import LossRecord, RunConfig
from services.dataset_io import read_split
from services.slot_extractor import slot_cache_path
from utils.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from utils.errors import NonFiniteLossError, ShapeMismatchError
from utils.logger import get_logger
from utils.seeding import derive_seed, make_generator, seed_everything
from utils.settings import resolve_device
from utils.slot_cache import SlotCache, read_slot_cache
from utils.training import JsonlWriter, cycle, training_progress, warmup_cosine_schedule

logger = get_logger("casa.trainer_dyn")

_LOADER_STREAM = 11


class TrajectoryWindows(Dataset):
    """Every window of `length` consecutive steps of every cached trajectory"""

    def __init__(self, slots: np.ndarray, length: int, frames: Optional[List[np.ndarray]] = None):
        self.slots = slots
        self.frames = frames
        self.length = length
        num_episodes, num_steps = slots.shape[:2]
        self.index: List[Tuple[int, int]] = [
            (e, start) for e in range(num_episodes) for start in range(num_steps - length + 1)
        ]

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, item: int) -> Dict[str, torch.Tensor]:
        episode, start = self.index[item]
        stop = start + self.length
        sample = {"slots": torch.from_numpy(self.slots[episode, start:stop].copy())}
        if self.frames is not None:
            sample["frames"] = torch.from_numpy(self.frames[episode][start:stop].copy())
        return sample


def load_frozen_decoder(checkpoint: Checkpoint, device: torch.device) -> SpatialBroadcastDecoder:
    """The object-centric decoder with gradients disabled on every parameter"""
    run_cfg = checkpoint.config
    decoder = SpatialBroadcastDecoder(run_cfg.model, run_cfg.data.gen.height, run_cfg.data.gen.width)
    decoder.load_state_dict(checkpoint.module_state("oc.decoder"))
    decoder.requires_grad_(False)
    return decoder.to(device).eval()


def load_dynamics(path: Path, device: torch.device) -> Tuple[SlotDynamics, Checkpoint]:
    checkpoint = load_checkpoint(path)
    model = SlotDynamics(checkpoint.config.dynamics, int(checkpoint.extra["slot_dim"]))
    model.load_state_dict(checkpoint.module_state("dynamics"))
    model.to(device).eval()
    return model, checkpoint


def check_cache_dims(cache: SlotCache, oc_checkpoint: Checkpoint):
    model_cfg = oc_checkpoint.config.model
    if (cache.num_slots, cache.slot_dim) != (model_cfg.num_slots, model_cfg.slot_dim):
        raise ShapeMismatchError(
            f"Slot cache has K={cache.num_slots}, D_slot={cache.slot_dim} but the object-centric "
            f"checkpoint has K={model_cfg.num_slots}, D_slot={model_cfg.slot_dim}"
        )


class DynTrainer:
    """Stage-2 training of the slot transformer on cached slots"""

    def __init__(self, cfg: RunConfig, device: Optional[torch.device] = None):
        self.cfg = cfg
        self.device = device or resolve_device()

    def _rollout_length(self, cache: SlotCache) -> int:
        burnin = self.cfg.dynamics.burnin
        if cache.num_frames <= burnin:
            raise ShapeMismatchError(
                f"Trajectories have {cache.num_frames} steps, need more than burnin={burnin}"
            )
        rollout = min(self.cfg.dynamics.rollout, cache.num_frames - burnin)
        if rollout < self.cfg.dynamics.rollout:
            logger.warning(f"Trajectories too short for rollout={self.cfg.dynamics.rollout}, training with {rollout}")
        return rollout

    def _frames_for(self, cache: SlotCache) -> List[np.ndarray]:
        by_id = {episode.episode_id: episode for episode in read_split(self.cfg.data_root, "train")}
        missing = [episode_id for episode_id in cache.episode_ids if episode_id not in by_id]
        if missing:
            raise ShapeMismatchError(f"Slot cache lists episodes absent from the train split: {missing[:5]}")
        return [by_id[episode_id].frames for episode_id in cache.episode_ids]

    def train(self) -> Path:
        """
        Optimize dynamics_loss on rollouts from ground-truth burn-in slots.

        The object-centric checkpoint is only read; its decoder renders the
        predicted slots for the frame term and stays frozen.

        Returns:
            Path of the dynamics checkpoint
        """
        cfg = self.cfg
        dyn_cfg = cfg.dynamics
        seed_everything(cfg.seed)

        oc_checkpoint = load_checkpoint(cfg.oc_checkpoint)
        cache = read_slot_cache(slot_cache_path(cfg, "train"))
        check_cache_dims(cache, oc_checkpoint)
        rollout = self._rollout_length(cache)

        logger.info("=" * 60)
        logger.info("Training slot dynamics")
        logger.info(
            f"burnin={dyn_cfg.burnin} rollout={rollout} layers={dyn_cfg.num_layers} "
            f"heads={dyn_cfg.num_heads} d_model={dyn_cfg.d_model} device={self.device}"
        )
        logger.info("=" * 60)

        frames = self._frames_for(cache) if dyn_cfg.use_frame_loss else None
        decoder = load_frozen_decoder(oc_checkpoint, self.device) if dyn_cfg.use_frame_loss else None

        dataset = TrajectoryWindows(cache.slots, dyn_cfg.burnin + rollout, frames)
        loader = DataLoader(
            dataset,
            batch_size=dyn_cfg.optim.batch_size,
            shuffle=True,
            num_workers=dyn_cfg.optim.num_workers,
            generator=make_generator(derive_seed(cfg.seed, _LOADER_STREAM)),
        )

        model = SlotDynamics(dyn_cfg, cache.slot_dim).to(self.device)
        model.train()
        optimizer = torch.optim.Adam(model.parameters(), lr=dyn_cfg.optim.lr)
        scheduler = warmup_cosine_schedule(optimizer, dyn_cfg.optim.warmup_steps, dyn_cfg.optim.steps)
        writer = JsonlWriter(cfg.log_dir / "train_dyn.jsonl")
        batches = cycle(loader)
        extra = {"slot_dim": cache.slot_dim, "num_slots": cache.num_slots, "rollout": rollout}

        with training_progress() as progress:
            task = progress.add_task("train-dyn", total=dyn_cfg.optim.steps, loss="")
            for step in range(1, dyn_cfg.optim.steps + 1):
                batch = next(batches)
                slots = batch["slots"].to(self.device)
                burnin_slots = slots[:, :dyn_cfg.burnin]
                target_slots = slots[:, dyn_cfg.burnin:]

                pred_slots = model.rollout(burnin_slots, rollout)

                pred_frames = target_frames = None
                if decoder is not None:
                    target_frames = batch["frames"][:, dyn_cfg.burnin:].to(self.device)
                    decoded = decoder(pred_slots.flatten(0, 1))
                    pred_frames = decoded.rgb.reshape(target_frames.shape)

                loss = dynamics_loss(pred_slots, target_slots, pred_frames, target_frames)
                if not math.isfinite(float(loss.detach())):
                    logger.error(f"Non-finite dynamics loss at step {step}")
                    raise NonFiniteLossError(f"Dynamics training diverged at step {step}")

                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), dyn_cfg.optim.grad_clip)
                optimizer.step()
                scheduler.step()

                if step % dyn_cfg.optim.log_every == 0 or step == 1:
                    slot_term = float(F.mse_loss(pred_slots.detach(), target_slots))
                    writer.write(LossRecord(
                        step=step,
                        lr=scheduler.get_last_lr()[0],
                        slots=slot_term,
                        frames=float(loss.detach()) - slot_term if decoder is not None else 0.0,
                        total=float(loss.detach()),
                    ))

                if step % dyn_cfg.optim.checkpoint_every == 0 and step < dyn_cfg.optim.steps:
                    save_checkpoint(cfg.dyn_checkpoint, {"dynamics": model}, cfg, step=step, extra=extra)

                progress.update(task, advance=1, loss=f"loss={float(loss.detach()):.4f}")

        path = save_checkpoint(cfg.dyn_checkpoint, {"dynamics": model}, cfg, step=dyn_cfg.optim.steps, extra=extra)
        logger.info(f"✓ Dynamics model saved to {path}")
        return path


def train_dyn(cfg: RunConfig, device: Optional[torch.device] = None) -> Path:
    return DynTrainer(cfg, device).train()
