import math
from pathlib import Path
from typing import Optional, Tuple

import torch
from torch.utils.data import DataLoader

from models.oc_model import ObjectCentricVideoModel
from models.schemas import LossRecord, RunConfig
from services.dataset_io import EpisodeDataset, read_split
from utils.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from utils.errors import NonFiniteLossError
from utils.logger import get_logger
from utils.losses import stage1_loss
from utils.seeding import derive_seed, make_generator, seed_everything
from utils.settings import resolve_device
from utils.training import JsonlWriter, cycle, training_progress, warmup_cosine_schedule

logger = get_logger("casa.trainer_oc")

# derive_seed stream keys
_LOADER_STREAM = 1
_SAMPLING_STREAM = 2


def load_oc_model(path: Path, device: torch.device) -> Tuple[ObjectCentricVideoModel, Checkpoint]:
    """Rebuild the object-centric model saved under the "oc" prefix, in eval mode"""
    checkpoint = load_checkpoint(path)
    model = ObjectCentricVideoModel.from_config(checkpoint.config)
    model.load_state_dict(checkpoint.module_state("oc"))
    model.to(device).eval()
    return model, checkpoint


class OCTrainer:
    """Stage-1 training of the object-centric video model"""

    def __init__(self, cfg: RunConfig, device: Optional[torch.device] = None):
        self.cfg = cfg
        self.device = device or resolve_device()

    def _build_loader(self) -> DataLoader:
        episodes = read_split(self.cfg.data_root, "train")
        dataset = EpisodeDataset(episodes, self.cfg.data.clip_length)
        logger.info(f"Training clips: {len(dataset)} (length {self.cfg.data.clip_length})")
        return DataLoader(
            dataset,
            batch_size=self.cfg.optim.batch_size,
            shuffle=True,
            drop_last=False,
            num_workers=self.cfg.optim.num_workers,
            generator=make_generator(derive_seed(self.cfg.seed, _LOADER_STREAM)),
        )

    def train(self) -> Path:
        """
        Optimize image + OPC + KL on random training clips.

        Returns:
            Path of the final checkpoint

        Raises:
            NonFiniteLossError: the loss became NaN or infinite; checkpoints
                written before that step are left as they are
        """
        cfg = self.cfg
        seed_everything(cfg.seed)

        logger.info("=" * 60)
        logger.info("Training object-centric model")
        logger.info(
            f"prior={cfg.model.prior_kind} use_opc={cfg.loss.use_opc} "
            f"K={cfg.model.num_slots} D_slot={cfg.model.slot_dim} device={self.device}"
        )
        logger.info("=" * 60)

        loader = self._build_loader()
        model = ObjectCentricVideoModel.from_config(cfg).to(self.device)
        model.train()

        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.optim.lr)
        scheduler = warmup_cosine_schedule(optimizer, cfg.optim.warmup_steps, cfg.optim.steps)
        sampling = make_generator(derive_seed(cfg.seed, _SAMPLING_STREAM), self.device)
        writer = JsonlWriter(cfg.log_dir / "train_oc.jsonl")
        batches = cycle(loader)

        with training_progress() as progress:
            task = progress.add_task("train-oc", total=cfg.optim.steps, loss="")
            for step in range(1, cfg.optim.steps + 1):
                frames = next(batches)["frames"].to(self.device)

                output = model(frames, generator=sampling, stochastic=cfg.loss.stochastic)
                losses = stage1_loss(
                    output.recon, frames, output.attention, output.means, output.log_vars, cfg.loss
                )

                if not math.isfinite(float(losses.total.detach())):
                    logger.error(f"Non-finite loss at step {step}: {losses.as_dict()}")
                    raise NonFiniteLossError(f"Object-centric training diverged at step {step}")

                optimizer.zero_grad(set_to_none=True)
                losses.total.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.optim.grad_clip)
                optimizer.step()
                scheduler.step()

                writer.write(LossRecord(step=step, lr=scheduler.get_last_lr()[0], **losses.as_dict()))
                if step % cfg.optim.log_every == 0 or step == 1:
                    logger.debug(f"step {step}: {losses.as_dict()}")

                if step % cfg.optim.checkpoint_every == 0 and step < cfg.optim.steps:
                    save_checkpoint(cfg.oc_checkpoint, {"oc": model}, cfg, step=step)

                progress.update(task, advance=1, loss=f"loss={float(losses.total.detach()):.4f}")

        path = save_checkpoint(cfg.oc_checkpoint, {"oc": model}, cfg, step=cfg.optim.steps)
        logger.info(f"✓ Object-centric model saved to {path}")
        return path


def train_oc(cfg: RunConfig, device: Optional[torch.device] = None) -> Path:
    return OCTrainer(cfg, device).train()
