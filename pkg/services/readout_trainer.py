"""
Contact-prediction probes on rollout slots.

Obs. probe: sees the burn-in slots only.
Dyn. probe: sees burn-in plus rollout slots.
Both are fit on the readout_fit split and scored on the test split.
"""

import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from models.readout import PairwiseReadout, ReadoutSample
from models.schemas import LossRecord, ReadoutConfig, ReadoutReport, RunConfig
from services.dataset_io import read_meta
from services.rollout import rollout_cache_path
from services.synthgen import AGENT_ID, PATIENT_ID
from utils.errors import DegenerateTaskError, NonFiniteLossError
from utils.logger import get_logger
from utils.seeding import derive_seed, make_generator
from utils.settings import resolve_device
from utils.slot_cache import read_slot_cache
from utils.training import JsonlWriter, warmup_cosine_schedule

logger = get_logger("casa.readout")

_INIT_STREAM = 21
_BATCH_STREAM = 22
_SHUFFLE_STREAM = 23


def contact_label(root: Path, episode_id: str) -> int:
    """1 iff the episode metadata records a collision between the agent and the patient"""
    meta = read_meta(root, episode_id)
    pair = {AGENT_ID, PATIENT_ID}
    return int(any({event.id_a, event.id_b} == pair for event in meta.events))


def load_samples(cfg: RunConfig, split: str) -> List[ReadoutSample]:
    """Readout samples from <slot_dir>/rollout_<split>.slots and the episode labels"""
    cache = read_slot_cache(rollout_cache_path(cfg, split))
    return [
        ReadoutSample(
            slots=cache.slots[i],
            label=contact_label(cfg.data_root, episode_id),
            episode_id=episode_id,
            burnin=cache.burnin,
        )
        for i, episode_id in enumerate(cache.episode_ids)
    ]


def _stack(samples: Sequence[ReadoutSample]) -> Tuple[torch.Tensor, torch.Tensor]:
    slots = np.stack([s.slots for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.float32)
    return torch.from_numpy(slots), torch.from_numpy(labels)


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n > 0 else float("nan")


def fit_probe(
    slots: torch.Tensor,
    labels: torch.Tensor,
    cfg: ReadoutConfig,
    seed: int,
    device: torch.device,
    writer: Optional[JsonlWriter] = None
) -> PairwiseReadout:
    """Train one PairwiseReadout with binary cross-entropy"""
    torch.manual_seed(derive_seed(seed, _INIT_STREAM))
    model = PairwiseReadout(slots.shape[-1], cfg.hidden, cfg.linear).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.optim.lr)
    scheduler = warmup_cosine_schedule(optimizer, cfg.optim.warmup_steps, cfg.optim.steps)
    sampler = make_generator(derive_seed(seed, _BATCH_STREAM))

    slots, labels = slots.to(device), labels.to(device)
    batch_size = min(cfg.optim.batch_size, len(labels))
    model.train()
    for step in range(1, cfg.optim.steps + 1):
        index = torch.randperm(len(labels), generator=sampler)[:batch_size].to(device)
        loss = F.binary_cross_entropy_with_logits(model.logits(slots[index]), labels[index])
        if not math.isfinite(float(loss.detach())):
            raise NonFiniteLossError(f"Readout training diverged at step {step}")

        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.optim.grad_clip)
        optimizer.step()
        scheduler.step()

        if writer is not None and (step % cfg.optim.log_every == 0 or step == 1):
            writer.write(LossRecord(step=step, lr=scheduler.get_last_lr()[0], bce=float(loss), total=float(loss)))

    return model.eval()


@torch.no_grad()
def accuracy(model: PairwiseReadout, slots: torch.Tensor, labels: torch.Tensor, device: torch.device) -> float:
    probabilities = model(slots.to(device)).cpu()
    return float(((probabilities > 0.5).float() == labels).float().mean())


def train_readout(
    train_samples: Sequence[ReadoutSample],
    val_samples: Sequence[ReadoutSample],
    cfg: RunConfig,
    seed: Optional[int] = None,
    obs_frames: Optional[int] = None,
    device: Optional[torch.device] = None,
    log_path: Optional[Path] = None
) -> Tuple[Dict[str, PairwiseReadout], ReadoutReport]:
    """
    Fit the Obs. and Dyn. probes and score them on `val_samples`.

    Args:
        train_samples: readout_fit samples (burn-in + rollout slots)
        val_samples: test samples
        cfg: Run config; cfg.readout holds the probe settings
        seed: Defaults to cfg.seed
        obs_frames: Frames seen by the Obs. probe; defaults to the samples' burn-in
        device: Torch device
        log_path: JSON-lines loss log of the Dyn. probe

    Returns:
        ({"obs": probe, "dyn": probe}, ReadoutReport)

    Raises:
        DegenerateTaskError: empty split or a single label class in training
    """
    if not train_samples or not val_samples:
        raise DegenerateTaskError("readout needs non-empty train and test samples")
    train_labels = {sample.label for sample in train_samples}
    if len(train_labels) < 2:
        raise DegenerateTaskError(f"all training labels are {train_labels.pop()}; the probe has nothing to learn")

    seed = cfg.seed if seed is None else seed
    device = device or resolve_device()
    readout_cfg = cfg.readout
    obs_frames = obs_frames or train_samples[0].burnin
    if obs_frames is None:
        raise DegenerateTaskError("burn-in length unknown; pass obs_frames")

    train_slots, train_y = _stack(train_samples)
    test_slots, test_y = _stack(val_samples)

    if readout_cfg.shuffle_labels:
        shuffle = torch.randperm(len(train_y), generator=make_generator(derive_seed(seed, _SHUFFLE_STREAM)))
        train_y = train_y[shuffle]
        logger.info("Training on shuffled labels")

    logger.info(
        f"Readout: {len(train_y)} fit / {len(test_y)} test episodes, "
        f"positive rate {float(train_y.mean()):.2f}, obs frames {obs_frames}"
    )

    writer = JsonlWriter(log_path) if log_path is not None else None
    obs_probe = fit_probe(train_slots[:, :obs_frames], train_y, readout_cfg, seed, device)
    dyn_probe = fit_probe(train_slots, train_y, readout_cfg, seed, device, writer)

    obs_acc = accuracy(obs_probe, test_slots[:, :obs_frames], test_y, device)
    dyn_acc = accuracy(dyn_probe, test_slots, test_y, device)
    n_test = len(test_y)

    report = ReadoutReport(
        obs_acc=obs_acc,
        dyn_acc=dyn_acc,
        n_test=n_test,
        seed=seed,
        obs_stderr=binomial_stderr(obs_acc, n_test),
        dyn_stderr=binomial_stderr(dyn_acc, n_test),
        shuffled_labels=readout_cfg.shuffle_labels,
        linear=readout_cfg.linear,
        positive_rate=float(test_y.mean()),
    )
    return {"obs": obs_probe, "dyn": dyn_probe}, report


def run_readout(cfg: RunConfig, device: Optional[torch.device] = None) -> ReadoutReport:
    """Readout stage: fit on readout_fit rollouts, score on test rollouts, write the report"""
    logger.info("=" * 60)
    logger.info("Training contact readout")
    logger.info("=" * 60)

    train_samples = load_samples(cfg, "readout_fit")
    test_samples = load_samples(cfg, "test")
    _, report = train_readout(
        train_samples, test_samples, cfg, device=device, log_path=cfg.log_dir / "train_readout.jsonl"
    )

    cfg.report_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.report_dir / "readout.json"
    path.write_text(report.model_dump_json(indent=2))
    logger.info(
        f"✓ Obs. acc {report.obs_acc:.3f} ± {report.obs_stderr:.3f}, "
        f"Dyn. acc {report.dyn_acc:.3f} ± {report.dyn_stderr:.3f} (n={report.n_test}) -> {path}"
    )
    return report
