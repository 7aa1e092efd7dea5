"""
Evaluation on a held-out split.

discovery: decode the model's own slots on every frame
rollout:   decode dynamics predictions on the frames after burn-in
"""

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import torch

from models.backbone import masks_from_alpha
from models.dynamics import persistence_baseline
from models.schemas import EvalReport, MetricRow, RunConfig
from services.dataset_io import read_split
from services.slot_extractor import infer_episode
from services.trainer_dyn import load_dynamics
from services.trainer_oc import load_oc_model
from utils.logger import get_logger
from utils.metrics import image_scores, segmentation_scores, temporal_consistency_index
from utils.settings import resolve_device
from utils.visualize import save_gif, save_strip

logger = get_logger("casa.evaluator")

PER_STEP_METRICS = ("psnr", "ssim", "fg_ari")


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    kept = [v for v in values if v is not None and not math.isnan(v)]
    if not kept:
        return None
    return float(np.mean(kept))


def _summarize(frames_pred, frames_true, labels_pred, labels_true, iou_threshold) -> Dict[str, Optional[float]]:
    """Episode-level means of every per-frame metric, plus TCI"""
    summary: Dict[str, Optional[float]] = {}
    per_frame = image_scores(frames_pred, frames_true)
    if labels_true is not None:
        per_frame.update(segmentation_scores(labels_pred, labels_true, iou_threshold))
        summary["tci"] = temporal_consistency_index(labels_pred, labels_true) if len(labels_true) >= 2 else None
    for name, values in per_frame.items():
        summary[name] = _mean(values)
    summary["_per_frame"] = per_frame
    return summary


def _metric_row(summaries: List[Dict]) -> MetricRow:
    return MetricRow(**{
        name: _mean(s.get(name) for s in summaries)
        for name in MetricRow.model_fields
    })


class Evaluator:
    def __init__(self, cfg: RunConfig, device: Optional[torch.device] = None):
        self.cfg = cfg
        self.device = device or resolve_device()

    @torch.no_grad()
    def evaluate(self, split: str = "test", use_dynamics: bool = True) -> EvalReport:
        """
        Compute discovery (and, with a dynamics checkpoint, rollout) metrics.

        Args:
            split: Dataset split to score
            use_dynamics: Also score dynamics rollouts

        Returns:
            EvalReport, also written to <out>/reports/eval_<split>.json
        """
        cfg = self.cfg
        logger.info("=" * 60)
        logger.info(f"Evaluating split '{split}'")
        logger.info("=" * 60)

        model, _ = load_oc_model(cfg.oc_checkpoint, self.device)
        episodes = read_split(cfg.data_root, split)

        dynamics, burnin = None, None
        if use_dynamics:
            dynamics, dyn_checkpoint = load_dynamics(cfg.dyn_checkpoint, self.device)
            burnin = dyn_checkpoint.config.dynamics.burnin

        warnings: List[str] = []
        without_masks = sum(episode.masks is None for episode in episodes)
        if without_masks:
            message = f"ground-truth masks missing for {without_masks} episode(s); mask metrics disabled there"
            logger.warning(message)
            warnings.append(message)

        discovery, rollout, rows = [], [], []
        per_step: Dict[str, List[List[float]]] = defaultdict(list)
        slot_errors, persistence_errors = [], []
        rollout_steps = None
        visual_dir = cfg.report_dir / "visuals"

        for index, episode in enumerate(episodes):
            output = infer_episode(model, episode, cfg.seed, index, self.device, decode=True)
            recon = output.recon[0].cpu().numpy()
            pred_labels = (masks_from_alpha(output.alpha[0]) + 1).cpu().numpy()

            summary = _summarize(recon, episode.frames, pred_labels, episode.masks, cfg.iou_threshold)
            discovery.append(summary)
            row = {"episode_id": episode.episode_id}
            row.update({f"discovery_{k}": v for k, v in summary.items() if not k.startswith("_")})

            if index < cfg.num_visualize:
                save_strip(visual_dir / f"ep_{episode.episode_id}_discovery.png",
                           episode.frames, recon, pred_labels, episode.masks)
                save_gif(visual_dir / f"ep_{episode.episode_id}_discovery.gif",
                         [episode.frames, recon, pred_labels])

            if dynamics is not None and episode.num_frames > burnin:
                rollout_steps = episode.num_frames - burnin
                observed = output.slots[0, :burnin]
                target = output.slots[0, burnin:]
                predicted = dynamics.rollout(observed, rollout_steps)
                decoded = model.decoder(predicted)

                roll_recon = decoded.rgb.cpu().numpy()
                roll_labels = (masks_from_alpha(decoded.alpha) + 1).cpu().numpy()
                future_masks = episode.masks[burnin:] if episode.masks is not None else None
                roll_summary = _summarize(
                    roll_recon, episode.frames[burnin:], roll_labels, future_masks, cfg.iou_threshold
                )
                rollout.append(roll_summary)
                row.update({f"rollout_{k}": v for k, v in roll_summary.items() if not k.startswith("_")})

                for name in PER_STEP_METRICS:
                    if name in roll_summary["_per_frame"]:
                        per_step[name].append(roll_summary["_per_frame"][name])

                slot_errors.append(float(((predicted - target) ** 2).mean()))
                persistence = persistence_baseline(observed, rollout_steps)
                persistence_errors.append(float(((persistence - target) ** 2).mean()))

                if index < cfg.num_visualize:
                    save_strip(visual_dir / f"ep_{episode.episode_id}_rollout.png",
                               episode.frames[burnin:], roll_recon, roll_labels, future_masks)
                    save_gif(visual_dir / f"ep_{episode.episode_id}_rollout.gif",
                             [episode.frames[burnin:], roll_recon, roll_labels])

            rows.append(row)

        if dynamics is not None and not rollout:
            message = f"episodes are not longer than burnin={burnin}; rollout metrics skipped"
            logger.warning(message)
            warnings.append(message)

        report = EvalReport(
            split=split,
            num_episodes=len(episodes),
            seed=cfg.seed,
            ar_iou_threshold=cfg.iou_threshold,
            discovery=_metric_row(discovery),
            rollout=_metric_row(rollout) if rollout else None,
            burnin=burnin,
            rollout_steps=rollout_steps,
            rollout_slot_mse=_mean(slot_errors),
            persistence_slot_mse=_mean(persistence_errors),
            per_step={
                name: [_mean(step) for step in zip(*curves)]
                for name, curves in per_step.items()
            },
            warnings=warnings,
            config=cfg.model_dump(mode="json"),
        )

        self._write(report, rows, split)
        self._log_summary(report)
        return report

    def _write(self, report: EvalReport, rows: List[Dict], split: str):
        report_dir = self.cfg.report_dir
        report_dir.mkdir(parents=True, exist_ok=True)

        report_path = report_dir / f"eval_{split}.json"
        report_path.write_text(report.model_dump_json(indent=2))

        columns = ["episode_id"] + sorted({key for row in rows for key in row} - {"episode_id"})
        csv_path = report_dir / f"eval_{split}_episodes.csv"
        with open(csv_path, "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=columns)
            writer.writeheader()
            writer.writerows(rows)

        logger.info(f"✓ Report written to {report_path}")

    def _log_summary(self, report: EvalReport):
        def fmt(row: Optional[MetricRow]) -> str:
            if row is None:
                return "n/a"
            return ", ".join(
                f"{name}={value:.4f}" for name, value in row.model_dump().items() if value is not None
            )

        logger.info(f"discovery: {fmt(report.discovery)}")
        if report.rollout is not None:
            logger.info(f"rollout:   {fmt(report.rollout)}")
            logger.info(
                f"slot MSE: dynamics={report.rollout_slot_mse:.5f} "
                f"persistence={report.persistence_slot_mse:.5f}"
            )


def evaluate(
    cfg: RunConfig,
    split: str = "test",
    use_dynamics: bool = True,
    device: Optional[torch.device] = None
) -> EvalReport:
    return Evaluator(cfg, device).evaluate(split, use_dynamics)
