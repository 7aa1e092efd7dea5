"""
Autoregressive transformer over slot trajectories.

Tokens are (timestep, slot) pairs. A learned temporal embedding is shared by
all slots of a timestep and there is no slot-index embedding, so the model
is equivariant to slot permutations. A block-causal mask lets the slots of
timestep t attend to every slot of timesteps <= t.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from models.schemas import DynamicsConfig
from utils.errors import ShapeMismatchError


@dataclass
class SlotTrajectory:
    """slots: (T, K, D_slot); the first `burnin` steps are observed"""
    slots: np.ndarray
    episode_id: str
    burnin: Optional[int] = None

    def __post_init__(self):
        if self.burnin is not None and self.burnin > self.slots.shape[0]:
            raise ValueError("burnin cannot exceed the trajectory length")
        if not np.isfinite(self.slots).all():
            raise ValueError(f"Trajectory {self.episode_id} has non-finite slots")


def block_causal_mask(num_steps: int, num_slots: int, device=None) -> torch.Tensor:
    """(T*K, T*K) boolean mask, True where attention is blocked"""
    step_of_token = torch.arange(num_steps, device=device).repeat_interleave(num_slots)
    return step_of_token[None, :] > step_of_token[:, None]


class SlotDynamics(nn.Module):
    def __init__(self, cfg: DynamicsConfig, slot_dim: int):
        super().__init__()
        self.slot_dim = slot_dim
        self.max_context = cfg.context_length

        self.in_proj = nn.Sequential(
            nn.Linear(slot_dim, cfg.d_model),
            nn.ReLU(inplace=True),
            nn.Linear(cfg.d_model, cfg.d_model),
        )
        self.time_embed = nn.Parameter(torch.randn(self.max_context, cfg.d_model) * 0.02)

        layer = nn.TransformerEncoderLayer(
            d_model=cfg.d_model,
            nhead=cfg.num_heads,
            dim_feedforward=cfg.ffn_dim,
            dropout=cfg.dropout,
            batch_first=True,
            norm_first=True,
        )
        self.transformer = nn.TransformerEncoder(layer, cfg.num_layers, enable_nested_tensor=False)
        self.out_norm = nn.LayerNorm(cfg.d_model)
        self.out_proj = nn.Linear(cfg.d_model, slot_dim)

    def forward(self, traj: torch.Tensor) -> torch.Tensor:
        """
        Predict the next slots at every position.

        Args:
            traj: (B, t, K, D_slot) with t <= max context

        Returns:
            (B, t, K, D_slot); entry [:, i] predicts the slots of step i + 1
        """
        if traj.dim() != 4 or traj.shape[-1] != self.slot_dim:
            raise ShapeMismatchError(f"Expected trajectory (B, t, K, {self.slot_dim}), got {tuple(traj.shape)}")
        batch, steps, num_slots, _ = traj.shape
        if steps < 1:
            raise ValueError("empty trajectory")
        if steps > self.max_context:
            raise ValueError(f"Context of {steps} steps exceeds the maximum of {self.max_context}")

        x = self.in_proj(traj) + self.time_embed[:steps][None, :, None, :]
        x = x.reshape(batch, steps * num_slots, -1)
        mask = block_causal_mask(steps, num_slots, device=traj.device)
        x = self.transformer(x, mask=mask)
        x = x.reshape(batch, steps, num_slots, -1)
        return self.out_proj(self.out_norm(x))

    def predict_next(self, traj_prefix: torch.Tensor) -> torch.Tensor:
        """
        Slots at step t + 1 from a (B, t, K, D) or (t, K, D) prefix.

        Row k of the output is the prediction for slot k.
        """
        unbatched = traj_prefix.dim() == 3
        if unbatched:
            traj_prefix = traj_prefix.unsqueeze(0)
        prediction = self.forward(traj_prefix)[:, -1]
        return prediction[0] if unbatched else prediction

    def rollout(self, burnin_slots: torch.Tensor, steps: int) -> torch.Tensor:
        """
        Autoregressive rollout with a sliding context window.

        Args:
            burnin_slots: (B, T, K, D) or (T, K, D) observed slots
            steps: number of future steps L >= 1

        Returns:
            (B, L, K, D) or (L, K, D) predicted slots
        """
        if steps < 1:
            raise ValueError("rollout needs at least one step")
        unbatched = burnin_slots.dim() == 3
        if unbatched:
            burnin_slots = burnin_slots.unsqueeze(0)

        context = burnin_slots[:, -self.max_context:]
        predictions = []
        for _ in range(steps):
            next_slots = self.predict_next(context)
            predictions.append(next_slots)
            context = torch.cat([context, next_slots.unsqueeze(1)], dim=1)[:, -self.max_context:]

        rolled = torch.stack(predictions, dim=1)
        return rolled[0] if unbatched else rolled


def persistence_baseline(burnin_slots: torch.Tensor, steps: int) -> torch.Tensor:
    """Repeat the last observed slots for `steps` future steps"""
    last = burnin_slots[..., -1:, :, :]
    repeat = [1] * last.dim()
    repeat[-3] = steps
    return last.repeat(*repeat)


def dynamics_loss(
    pred_slots: torch.Tensor,
    target_slots: torch.Tensor,
    pred_frames: Optional[torch.Tensor] = None,
    target_frames: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """
    MSE(slots) + MSE(frames).

    The frame term is skipped when either frame tensor is None. Predicted
    frames come from the frozen decoder, so gradients reach the transformer
    through it while the decoder parameters receive none.
    """
    if pred_slots.shape != target_slots.shape:
        raise ShapeMismatchError(f"pred slots {tuple(pred_slots.shape)} vs target {tuple(target_slots.shape)}")
    loss = F.mse_loss(pred_slots, target_slots)

    if pred_frames is not None and target_frames is not None:
        if pred_frames.shape != target_frames.shape:
            raise ShapeMismatchError(f"pred frames {tuple(pred_frames.shape)} vs target {tuple(target_frames.shape)}")
        loss = loss + F.mse_loss(pred_frames, target_frames)
    return loss
