"""
Slot Attention: competitive attention over feature positions.

The attention map returned alongside the slots comes from the final
iteration and is softmax-normalized over the slot axis.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn as nn

from models.backbone import FeatureGrid
from utils.errors import ShapeMismatchError


@dataclass
class AttentionMap:
    """weights: (B, K, N); every column (position) sums to 1 over K"""
    weights: torch.Tensor
    grid_shape: Tuple[int, int]
    iteration_index: int


@dataclass
class SlotState:
    """Slots and per-slot prior hidden state at one timestep"""
    slots: torch.Tensor
    gru_hidden: torch.Tensor
    timestep: int


class SlotAttention(nn.Module):
    """
    Slot Attention over a FeatureGrid.

    Also owns the learned Gaussian used for the first frame's initial slots.
    """

    def __init__(self, enc_dim: int, slot_dim: int, mlp_hidden: int, eps: float = 1e-8):
        super().__init__()
        self.slot_dim = slot_dim
        self.enc_dim = enc_dim
        self.scale = slot_dim ** -0.5
        self.eps = eps

        self.slots_mu = nn.Parameter(torch.randn(1, 1, slot_dim) * slot_dim ** -0.5)
        self.slots_log_sigma = nn.Parameter(torch.zeros(1, 1, slot_dim))

        self.norm_inputs = nn.LayerNorm(enc_dim)
        self.norm_slots = nn.LayerNorm(slot_dim)
        self.norm_pre_ff = nn.LayerNorm(slot_dim)

        self.to_q = nn.Linear(slot_dim, slot_dim, bias=False)
        self.to_k = nn.Linear(enc_dim, slot_dim, bias=False)
        self.to_v = nn.Linear(enc_dim, slot_dim, bias=False)

        self.gru = nn.GRUCell(slot_dim, slot_dim)
        self.mlp = nn.Sequential(
            nn.Linear(slot_dim, mlp_hidden),
            nn.ReLU(inplace=True),
            nn.Linear(mlp_hidden, slot_dim),
        )

    def init_slots_gaussian(
        self,
        batch_size: int,
        num_slots: int,
        generator: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        """
        Reparameterized i.i.d. samples mean + std * eps, shape (B, K, D_slot).

        Used for the first frame only; later frames come from the prior.
        """
        mu = self.slots_mu.expand(batch_size, num_slots, -1)
        sigma = self.slots_log_sigma.exp().expand(batch_size, num_slots, -1)
        noise = torch.randn(
            mu.shape, generator=generator, device=mu.device, dtype=mu.dtype
        )
        return mu + sigma * noise

    def _attend(self, q_slots: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
        q = self.to_q(self.norm_slots(q_slots))
        logits = torch.einsum("bkd,bnd->bkn", q, keys) * self.scale
        return logits.softmax(dim=1)

    def forward(
        self,
        features: FeatureGrid,
        init_slots: torch.Tensor,
        num_iterations: int
    ) -> Tuple[torch.Tensor, AttentionMap]:
        """
        Run `num_iterations` rounds of slot attention.

        Args:
            features: FeatureGrid with values (B, N, D_enc)
            init_slots: (B, K, D_slot)
            num_iterations: M >= 0; with M = 0 the slots are returned
                unchanged and the map is computed from init_slots

        Returns:
            (slots (B, K, D_slot), AttentionMap of the final iteration)
        """
        if num_iterations < 0:
            raise ValueError("num_iterations must be >= 0")
        inputs = features.values
        if inputs.dim() != 3 or inputs.shape[-1] != self.enc_dim:
            raise ShapeMismatchError(f"Expected features (B, N, {self.enc_dim}), got {tuple(inputs.shape)}")
        if init_slots.dim() != 3 or init_slots.shape[-1] != self.slot_dim or init_slots.shape[0] != inputs.shape[0]:
            raise ShapeMismatchError(
                f"Expected init_slots ({inputs.shape[0]}, K, {self.slot_dim}), got {tuple(init_slots.shape)}"
            )

        inputs = self.norm_inputs(inputs)
        keys = self.to_k(inputs)
        values = self.to_v(inputs)

        slots = init_slots
        batch, num_slots, dim = slots.shape
        attn = None
        for _ in range(num_iterations):
            slots_prev = slots
            attn = self._attend(slots, keys)

            # weighted mean over positions
            weights = attn + self.eps
            weights = weights / weights.sum(dim=-1, keepdim=True)
            updates = torch.einsum("bkn,bnd->bkd", weights, values)

            slots = self.gru(
                updates.reshape(-1, dim), slots_prev.reshape(-1, dim)
            ).reshape(batch, num_slots, dim)
            slots = slots + self.mlp(self.norm_pre_ff(slots))

        if attn is None:
            attn = self._attend(slots, keys)

        attention = AttentionMap(
            weights=attn,
            grid_shape=features.grid_shape,
            iteration_index=max(num_iterations - 1, 0),
        )
        return slots, attention
