"""
Pairwise-slot contact readout.

A shared MLP scores every ordered pair of distinct slots at every timestep;
features are max-pooled over pairs and time, so the prediction does not
depend on slot order or timestep order.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from utils.errors import ShapeMismatchError


@dataclass
class ReadoutSample:
    """slots: (T_obs + L, K, D_slot); label 1 iff the agent touches the patient"""
    slots: np.ndarray
    label: int
    episode_id: str = ""
    burnin: Optional[int] = None


def ordered_pairs(num_slots: int):
    """Index tensors (i, j) over the K * (K - 1) ordered pairs with i != j"""
    idx_i, idx_j = torch.meshgrid(torch.arange(num_slots), torch.arange(num_slots), indexing="ij")
    keep = idx_i != idx_j
    return idx_i[keep], idx_j[keep]


class PairwiseReadout(nn.Module):
    def __init__(self, slot_dim: int, hidden: int = 128, linear: bool = False):
        super().__init__()
        self.slot_dim = slot_dim
        if linear:
            self.pair_net = nn.Linear(2 * slot_dim, hidden)
        else:
            self.pair_net = nn.Sequential(
                nn.Linear(2 * slot_dim, hidden),
                nn.ReLU(inplace=True),
                nn.Linear(hidden, hidden),
                nn.ReLU(inplace=True),
            )
        self.classifier = nn.Linear(hidden, 1)

    def logits(self, slots_seq: torch.Tensor) -> torch.Tensor:
        """
        Args:
            slots_seq: (B, T, K, D) or (T, K, D)

        Returns:
            (B,) or scalar logits
        """
        unbatched = slots_seq.dim() == 3
        if unbatched:
            slots_seq = slots_seq.unsqueeze(0)
        if slots_seq.dim() != 4 or slots_seq.shape[-1] != self.slot_dim:
            raise ShapeMismatchError(f"Expected slots (B, T, K, {self.slot_dim}), got {tuple(slots_seq.shape)}")
        num_slots = slots_seq.shape[2]
        if num_slots < 2:
            raise ValueError("readout needs at least two slots")

        idx_i, idx_j = ordered_pairs(num_slots)
        idx_i = idx_i.to(slots_seq.device)
        idx_j = idx_j.to(slots_seq.device)
        pairs = torch.cat([slots_seq[:, :, idx_i], slots_seq[:, :, idx_j]], dim=-1)
        features = self.pair_net(pairs)
        pooled = features.flatten(1, 2).max(dim=1).values
        logits = self.classifier(pooled).squeeze(-1)
        return logits[0] if unbatched else logits

    def forward(self, slots_seq: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(slots_seq))


def readout_forward(model: PairwiseReadout, slots_seq: torch.Tensor) -> torch.Tensor:
    """Contact probability for a (T, K, D) or (B, T, K, D) slot sequence"""
    return model(slots_seq)
