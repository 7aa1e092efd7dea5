"""
Conditional slot prior.

The same GRU cell is applied to every slot independently, so slots never
mix and each keeps its identity across frames. A two-layer MLP head with
layer normalization turns the GRU output into the mean and log-variance of
the next frame's initial slots, sampled by reparameterization.

Prior kinds:
    gru   GRU cell + stochastic head (the full conditional prior)
    mlp   per-slot MLP + stochastic head (stochastic SAVi baseline)
    none  next initial slots are the previous slots, no KL term
"""

import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from models.schemas import ModelConfig
from utils.errors import ShapeMismatchError


@dataclass
class PriorOutput:
    """
    init_slots: (B, K, D_slot) initial slots for the next frame
    mean, log_var: (B, K, D_slot) Gaussian parameters; log_var is None for kind "none"
    new_hidden: (B, K, D_gru)
    noise: the eps used for sampling, None in deterministic mode
    """
    init_slots: torch.Tensor
    mean: torch.Tensor
    log_var: Optional[torch.Tensor]
    new_hidden: torch.Tensor
    noise: Optional[torch.Tensor] = None


class SlotPrior(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.kind = cfg.prior_kind
        self.slot_dim = cfg.slot_dim
        # hidden size matches the slot size
        self.hidden_dim = cfg.slot_dim

        if self.kind == "gru":
            self.cell = nn.GRUCell(cfg.slot_dim, self.hidden_dim)
        elif self.kind == "mlp":
            self.cell = nn.Sequential(
                nn.Linear(cfg.slot_dim, cfg.prior_hidden),
                nn.ReLU(inplace=True),
                nn.Linear(cfg.prior_hidden, self.hidden_dim),
            )
        else:
            self.cell = None

        if self.cell is not None:
            self.head = nn.Sequential(
                nn.Linear(self.hidden_dim, cfg.prior_hidden),
                nn.LayerNorm(cfg.prior_hidden),
                nn.ReLU(inplace=True),
                nn.Linear(cfg.prior_hidden, 2 * cfg.slot_dim),
            )
        else:
            self.head = None

    def initial_hidden(self, batch_size: int, num_slots: int, like: torch.Tensor) -> torch.Tensor:
        """Zero hidden state, reset at the start of every episode"""
        return like.new_zeros(batch_size, num_slots, self.hidden_dim)

    def forward(
        self,
        prev_slots: torch.Tensor,
        prev_hidden: torch.Tensor,
        generator: Optional[torch.Generator] = None,
        stochastic: bool = True
    ) -> PriorOutput:
        """
        Predict the next frame's initial slots from the previous frame's slots.

        Args:
            prev_slots: (B, K, D_slot)
            prev_hidden: (B, K, D_gru)
            generator: torch RNG used for the reparameterization noise
            stochastic: sample when True, return the mean otherwise

        Returns:
            PriorOutput
        """
        if prev_slots.dim() != 3 or prev_slots.shape[-1] != self.slot_dim:
            raise ShapeMismatchError(f"Expected prev_slots (B, K, {self.slot_dim}), got {tuple(prev_slots.shape)}")
        if tuple(prev_hidden.shape) != (*prev_slots.shape[:2], self.hidden_dim):
            raise ShapeMismatchError(
                f"Expected prev_hidden {(*prev_slots.shape[:2], self.hidden_dim)}, got {tuple(prev_hidden.shape)}"
            )

        if self.kind == "none":
            return PriorOutput(init_slots=prev_slots, mean=prev_slots, log_var=None, new_hidden=prev_hidden)

        batch, num_slots, dim = prev_slots.shape
        flat_slots = prev_slots.reshape(batch * num_slots, dim)
        if self.kind == "gru":
            flat_hidden = self.cell(flat_slots, prev_hidden.reshape(batch * num_slots, self.hidden_dim))
            new_hidden = flat_hidden.reshape(batch, num_slots, self.hidden_dim)
        else:
            flat_hidden = self.cell(flat_slots)
            new_hidden = prev_hidden

        mean, log_var = self.head(flat_hidden).reshape(batch, num_slots, 2 * dim).chunk(2, dim=-1)

        if not stochastic:
            return PriorOutput(init_slots=mean, mean=mean, log_var=log_var, new_hidden=new_hidden)

        noise = torch.randn(mean.shape, generator=generator, device=mean.device, dtype=mean.dtype)
        init_slots = mean + torch.exp(0.5 * log_var) * noise
        return PriorOutput(
            init_slots=init_slots, mean=mean, log_var=log_var, new_hidden=new_hidden, noise=noise
        )

    prior_step = forward


def kl_loss(mean: torch.Tensor, log_var: torch.Tensor, sigma_hat: float = 0.1) -> torch.Tensor:
    """
    KL(N(mu, sigma^2) || N(mu, sigma_hat^2)) averaged over every element.

    Both distributions share the mean, so only the variance is penalized:
        log(sigma_hat / sigma) + sigma^2 / (2 sigma_hat^2) - 1/2
    """
    if sigma_hat <= 0:
        raise ValueError("sigma_hat must be positive")
    if mean.shape != log_var.shape:
        raise ShapeMismatchError(f"mean {tuple(mean.shape)} and log_var {tuple(log_var.shape)} differ")
    if not (torch.isfinite(mean).all() and torch.isfinite(log_var).all()):
        raise ValueError("kl_loss received non-finite inputs")

    log_sigma_hat = math.log(sigma_hat)
    per_element = (
        log_sigma_hat
        - 0.5 * log_var
        + torch.exp(log_var) / (2.0 * sigma_hat ** 2)
        - 0.5
    )
    return per_element.mean()
