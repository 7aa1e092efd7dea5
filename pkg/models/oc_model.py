from dataclasses import dataclass
from typing import List, Optional

import torch
import torch.nn as nn

from models.backbone import ImageEncoder, SpatialBroadcastDecoder, FeatureGrid
from models.casa_prior import SlotPrior
from models.schemas import ModelConfig, RunConfig
from models.slot_core import SlotAttention, AttentionMap
from utils.errors import ShapeMismatchError


@dataclass
class OCOutput:
    """
    slots: (B, T, K, D_slot)
    attention: T maps, each (B, K, N)
    means / log_vars: prior statistics for t >= 2 (T - 1 entries)
    recon: (B, T, 3, H, W), alpha: (B, T, K, H, W); None when not decoded
    """
    slots: torch.Tensor
    attention: List[AttentionMap]
    means: List[torch.Tensor]
    log_vars: List[Optional[torch.Tensor]]
    recon: Optional[torch.Tensor] = None
    alpha: Optional[torch.Tensor] = None


class ObjectCentricVideoModel(nn.Module):
    """
    Frame-by-frame video slot model.

    t = 1: slots start from the learned Gaussian.
    t >= 2: slots start from the prior applied to the previous frame's slots.
    """

    def __init__(self, cfg: ModelConfig, height: int, width: int):
        super().__init__()
        self.cfg = cfg
        self.height = height
        self.width = width
        self.encoder = ImageEncoder(cfg, height, width)
        self.slot_attention = SlotAttention(cfg.enc_dim, cfg.slot_dim, cfg.mlp_hidden)
        self.prior = SlotPrior(cfg)
        self.decoder = SpatialBroadcastDecoder(cfg, height, width)

    @classmethod
    def from_config(cls, run_cfg: RunConfig) -> "ObjectCentricVideoModel":
        return cls(run_cfg.model, run_cfg.data.gen.height, run_cfg.data.gen.width)

    def forward(
        self,
        video: torch.Tensor,
        generator: Optional[torch.Generator] = None,
        stochastic: bool = True,
        decode: bool = True
    ) -> OCOutput:
        """
        Args:
            video: (B, T, 3, H, W)
            generator: RNG for the first-frame sample and the prior noise
            stochastic: sample from the prior (training) or use its mean
            decode: also render reconstructions

        Returns:
            OCOutput
        """
        if video.dim() != 5:
            raise ShapeMismatchError(f"Expected video (B, T, 3, H, W), got {tuple(video.shape)}")
        batch, num_frames = video.shape[:2]
        num_slots = self.cfg.num_slots

        features = self.encoder(video.flatten(0, 1))
        values = features.values.reshape(batch, num_frames, *features.values.shape[1:])

        hidden = self.prior.initial_hidden(batch, num_slots, like=values)
        later_iterations = self.cfg.num_iterations_later
        if later_iterations is None:
            later_iterations = self.cfg.num_iterations

        slots_seq, attention, means, log_vars = [], [], [], []
        slots = None
        for t in range(num_frames):
            frame_features = FeatureGrid(values=values[:, t], grid_shape=features.grid_shape)
            if t == 0:
                init_slots = self.slot_attention.init_slots_gaussian(batch, num_slots, generator)
                iterations = self.cfg.num_iterations
            else:
                prior_out = self.prior(slots, hidden, generator=generator, stochastic=stochastic)
                init_slots, hidden = prior_out.init_slots, prior_out.new_hidden
                means.append(prior_out.mean)
                log_vars.append(prior_out.log_var)
                iterations = later_iterations

            slots, attn = self.slot_attention(frame_features, init_slots, iterations)
            slots_seq.append(slots)
            attention.append(attn)

        stacked = torch.stack(slots_seq, dim=1)
        output = OCOutput(slots=stacked, attention=attention, means=means, log_vars=log_vars)

        if decode:
            decoded = self.decoder(stacked.flatten(0, 1))
            output.recon = decoded.rgb.reshape(batch, num_frames, *decoded.rgb.shape[1:])
            output.alpha = decoded.alpha.reshape(batch, num_frames, *decoded.alpha.shape[1:])
        return output
