"""
Image-side networks: feature extractor with positional embedding and the
spatial broadcast decoder (SBD).
"""

from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from models.schemas import ModelConfig
from utils.errors import ShapeMismatchError


@dataclass
class FeatureGrid:
    """values: (B, N, D_enc) with N = H' * W', position embedding already added"""
    values: torch.Tensor
    grid_shape: Tuple[int, int]

    @property
    def num_positions(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]


@dataclass
class DecodedFrame:
    """
    rgb: (B, 3, H, W) alpha-composited image
    alpha: (B, K, H, W) softmax over K
    per_slot_rgb: (B, K, 3, H, W)
    """
    rgb: torch.Tensor
    alpha: torch.Tensor
    per_slot_rgb: torch.Tensor


def build_grid(height: int, width: int) -> torch.Tensor:
    """4-channel linear ramp grid (x, y, 1-x, 1-y), shape (1, H, W, 4)"""
    ys = torch.linspace(0.0, 1.0, height)
    xs = torch.linspace(0.0, 1.0, width)
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack((grid_x, grid_y, 1.0 - grid_x, 1.0 - grid_y), dim=-1).unsqueeze(0)


class SoftPositionEmbed(nn.Module):
    """Adds a learned projection of the ramp grid to channels-last features"""

    def __init__(self, channels: int, height: int, width: int):
        super().__init__()
        self.projection = nn.Linear(4, channels)
        self.register_buffer("grid", build_grid(height, width), persistent=False)

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        return inputs + self.projection(self.grid.to(inputs.dtype))


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.norm1 = nn.GroupNorm(1, channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.norm2 = nn.GroupNorm(1, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return F.relu(out + x)


def _cnn_trunk(enc_dim: int) -> nn.Sequential:
    layers = []
    in_channels = 3
    for _ in range(4):
        layers += [nn.Conv2d(in_channels, enc_dim, 5, padding=2), nn.ReLU(inplace=True)]
        in_channels = enc_dim
    return nn.Sequential(*layers)


def _resnet_trunk(enc_dim: int) -> nn.Sequential:
    # ResNet18 layout (4 stages x 2 blocks) kept at stride 1 so H'W' = HW
    layers = [nn.Conv2d(3, enc_dim, 5, padding=2), nn.ReLU(inplace=True)]
    layers += [ResidualBlock(enc_dim) for _ in range(8)]
    return nn.Sequential(*layers)


class ImageEncoder(nn.Module):
    """
    Per-frame feature extractor.

    A stride-1 conv trunk, then the position embedding, spatial flattening
    and a LayerNorm + MLP over features.
    """

    def __init__(self, cfg: ModelConfig, height: int, width: int):
        super().__init__()
        self.height = height
        self.width = width
        self.enc_dim = cfg.enc_dim
        self.trunk = _resnet_trunk(cfg.enc_dim) if cfg.encoder == "resnet" else _cnn_trunk(cfg.enc_dim)
        self.position = SoftPositionEmbed(cfg.enc_dim, height, width)
        self.norm = nn.LayerNorm(cfg.enc_dim)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.enc_dim, cfg.enc_dim),
            nn.ReLU(inplace=True),
            nn.Linear(cfg.enc_dim, cfg.enc_dim),
        )

    def forward(self, frames: torch.Tensor) -> FeatureGrid:
        """
        Args:
            frames: (B, 3, H, W) values in [0, 1]

        Returns:
            FeatureGrid with values (B, H*W, D_enc)
        """
        if frames.dim() != 4 or tuple(frames.shape[1:]) != (3, self.height, self.width):
            raise ShapeMismatchError(
                f"Expected frames (B, 3, {self.height}, {self.width}), got {tuple(frames.shape)}"
            )
        x = self.trunk(frames).permute(0, 2, 3, 1)
        x = self.position(x)
        grid_shape = (x.shape[1], x.shape[2])
        x = x.flatten(1, 2)
        x = self.mlp(self.norm(x))
        return FeatureGrid(values=x, grid_shape=grid_shape)

    encode = forward


class SpatialBroadcastDecoder(nn.Module):
    """
    Renders each slot independently with shared weights, then composites
    with a softmax over slots.

    "upsample" broadcasts at H/4 x W/4 and upsamples with two stride-2
    transposed convs; "full" broadcasts at full resolution.
    """

    def __init__(self, cfg: ModelConfig, height: int, width: int):
        super().__init__()
        self.slot_dim = cfg.slot_dim
        self.height = height
        self.width = width
        channels = cfg.decoder_channels

        if cfg.decoder_broadcast == "upsample":
            self.init_size = (height // 4, width // 4)
            self.net = nn.Sequential(
                nn.ConvTranspose2d(cfg.slot_dim, channels, 5, stride=2, padding=2, output_padding=1),
                nn.ReLU(inplace=True),
                nn.ConvTranspose2d(channels, channels, 5, stride=2, padding=2, output_padding=1),
                nn.ReLU(inplace=True),
                nn.Conv2d(channels, channels, 5, padding=2),
                nn.ReLU(inplace=True),
                nn.Conv2d(channels, 4, 3, padding=1),
            )
        else:
            self.init_size = (height, width)
            self.net = nn.Sequential(
                nn.Conv2d(cfg.slot_dim, channels, 5, padding=2),
                nn.ReLU(inplace=True),
                nn.Conv2d(channels, channels, 5, padding=2),
                nn.ReLU(inplace=True),
                nn.Conv2d(channels, channels, 5, padding=2),
                nn.ReLU(inplace=True),
                nn.Conv2d(channels, 4, 3, padding=1),
            )
        self.position = SoftPositionEmbed(cfg.slot_dim, *self.init_size)

    def forward(self, slots: torch.Tensor) -> DecodedFrame:
        """
        Args:
            slots: (B, K, D_slot)

        Returns:
            DecodedFrame
        """
        if slots.dim() != 3 or slots.shape[-1] != self.slot_dim:
            raise ShapeMismatchError(f"Expected slots (B, K, {self.slot_dim}), got {tuple(slots.shape)}")
        if slots.shape[1] < 1:
            raise ShapeMismatchError("decode needs at least one slot")

        batch, num_slots, dim = slots.shape
        h, w = self.init_size
        x = slots.reshape(batch * num_slots, 1, 1, dim).expand(-1, h, w, -1)
        x = self.position(x).permute(0, 3, 1, 2)
        out = self.net(x).reshape(batch, num_slots, 4, self.height, self.width)

        per_slot_rgb = out[:, :, :3]
        alpha = torch.softmax(out[:, :, 3], dim=1)
        rgb = (alpha.unsqueeze(2) * per_slot_rgb).sum(dim=1)
        return DecodedFrame(rgb=rgb, alpha=alpha, per_slot_rgb=per_slot_rgb)

    decode = forward


def masks_from_alpha(alpha: torch.Tensor) -> torch.Tensor:
    """
    Per-pixel argmax over the slot axis of (..., K, H, W) alphas.

    Ties go to the lowest slot index.
    """
    # torch.argmax returns the first maximal index
    return torch.argmax(alpha, dim=-3)
