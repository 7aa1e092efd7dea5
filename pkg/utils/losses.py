"""
Stage-1 objective: image reconstruction + attention-map consistency (OPC)
+ KL on the prior's variance.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import torch
import torch.nn.functional as F

from models.casa_prior import kl_loss
from models.schemas import LossConfig
from models.slot_core import AttentionMap
from utils.errors import ShapeMismatchError

AttentionSequence = Union[torch.Tensor, Sequence[Union[AttentionMap, torch.Tensor]]]


@dataclass
class LossBreakdown:
    """Scalar tensors; total == image + lambda_opc * opc + kl_coeff * kl"""
    image: torch.Tensor
    opc: torch.Tensor
    kl: torch.Tensor
    total: torch.Tensor
    lambda_opc: float
    kl_coeff: float

    def as_dict(self) -> dict:
        return {
            "image": float(self.image.detach()),
            "opc": float(self.opc.detach()),
            "kl": float(self.kl.detach()),
            "total": float(self.total.detach()),
            "lambda_opc": self.lambda_opc,
            "kl_coeff": self.kl_coeff,
        }


def _stack_maps(attn_seq: AttentionSequence) -> torch.Tensor:
    """(..., T, K, N) tensor from a list of T maps or an already stacked tensor"""
    if isinstance(attn_seq, torch.Tensor):
        return attn_seq
    maps = [a.weights if isinstance(a, AttentionMap) else a for a in attn_seq]
    shapes = {tuple(m.shape) for m in maps}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"Attention maps disagree in shape: {sorted(shapes)}")
    return torch.stack(maps, dim=-3)


def opc_loss(attn_seq: AttentionSequence) -> torch.Tensor:
    """
    Attention consistency between consecutive frames.

    For every consecutive pair (A_t, A_{t+1}) and slot i, c_i is the cosine
    similarity between row i of A_t and row i of A_{t+1}; the loss is the
    mean of (c_i - 1)^2 over the (T - 1) * K terms (and the batch).

    Args:
        attn_seq: T maps of shape (K, N) or (B, K, N), or a stacked
            (..., T, K, N) tensor

    Returns:
        Scalar loss; gradient flows into both maps of every pair
    """
    maps = _stack_maps(attn_seq)
    if maps.dim() < 3 or maps.shape[-3] < 2:
        raise ValueError("opc_loss needs at least two attention maps")

    current = maps[..., :-1, :, :]
    following = maps[..., 1:, :, :]

    sq_current = (current * current).sum(dim=-1)
    sq_following = (following * following).sum(dim=-1)
    if bool((sq_current == 0).any()) or bool((sq_following == 0).any()):
        raise ValueError("opc_loss received a zero-norm attention row")

    dot = (current * following).sum(dim=-1)
    # sqrt(a * b) keeps identical rows at cosine exactly 1
    cosine = dot / torch.sqrt(sq_current * sq_following)
    return ((cosine - 1.0) ** 2).mean()


def image_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all elements"""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pred {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    return F.mse_loss(pred, target)


def stage1_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    attn_seq: AttentionSequence,
    mean_seq: Optional[Sequence[torch.Tensor]],
    log_var_seq: Optional[Sequence[torch.Tensor]],
    cfg: LossConfig
) -> LossBreakdown:
    """
    Assemble image + lambda * OPC + kl_coeff * KL.

    OPC is reported as 0 when cfg.use_opc is off. KL is 0 when the prior
    produced no variances (first frame only, or prior kind "none").
    """
    image = image_loss(pred, target)
    zero = image.new_zeros(())

    opc = opc_loss(attn_seq) if cfg.use_opc else zero

    kl = zero
    if mean_seq and log_var_seq:
        pairs = [(m, lv) for m, lv in zip(mean_seq, log_var_seq) if lv is not None]
        if pairs:
            means = torch.stack([m for m, _ in pairs])
            log_vars = torch.stack([lv for _, lv in pairs])
            kl = kl_loss(means, log_vars, cfg.sigma_hat)

    lambda_opc = cfg.lambda_opc if cfg.use_opc else 0.0
    total = image + lambda_opc * opc + cfg.kl_coeff * kl

    return LossBreakdown(
        image=image, opc=opc, kl=kl, total=total,
        lambda_opc=lambda_opc, kl_coeff=cfg.kl_coeff,
    )
