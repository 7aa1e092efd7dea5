"""
Evaluation metrics.

Label maps are integer arrays where 0 means background (ground truth) or
"no segment" (prediction). The evaluator shifts slot indices by one before
calling these, so every slot is a candidate segment.
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import linear_sum_assignment

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_labels(labels) -> np.ndarray:
    array = np.asarray(labels)
    if hasattr(labels, "detach"):
        array = labels.detach().cpu().numpy()
    return array.astype(np.int64)


def _as_float(values) -> np.ndarray:
    if hasattr(values, "detach"):
        values = values.detach().cpu().numpy()
    return np.asarray(values, dtype=np.float64)


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

def ari(pred, gt, foreground_only: bool = False) -> float:
    """
    Adjusted Rand index between two pixel partitions.

    Args:
        pred: (H, W) predicted labels
        gt: (H, W) ground-truth labels, 0 = background
        foreground_only: restrict to pixels with gt > 0 (FG-ARI)

    Returns:
        ARI in [-1, 1]; 1.0 when both partitions are trivial and agree
    """
    pred = _as_labels(pred).reshape(-1)
    gt = _as_labels(gt).reshape(-1)
    if pred.shape != gt.shape:
        raise ValueError(f"pred and gt sizes differ: {pred.shape} vs {gt.shape}")

    if foreground_only:
        keep = gt > 0
        if not keep.any():
            raise ValueError("foreground-only ARI on a frame without foreground")
        pred, gt = pred[keep], gt[keep]

    n_points = pred.size
    if n_points < 2:
        raise ValueError("ARI needs at least two pixels")

    _, pred_ids = np.unique(pred, return_inverse=True)
    _, gt_ids = np.unique(gt, return_inverse=True)
    contingency = np.zeros((pred_ids.max() + 1, gt_ids.max() + 1), dtype=np.int64)
    np.add.at(contingency, (pred_ids, gt_ids), 1)

    a = contingency.sum(axis=1)
    b = contingency.sum(axis=0)
    rindex = float((contingency * (contingency - 1)).sum())
    aindex = float((a * (a - 1)).sum())
    bindex = float((b * (b - 1)).sum())
    expected = aindex * bindex / float(n_points * (n_points - 1))
    maximum = (aindex + bindex) / 2.0

    if maximum == expected:
        return 1.0
    return (rindex - expected) / (maximum - expected)


def pairwise_iou(pred, gt) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    IoU between every predicted segment (pred > 0) and gt object (gt > 0).

    Returns:
        (iou matrix (n_pred, n_gt), pred labels, gt labels)
    """
    pred = _as_labels(pred).reshape(-1)
    gt = _as_labels(gt).reshape(-1)
    pred_labels = np.unique(pred[pred > 0])
    gt_labels = np.unique(gt[gt > 0])

    pred_onehot = (pred[None, :] == pred_labels[:, None]).astype(np.float64)
    gt_onehot = (gt[None, :] == gt_labels[:, None]).astype(np.float64)
    intersection = pred_onehot @ gt_onehot.T
    union = pred_onehot.sum(1)[:, None] + gt_onehot.sum(1)[None, :] - intersection
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, intersection / np.maximum(union, 1.0), 0.0)
    return iou, pred_labels, gt_labels


def matched_iou(pred, gt) -> Tuple[np.ndarray, Dict[int, Optional[int]]]:
    """
    Hungarian matching of predicted segments to gt objects maximizing total IoU.

    Returns:
        (IoU per gt object in gt-label order, unmatched objects score 0;
         gt label -> matched pred label, None when unmatched)
    """
    iou, pred_labels, gt_labels = pairwise_iou(pred, gt)
    scores = np.zeros(len(gt_labels), dtype=np.float64)
    assignment: Dict[int, Optional[int]] = {int(g): None for g in gt_labels}
    if iou.size == 0:
        return scores, assignment

    rows, cols = linear_sum_assignment(iou, maximize=True)
    for r, c in zip(rows, cols):
        scores[c] = iou[r, c]
        assignment[int(gt_labels[c])] = int(pred_labels[r])
    return scores, assignment


def fg_miou(pred, gt) -> float:
    """Mean IoU over gt foreground objects after Hungarian matching"""
    scores, _ = matched_iou(pred, gt)
    if scores.size == 0:
        raise ValueError("FG-mIoU needs at least one foreground object")
    return float(scores.mean())


def average_recall(pred, gt, iou_threshold: float = 0.5) -> float:
    """Fraction of gt objects whose matched segment reaches `iou_threshold`"""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must be in (0, 1)")
    scores, _ = matched_iou(pred, gt)
    if scores.size == 0:
        raise ValueError("average recall needs at least one foreground object")
    return float((scores >= iou_threshold).mean())


# ---------------------------------------------------------------------------
# Image quality
# ---------------------------------------------------------------------------

def psnr(pred_frame, target_frame, data_range: float = 1.0) -> float:
    """10 * log10(range^2 / MSE) in dB; +inf for identical frames"""
    pred = _as_float(pred_frame)
    target = _as_float(target_frame)
    if pred.shape != target.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {target.shape}")
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


def _to_gray(frame: np.ndarray) -> np.ndarray:
    if frame.ndim == 3:
        return frame.mean(axis=0)
    return frame


def ssim(pred_frame, target_frame, data_range: float = 1.0) -> float:
    """
    Mean SSIM over all valid 7x7 uniform windows.

    Colour frames (C, H, W) are converted to gray by the channel mean.
    Window statistics are population (biased) moments.
    """
    pred = _to_gray(_as_float(pred_frame))
    target = _to_gray(_as_float(target_frame))
    if pred.shape != target.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {target.shape}")
    if pred.shape[0] < SSIM_WINDOW or pred.shape[1] < SSIM_WINDOW:
        raise ValueError(f"frames smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    window = (SSIM_WINDOW, SSIM_WINDOW)

    x = sliding_window_view(pred, window)
    y = sliding_window_view(target, window)
    mu_x = x.mean(axis=(-2, -1))
    mu_y = y.mean(axis=(-2, -1))
    var_x = (x * x).mean(axis=(-2, -1)) - mu_x * mu_x
    var_y = (y * y).mean(axis=(-2, -1)) - mu_y * mu_y
    cov = (x * y).mean(axis=(-2, -1)) - mu_x * mu_y

    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float((numerator / denominator).mean())


# ---------------------------------------------------------------------------
# Temporal consistency
# ---------------------------------------------------------------------------

def frame_assignment(pred, gt) -> Dict[int, int]:
    """gt object -> predicted segment, for matches with IoU > 0"""
    scores, assignment = matched_iou(pred, gt)
    gt_labels = sorted(assignment)
    return {
        g: assignment[g]
        for g, score in zip(gt_labels, scores)
        if assignment[g] is not None and score > 0.0
    }


def temporal_consistency_index(pred_mask_seq, gt_mask_seq) -> float:
    """
    Fraction of consecutive frame pairs whose object -> segment assignment
    is unchanged, comparing only objects visible in both frames.
    """
    pred_seq = _as_labels(pred_mask_seq)
    gt_seq = _as_labels(gt_mask_seq)
    if pred_seq.shape != gt_seq.shape:
        raise ValueError(f"sequence shapes differ: {pred_seq.shape} vs {gt_seq.shape}")
    if pred_seq.shape[0] < 2:
        raise ValueError("TCI needs at least two frames")

    assignments = [frame_assignment(p, g) for p, g in zip(pred_seq, gt_seq)]
    visible = [set(np.unique(g[g > 0]).tolist()) for g in gt_seq]

    consistent = 0
    for t in range(len(assignments) - 1):
        shared = visible[t] & visible[t + 1]
        if all(assignments[t].get(obj) == assignments[t + 1].get(obj) for obj in shared):
            consistent += 1
    return consistent / (len(assignments) - 1)


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def frame_average(metric: Callable[..., float], preds: Sequence, targets: Sequence, **kwargs) -> float:
    """Mean of a per-frame metric; frames where it is undefined are skipped"""
    values: List[float] = []
    for pred, target in zip(preds, targets):
        try:
            values.append(metric(pred, target, **kwargs))
        except ValueError:
            continue
    if not values:
        return math.nan
    return float(np.mean(values))


def _or_nan(metric: Callable[..., float], *args, **kwargs) -> float:
    try:
        return metric(*args, **kwargs)
    except ValueError:
        return math.nan


def segmentation_scores(pred_seq, gt_seq, iou_threshold: float = 0.5) -> Dict[str, List[float]]:
    """Per-frame ari, fg_ari, fg_miou and ar for a (T, H, W) sequence; NaN where undefined"""
    scores: Dict[str, List[float]] = {"ari": [], "fg_ari": [], "fg_miou": [], "ar": []}
    for pred, gt in zip(_as_labels(pred_seq), _as_labels(gt_seq)):
        scores["ari"].append(ari(pred, gt))
        scores["fg_ari"].append(_or_nan(ari, pred, gt, foreground_only=True))
        scores["fg_miou"].append(_or_nan(fg_miou, pred, gt))
        scores["ar"].append(_or_nan(average_recall, pred, gt, iou_threshold))
    return scores


def image_scores(pred_seq, target_seq) -> Dict[str, List[float]]:
    """Per-frame psnr and ssim for (T, 3, H, W) sequences"""
    pred_seq = _as_float(pred_seq)
    target_seq = _as_float(target_seq)
    return {
        "psnr": [psnr(p, t) for p, t in zip(pred_seq, target_seq)],
        "ssim": [ssim(p, t) for p, t in zip(pred_seq, target_seq)],
    }
