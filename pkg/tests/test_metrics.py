import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from utils.metrics import (
    ari,
    average_recall,
    fg_miou,
    frame_average,
    pairwise_iou,
    psnr,
    segmentation_scores,
    ssim,
    temporal_consistency_index,
)

label_maps = arrays(np.int64, (4, 5), elements=st.integers(0, 3))


def _ari_by_pair_counting(pred, gt):
    pred, gt = pred.reshape(-1), gt.reshape(-1)
    both = same_pred = same_gt = 0
    pairs = 0
    for a, b in itertools.combinations(range(pred.size), 2):
        pairs += 1
        p = pred[a] == pred[b]
        g = gt[a] == gt[b]
        same_pred += p
        same_gt += g
        both += p and g
    expected = same_pred * same_gt / pairs
    maximum = (same_pred + same_gt) / 2
    if maximum == expected:
        return 1.0
    return (both - expected) / (maximum - expected)


def _fg_miou_by_enumeration(pred, gt):
    iou, _, gt_labels = pairwise_iou(pred, gt)
    n_pred, n_gt = iou.shape
    padded = np.zeros((max(n_pred, n_gt), n_gt))
    padded[:n_pred] = iou
    best = max(
        sum(padded[rows[c], c] for c in range(n_gt))
        for rows in itertools.permutations(range(padded.shape[0]), n_gt)
    )
    return best / len(gt_labels)


def _relabel(labels, seed):
    mapping = np.random.default_rng(seed).permutation(10) + 1
    return mapping[labels]


# ---------------------------------------------------------------------------
# ARI
# ---------------------------------------------------------------------------

def test_identical_partitions_score_one():
    gt = np.array([[0, 0, 1], [2, 2, 1]])
    assert ari(gt, gt) == 1.0
    assert ari(gt, gt, foreground_only=True) == 1.0


def test_trivial_partitions_score_one():
    assert ari(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0


@given(label_maps, label_maps)
def test_ari_matches_pair_counting(pred, gt):
    assert ari(pred, gt) == pytest.approx(_ari_by_pair_counting(pred, gt), abs=1e-9)


@given(label_maps, label_maps, st.integers(0, 1000))
def test_ari_is_invariant_to_relabeling(pred, gt, seed):
    assert ari(_relabel(pred, seed), gt) == pytest.approx(ari(pred, gt), abs=1e-12)


def test_fg_ari_ignores_background_pixels():
    gt = np.array([[0, 0, 1, 1], [0, 0, 2, 2]])
    pred = np.array([[5, 6, 1, 1], [7, 8, 2, 2]])
    assert ari(pred, gt, foreground_only=True) == 1.0
    assert ari(pred, gt) < 1.0


def test_fg_ari_without_foreground_raises():
    with pytest.raises(ValueError):
        ari(np.zeros((2, 2)), np.zeros((2, 2)), foreground_only=True)


def test_ari_needs_two_pixels():
    with pytest.raises(ValueError):
        ari(np.array([1]), np.array([1]))


# ---------------------------------------------------------------------------
# Matched IoU
# ---------------------------------------------------------------------------

def test_perfect_segmentation():
    gt = np.array([[0, 1, 1], [0, 2, 2], [3, 3, 0]])
    pred = _relabel(gt, 3) * (gt > 0)
    assert fg_miou(pred, gt) == 1.0
    assert average_recall(pred, gt) == 1.0


def test_all_background_prediction_scores_zero():
    gt = np.array([[0, 1], [2, 2]])
    pred = np.zeros_like(gt)
    assert fg_miou(pred, gt) == 0.0
    assert average_recall(pred, gt) == 0.0


def test_average_recall_threshold():
    gt = np.array([[1, 1, 1, 1, 1], [2, 2, 2, 2, 2]])
    # object 1 matched exactly, object 2 split so its best IoU is 2/5
    pred = np.array([[1, 1, 1, 1, 1], [2, 2, 3, 3, 4]])
    assert average_recall(pred, gt, 0.5) == 0.5
    assert fg_miou(pred, gt) == pytest.approx((1.0 + 0.4) / 2)


def test_unmatched_objects_count_as_zero():
    gt = np.array([[1, 2, 3]])
    pred = np.array([[1, 1, 1]])
    assert fg_miou(pred, gt) == pytest.approx((1 / 3) / 3)


@given(label_maps, label_maps)
def test_fg_miou_matches_exhaustive_assignment(pred, gt):
    if not (gt > 0).any():
        with pytest.raises(ValueError):
            fg_miou(pred, gt)
        return
    assert fg_miou(pred, gt) == pytest.approx(_fg_miou_by_enumeration(pred, gt), abs=1e-9)


@given(label_maps, st.integers(0, 1000))
def test_fg_miou_invariant_to_pred_relabeling(gt, seed):
    if not (gt > 0).any():
        return
    pred = np.roll(gt, 1, axis=1)
    relabeled = _relabel(pred, seed) * (pred > 0)
    assert fg_miou(relabeled, gt) == pytest.approx(fg_miou(pred, gt), abs=1e-12)


# ---------------------------------------------------------------------------
# Image quality
# ---------------------------------------------------------------------------

def test_psnr_of_offset_frames():
    target = np.zeros((3, 8, 8), dtype=np.float64)
    assert abs(psnr(target + 0.1, target) - 20.0) < 1e-9


def test_psnr_of_identical_frames_is_infinite():
    frame = np.random.default_rng(0).random((3, 8, 8))
    assert psnr(frame, frame) == math.inf


def _ssim_by_loops(x, y, window=7, k1=0.01, k2=0.03):
    c1, c2 = k1 ** 2, k2 ** 2
    values = []
    for i in range(x.shape[0] - window + 1):
        for j in range(x.shape[1] - window + 1):
            a = x[i:i + window, j:j + window].ravel()
            b = y[i:i + window, j:j + window].ravel()
            mu_a, mu_b = a.mean(), b.mean()
            var_a = ((a - mu_a) ** 2).mean()
            var_b = ((b - mu_b) ** 2).mean()
            cov = ((a - mu_a) * (b - mu_b)).mean()
            values.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


def test_ssim_matches_loop_oracle():
    rng = np.random.default_rng(1)
    x = rng.random((3, 10, 9))
    y = np.clip(x + 0.1 * rng.standard_normal(x.shape), 0, 1)
    assert ssim(x, y) == pytest.approx(_ssim_by_loops(x.mean(0), y.mean(0)), abs=1e-9)


def test_ssim_of_identical_frames_is_one():
    frame = np.random.default_rng(2).random((3, 8, 8))
    assert ssim(frame, frame) == pytest.approx(1.0, abs=1e-12)


def test_ssim_rejects_small_frames():
    with pytest.raises(ValueError):
        ssim(np.zeros((3, 6, 8)), np.zeros((3, 6, 8)))


# ---------------------------------------------------------------------------
# Temporal consistency
# ---------------------------------------------------------------------------

def _two_object_sequence(steps):
    gt = np.zeros((steps, 4, 4), dtype=np.int64)
    gt[:, :, :2] = 1
    gt[:, :, 2:] = 2
    return gt


def test_stable_assignment_is_fully_consistent():
    gt = _two_object_sequence(3)
    assert temporal_consistency_index(gt.copy(), gt) == 1.0


def test_swapped_assignment_breaks_one_pair():
    gt = _two_object_sequence(3)
    pred = gt.copy()
    pred[2] = 3 - gt[2]
    assert temporal_consistency_index(pred, gt) == 0.5


def test_objects_missing_from_a_frame_are_ignored():
    gt = _two_object_sequence(2)
    gt[1][gt[1] == 2] = 0
    pred = gt.copy()
    pred[1][gt[1] == 0] = 4
    assert temporal_consistency_index(pred, gt) == 1.0


def test_tci_needs_two_frames():
    gt = _two_object_sequence(1)
    with pytest.raises(ValueError):
        temporal_consistency_index(gt, gt)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def test_frame_average_skips_undefined_frames():
    gt = np.stack([np.zeros((2, 2)), np.array([[0, 1], [1, 1]])]).astype(np.int64)
    pred = gt.copy()
    assert frame_average(fg_miou, pred, gt) == 1.0
    assert math.isnan(frame_average(fg_miou, pred[:1], gt[:1]))


def test_segmentation_scores_mark_empty_frames_nan():
    gt = np.stack([np.zeros((2, 2)), np.array([[0, 1], [1, 1]])]).astype(np.int64)
    scores = segmentation_scores(gt.copy(), gt)
    assert math.isnan(scores["fg_ari"][0])
    assert scores["fg_miou"][1] == 1.0
    assert scores["ari"] == [1.0, 1.0]


@pytest.mark.parametrize("seed", range(5))
def test_average_recall_invariant_to_pred_relabeling(seed):
    gt = np.array([[1, 1, 1, 1, 1], [2, 2, 2, 2, 2], [0, 3, 3, 3, 0]])
    pred = np.array([[1, 1, 1, 1, 2], [2, 2, 2, 3, 4], [0, 3, 3, 4, 0]])
    relabeled = _relabel(pred, seed) * (pred > 0)
    assert average_recall(relabeled, gt) == average_recall(pred, gt)


def test_psnr_matches_loop_oracle():
    rng = np.random.default_rng(3)
    pred, target = rng.random((3, 5, 4)), rng.random((3, 5, 4))
    total = 0.0
    for value_a, value_b in zip(pred.ravel(), target.ravel()):
        total += (value_a - value_b) ** 2
    expected = 10 * math.log10(1.0 / (total / pred.size))
    assert psnr(pred, target) == pytest.approx(expected, abs=1e-9)


def test_ssim_of_inverted_frame_is_below_one():
    frame = np.random.default_rng(4).random((3, 8, 8))
    assert ssim(1.0 - frame, frame) < 1.0
