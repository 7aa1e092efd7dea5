import numpy as np
import pytest
import torch
from torch.autograd import gradcheck

from models.dynamics import (
    SlotDynamics,
    SlotTrajectory,
    block_causal_mask,
    dynamics_loss,
    persistence_baseline,
)
from models.schemas import DynamicsConfig
from utils.errors import ShapeMismatchError


@pytest.fixture
def dynamics():
    torch.manual_seed(0)
    cfg = DynamicsConfig(burnin=3, rollout=2, num_layers=2, num_heads=2, d_model=16, ffn_dim=32)
    return SlotDynamics(cfg, slot_dim=8).double().eval()


def test_block_causal_mask():
    mask = block_causal_mask(2, 2)
    expected = torch.tensor([
        [False, False, True, True],
        [False, False, True, True],
        [False, False, False, False],
        [False, False, False, False],
    ])
    assert torch.equal(mask, expected)


def test_forward_predicts_every_position(dynamics):
    traj = torch.randn(2, 3, 4, 8, dtype=torch.float64)
    assert dynamics(traj).shape == (2, 3, 4, 8)


def test_future_steps_do_not_leak(dynamics):
    traj = torch.randn(1, 3, 4, 8, dtype=torch.float64)
    changed = traj.clone()
    changed[:, 2] += 5.0

    torch.testing.assert_close(dynamics(traj)[:, :2], dynamics(changed)[:, :2], atol=1e-10, rtol=0)


def test_predict_next_is_slot_permutation_equivariant(dynamics):
    traj = torch.randn(3, 4, 8, dtype=torch.float64)
    perm = torch.tensor([3, 1, 0, 2])

    base = dynamics.predict_next(traj)
    permuted = dynamics.predict_next(traj[:, perm])
    torch.testing.assert_close(permuted, base[perm], atol=1e-6, rtol=0)


def test_rollout_matches_repeated_predict_next(dynamics):
    burnin = torch.randn(3, 2, 8, dtype=torch.float64)
    rolled = dynamics.rollout(burnin, 4)

    context = burnin
    expected = []
    for _ in range(4):
        step = dynamics.predict_next(context[-3:])
        expected.append(step)
        context = torch.cat([context, step[None]], dim=0)

    assert rolled.shape == (4, 2, 8)
    torch.testing.assert_close(rolled, torch.stack(expected), atol=1e-10, rtol=0)


def test_context_longer_than_maximum_rejected(dynamics):
    with pytest.raises(ValueError):
        dynamics(torch.randn(1, 4, 2, 8, dtype=torch.float64))


def test_wrong_slot_size_rejected(dynamics):
    with pytest.raises(ShapeMismatchError):
        dynamics(torch.randn(1, 2, 2, 5, dtype=torch.float64))


def test_rollout_needs_a_step(dynamics):
    with pytest.raises(ValueError):
        dynamics.rollout(torch.randn(2, 2, 8, dtype=torch.float64), 0)


def test_persistence_repeats_last_slots():
    burnin = torch.randn(2, 3, 4, 5)
    baseline = persistence_baseline(burnin, 3)
    assert baseline.shape == (2, 3, 4, 5)
    for step in range(3):
        assert torch.equal(baseline[:, step], burnin[:, -1])


def test_dynamics_loss_sums_slot_and_frame_terms():
    pred_slots = torch.randn(2, 3, 4, 5, dtype=torch.float64)
    target_slots = torch.randn(2, 3, 4, 5, dtype=torch.float64)
    pred_frames = torch.rand(2, 3, 3, 4, 4, dtype=torch.float64)
    target_frames = torch.rand(2, 3, 3, 4, 4, dtype=torch.float64)

    slot_mse = ((pred_slots - target_slots) ** 2).mean()
    frame_mse = ((pred_frames - target_frames) ** 2).mean()

    both = dynamics_loss(pred_slots, target_slots, pred_frames, target_frames)
    slots_only = dynamics_loss(pred_slots, target_slots)
    assert float(both) == pytest.approx(float(slot_mse + frame_mse), abs=1e-12)
    assert float(slots_only) == pytest.approx(float(slot_mse), abs=1e-12)


def test_dynamics_loss_rejects_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        dynamics_loss(torch.zeros(1, 2, 3, 4), torch.zeros(1, 2, 3, 5))


def test_dynamics_loss_gradients_match_finite_differences():
    pred = torch.randn(1, 2, 2, 3, dtype=torch.float64, requires_grad=True)
    target = torch.randn(1, 2, 2, 3, dtype=torch.float64)
    frames = torch.rand(1, 2, 3, 2, 2, dtype=torch.float64, requires_grad=True)
    target_frames = torch.rand(1, 2, 3, 2, 2, dtype=torch.float64)
    assert gradcheck(
        lambda p, f: dynamics_loss(p, target, f, target_frames),
        (pred, frames), eps=1e-6, atol=1e-5, rtol=1e-3,
    )


def test_trajectory_validation():
    with pytest.raises(ValueError):
        SlotTrajectory(slots=np.zeros((3, 2, 4)), episode_id="a", burnin=4)
    with pytest.raises(ValueError):
        SlotTrajectory(slots=np.full((3, 2, 4), np.nan), episode_id="b")
    assert SlotTrajectory(slots=np.zeros((3, 2, 4)), episode_id="c", burnin=3).burnin == 3


def test_single_step_rollout_equals_predict_next(dynamics):
    burnin = torch.randn(2, 3, 4, 8, dtype=torch.float64)
    torch.testing.assert_close(dynamics.rollout(burnin, 1)[:, 0], dynamics.predict_next(burnin), atol=0, rtol=0)


def test_rollout_is_deterministic(dynamics):
    burnin = torch.randn(2, 3, 4, 8, dtype=torch.float64)
    assert torch.equal(dynamics.rollout(burnin, 5), dynamics.rollout(burnin, 5))


def _linear_motion(count, steps, generator):
    """Slots moving at constant velocity: s_t = s_0 + t * v"""
    start = torch.randn(count, 1, 2, 4, generator=generator)
    velocity = torch.randn(count, 1, 2, 4, generator=generator)
    times = torch.arange(steps, dtype=torch.float32).reshape(1, steps, 1, 1)
    return start + times * velocity


def test_trained_rollout_beats_persistence_on_linear_motion():
    torch.manual_seed(0)
    cfg = DynamicsConfig(burnin=3, rollout=2, num_layers=2, num_heads=2, d_model=32, ffn_dim=64)
    model = SlotDynamics(cfg, slot_dim=4)
    optimizer = torch.optim.Adam(model.parameters(), lr=3e-3)
    generator = torch.Generator().manual_seed(0)

    model.train()
    for _ in range(400):
        traj = _linear_motion(64, 4, generator)
        loss = dynamics_loss(model(traj[:, :3]), traj[:, 1:])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    model.eval()

    held_out = _linear_motion(256, 5, torch.Generator().manual_seed(1))
    burnin, future = held_out[:, :3], held_out[:, 3:]
    with torch.no_grad():
        rollout_mse = float(dynamics_loss(model.rollout(burnin, 2), future))
    persistence_mse = float(dynamics_loss(persistence_baseline(burnin, 2), future))

    assert rollout_mse <= persistence_mse
