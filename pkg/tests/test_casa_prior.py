import math

import pytest
import torch
from torch.autograd import gradcheck
from torch.distributions import Normal, kl_divergence

from models.casa_prior import SlotPrior, kl_loss
from utils.errors import ShapeMismatchError
from utils.seeding import make_generator


def _prior(tiny_model_cfg, kind):
    torch.manual_seed(0)
    return SlotPrior(tiny_model_cfg.model_copy(update={"prior_kind": kind})).double()


def test_kl_vanishes_at_target_scale():
    mean = torch.randn(2, 3, 4, dtype=torch.float64)
    log_var = torch.full_like(mean, 2.0 * math.log(0.1))
    assert abs(float(kl_loss(mean, log_var, 0.1))) < 1e-12


def test_kl_matches_closed_form_gaussian_kl():
    mean = torch.randn(2, 3, 4, dtype=torch.float64)
    log_var = torch.randn(2, 3, 4, dtype=torch.float64)
    expected = kl_divergence(Normal(mean, torch.exp(0.5 * log_var)), Normal(mean, 0.1)).mean()
    assert float(kl_loss(mean, log_var, 0.1)) == pytest.approx(float(expected), abs=1e-9)


def test_kl_is_non_negative():
    log_var = torch.linspace(-10, 3, 50, dtype=torch.float64)
    values = [float(kl_loss(torch.zeros(1, dtype=torch.float64), lv.reshape(1), 0.1)) for lv in log_var]
    assert min(values) >= -1e-12


def test_kl_rejects_bad_inputs():
    mean = torch.zeros(2, 2)
    with pytest.raises(ValueError):
        kl_loss(mean, torch.zeros(2, 2), sigma_hat=0.0)
    with pytest.raises(ValueError):
        kl_loss(mean, torch.tensor([[0.0, float("nan")], [0.0, 0.0]]))
    with pytest.raises(ShapeMismatchError):
        kl_loss(mean, torch.zeros(2, 3))


def test_kl_gradients_match_finite_differences():
    mean = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
    log_var = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
    assert gradcheck(lambda m, lv: kl_loss(m, lv, 0.1), (mean, log_var), eps=1e-6, atol=1e-5, rtol=1e-3)


def test_none_prior_passes_slots_through(tiny_model_cfg):
    prior = _prior(tiny_model_cfg, "none")
    slots = torch.randn(2, 3, 16, dtype=torch.float64)
    hidden = prior.initial_hidden(2, 3, like=slots)
    out = prior(slots, hidden)

    assert torch.equal(out.init_slots, slots)
    assert out.log_var is None
    assert out.noise is None


def test_deterministic_mode_returns_mean(tiny_model_cfg):
    prior = _prior(tiny_model_cfg, "gru")
    slots = torch.randn(2, 3, 16, dtype=torch.float64)
    out = prior(slots, prior.initial_hidden(2, 3, like=slots), stochastic=False)

    assert torch.equal(out.init_slots, out.mean)
    assert out.noise is None
    assert out.log_var.shape == (2, 3, 16)
    assert out.new_hidden.shape == (2, 3, 16)


def test_stochastic_sample_is_reparameterized(tiny_model_cfg):
    prior = _prior(tiny_model_cfg, "gru")
    slots = torch.randn(2, 3, 16, dtype=torch.float64)
    hidden = prior.initial_hidden(2, 3, like=slots)

    first = prior(slots, hidden, generator=make_generator(3))
    second = prior(slots, hidden, generator=make_generator(3))

    assert torch.equal(first.init_slots, second.init_slots)
    expected = first.mean + torch.exp(0.5 * first.log_var) * first.noise
    torch.testing.assert_close(first.init_slots, expected)


@pytest.mark.parametrize("kind", ["gru", "mlp"])
def test_prior_is_slot_permutation_equivariant(tiny_model_cfg, kind):
    prior = _prior(tiny_model_cfg, kind)
    slots = torch.randn(2, 3, 16, dtype=torch.float64)
    hidden = torch.randn(2, 3, 16, dtype=torch.float64)
    perm = torch.tensor([2, 0, 1])

    base = prior(slots, hidden, stochastic=False)
    permuted = prior(slots[:, perm], hidden[:, perm], stochastic=False)

    torch.testing.assert_close(permuted.mean, base.mean[:, perm], atol=1e-10, rtol=0)
    torch.testing.assert_close(permuted.log_var, base.log_var[:, perm], atol=1e-10, rtol=0)
    torch.testing.assert_close(permuted.new_hidden, base.new_hidden[:, perm], atol=1e-10, rtol=0)


def test_mlp_prior_keeps_hidden_state(tiny_model_cfg):
    prior = _prior(tiny_model_cfg, "mlp")
    slots = torch.randn(1, 3, 16, dtype=torch.float64)
    hidden = torch.randn(1, 3, 16, dtype=torch.float64)
    assert torch.equal(prior(slots, hidden).new_hidden, hidden)


def test_prior_rejects_mismatched_hidden(tiny_model_cfg):
    prior = _prior(tiny_model_cfg, "gru")
    with pytest.raises(ShapeMismatchError):
        prior(torch.randn(1, 3, 16, dtype=torch.float64), torch.zeros(1, 2, 16, dtype=torch.float64))


def test_tiny_variance_sample_collapses_to_mean(tiny_model_cfg):
    prior = _prior(tiny_model_cfg, "gru")
    last = prior.head[-1]
    with torch.no_grad():
        last.weight[16:].zero_()
        last.bias[16:].fill_(-50.0)

    slots = torch.randn(2, 3, 16, dtype=torch.float64)
    out = prior(slots, prior.initial_hidden(2, 3, like=slots), generator=make_generator(5), stochastic=True)

    assert torch.all(out.log_var == -50.0)
    assert float((out.init_slots - out.mean).abs().max()) < 1e-10


def test_deterministic_unroll_is_repeatable(tiny_model_cfg):
    prior = _prior(tiny_model_cfg, "gru")
    start = torch.randn(2, 3, 16, dtype=torch.float64)

    def unroll(steps=6):
        slots, hidden = start, prior.initial_hidden(2, 3, like=start)
        trajectory = []
        for _ in range(steps):
            out = prior(slots, hidden, stochastic=False)
            slots, hidden = out.init_slots, out.new_hidden
            trajectory.append(slots)
        return torch.stack(trajectory)

    assert torch.equal(unroll(), unroll())
