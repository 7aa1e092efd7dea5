import pytest
import torch
from torch.autograd import gradcheck

from models.backbone import FeatureGrid
from models.slot_core import SlotAttention
from utils.errors import ShapeMismatchError
from utils.seeding import make_generator


def _features(batch=2, positions=16, dim=8, dtype=torch.float64):
    side = int(positions ** 0.5)
    return FeatureGrid(values=torch.randn(batch, positions, dim, dtype=dtype), grid_shape=(side, side))


@pytest.fixture
def slot_attention():
    torch.manual_seed(0)
    return SlotAttention(enc_dim=8, slot_dim=6, mlp_hidden=12).double()


def test_attention_columns_sum_to_one(slot_attention):
    features = _features()
    init = torch.randn(2, 3, 6, dtype=torch.float64)
    slots, attn = slot_attention(features, init, num_iterations=3)

    assert slots.shape == (2, 3, 6)
    assert attn.weights.shape == (2, 3, 16)
    torch.testing.assert_close(attn.weights.sum(dim=1), torch.ones(2, 16, dtype=torch.float64))
    assert attn.grid_shape == (4, 4)


def test_slot_permutation_equivariance(slot_attention):
    features = _features()
    init = torch.randn(2, 3, 6, dtype=torch.float64)
    perm = torch.tensor([1, 2, 0])

    slots, attn = slot_attention(features, init, 3)
    slots_p, attn_p = slot_attention(features, init[:, perm], 3)

    torch.testing.assert_close(slots_p, slots[:, perm], atol=1e-10, rtol=0)
    torch.testing.assert_close(attn_p.weights, attn.weights[:, perm], atol=1e-10, rtol=0)


def test_zero_iterations_return_init_slots(slot_attention):
    features = _features()
    init = torch.randn(2, 3, 6, dtype=torch.float64)
    slots, attn = slot_attention(features, init, 0)

    assert torch.equal(slots, init)
    torch.testing.assert_close(attn.weights.sum(dim=1), torch.ones(2, 16, dtype=torch.float64))


def test_negative_iterations_rejected(slot_attention):
    with pytest.raises(ValueError):
        slot_attention(_features(), torch.randn(2, 3, 6, dtype=torch.float64), -1)


def test_shape_mismatch_rejected(slot_attention):
    with pytest.raises(ShapeMismatchError):
        slot_attention(_features(dim=5), torch.randn(2, 3, 6, dtype=torch.float64), 1)
    with pytest.raises(ShapeMismatchError):
        slot_attention(_features(), torch.randn(2, 3, 4, dtype=torch.float64), 1)


def test_gradients_match_finite_differences():
    torch.manual_seed(1)
    module = SlotAttention(enc_dim=4, slot_dim=4, mlp_hidden=8).double()
    values = torch.randn(1, 4, 4, dtype=torch.float64, requires_grad=True)
    init = torch.randn(1, 2, 4, dtype=torch.float64, requires_grad=True)

    def run(v, s):
        return module(FeatureGrid(values=v, grid_shape=(2, 2)), s, 2)[0]

    assert gradcheck(run, (values, init), eps=1e-6, atol=1e-5, rtol=1e-3)


def test_gaussian_init_matches_parameters():
    module = SlotAttention(enc_dim=4, slot_dim=2, mlp_hidden=4)
    with torch.no_grad():
        module.slots_mu.copy_(torch.tensor([[[0.5, -1.0]]]))
        module.slots_log_sigma.copy_(torch.log(torch.tensor([[[0.3, 2.0]]])))

    samples = module.init_slots_gaussian(20000, 1, make_generator(0)).reshape(-1, 2)
    torch.testing.assert_close(samples.mean(0), torch.tensor([0.5, -1.0]), atol=0.05, rtol=0)
    torch.testing.assert_close(samples.std(0), torch.tensor([0.3, 2.0]), atol=0.05, rtol=0)


def test_gaussian_init_is_seeded():
    module = SlotAttention(enc_dim=4, slot_dim=4, mlp_hidden=4)
    first = module.init_slots_gaussian(2, 3, make_generator(5))
    second = module.init_slots_gaussian(2, 3, make_generator(5))
    assert torch.equal(first, second)
    assert first.shape == (2, 3, 4)


def test_slot_and_attention_gradients_match_finite_differences():
    torch.manual_seed(2)
    module = SlotAttention(enc_dim=4, slot_dim=4, mlp_hidden=8).double()
    values = torch.randn(1, 4, 4, dtype=torch.float64, requires_grad=True)
    init = torch.randn(1, 2, 4, dtype=torch.float64, requires_grad=True)
    slot_weight = torch.randn(1, 2, 4, dtype=torch.float64)
    attn_weight = torch.randn(1, 2, 4, dtype=torch.float64)

    def run(v, s):
        slots, attn = module(FeatureGrid(values=v, grid_shape=(2, 2)), s, 2)
        return (slots * slot_weight).sum() + (attn.weights * attn_weight).sum()

    assert gradcheck(run, (values, init), eps=1e-6, atol=1e-5, rtol=1e-3)
