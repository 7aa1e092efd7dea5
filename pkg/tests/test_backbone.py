import pytest
import torch

from models.backbone import ImageEncoder, SpatialBroadcastDecoder, build_grid, masks_from_alpha
from utils.losses import image_loss
from utils.errors import ShapeMismatchError


def test_grid_corners():
    grid = build_grid(4, 5)
    assert grid.shape == (1, 4, 5, 4)
    torch.testing.assert_close(grid[0, 0, 0], torch.tensor([0.0, 0.0, 1.0, 1.0]))
    torch.testing.assert_close(grid[0, -1, -1], torch.tensor([1.0, 1.0, 0.0, 0.0]))


@pytest.mark.parametrize("encoder", ["cnn", "resnet"])
def test_encoder_keeps_full_resolution(tiny_model_cfg, encoder):
    cfg = tiny_model_cfg.model_copy(update={"encoder": encoder})
    features = ImageEncoder(cfg, 16, 16)(torch.rand(2, 3, 16, 16))

    assert features.values.shape == (2, 256, 16)
    assert features.grid_shape == (16, 16)
    assert features.num_positions == 256


def test_encoder_rejects_wrong_frame_size(tiny_model_cfg):
    encoder = ImageEncoder(tiny_model_cfg, 16, 16)
    with pytest.raises(ShapeMismatchError):
        encoder(torch.rand(1, 3, 12, 16))


@pytest.mark.parametrize("broadcast", ["upsample", "full"])
def test_alpha_sums_to_one(tiny_model_cfg, broadcast):
    cfg = tiny_model_cfg.model_copy(update={"decoder_broadcast": broadcast})
    decoded = SpatialBroadcastDecoder(cfg, 16, 16)(torch.randn(2, 3, 16))

    assert decoded.rgb.shape == (2, 3, 16, 16)
    assert decoded.alpha.shape == (2, 3, 16, 16)
    assert decoded.per_slot_rgb.shape == (2, 3, 3, 16, 16)
    torch.testing.assert_close(decoded.alpha.sum(dim=1), torch.ones(2, 16, 16), atol=1e-6, rtol=0)
    assert decoded.alpha.min() >= 0.0


def test_single_slot_decodes_to_its_own_rgb(tiny_model_cfg):
    decoded = SpatialBroadcastDecoder(tiny_model_cfg, 16, 16)(torch.randn(1, 1, 16))
    assert torch.equal(decoded.alpha, torch.ones_like(decoded.alpha))
    torch.testing.assert_close(decoded.rgb, decoded.per_slot_rgb[:, 0])


def test_decoder_is_slot_permutation_equivariant(tiny_model_cfg):
    decoder = SpatialBroadcastDecoder(tiny_model_cfg, 16, 16).double()
    slots = torch.randn(2, 3, 16, dtype=torch.float64)
    perm = torch.tensor([2, 0, 1])

    base = decoder(slots)
    permuted = decoder(slots[:, perm])

    torch.testing.assert_close(permuted.alpha, base.alpha[:, perm], atol=1e-6, rtol=0)
    torch.testing.assert_close(permuted.rgb, base.rgb, atol=1e-6, rtol=0)


def test_decoder_rejects_wrong_slot_size(tiny_model_cfg):
    decoder = SpatialBroadcastDecoder(tiny_model_cfg, 16, 16)
    with pytest.raises(ShapeMismatchError):
        decoder(torch.randn(1, 3, 8))


def test_masks_from_alpha_picks_argmax_and_breaks_ties_low():
    alpha = torch.zeros(3, 2, 2)
    alpha[1, 0, 0] = 1.0
    alpha[2, 1, 1] = 1.0
    alpha[:, 0, 1] = 1.0 / 3.0
    alpha[0, 1, 0] = 1.0

    masks = masks_from_alpha(alpha)
    assert masks.tolist() == [[1, 0], [0, 2]]


def test_masks_from_alpha_of_uniform_alpha_is_all_zero():
    alpha = torch.full((2, 4, 5, 6), 0.25)
    assert torch.equal(masks_from_alpha(alpha), torch.zeros(2, 5, 6, dtype=torch.long))


def test_masks_from_alpha_matches_pixel_loop():
    alpha = torch.softmax(torch.randn(4, 6, 7, generator=torch.Generator().manual_seed(3)), dim=0)
    masks = masks_from_alpha(alpha)

    for y in range(6):
        for x in range(7):
            values = [float(alpha[k, y, x]) for k in range(4)]
            assert int(masks[y, x]) == values.index(max(values))


def test_encode_is_deterministic(tiny_model_cfg):
    torch.manual_seed(0)
    encoder = ImageEncoder(tiny_model_cfg, 16, 16).eval()
    frames = torch.rand(2, 3, 16, 16)
    with torch.no_grad():
        first = encoder.encode(frames).values
        second = encoder.encode(frames).values
    assert torch.equal(first, second)


def test_blank_and_white_frames_give_different_features(tiny_model_cfg):
    torch.manual_seed(1)
    encoder = ImageEncoder(tiny_model_cfg, 16, 16).eval()
    with torch.no_grad():
        zeros = encoder(torch.zeros(1, 3, 16, 16)).values
        ones = encoder(torch.ones(1, 3, 16, 16)).values
    assert not torch.allclose(zeros, ones)


def test_reconstruction_loss_gradient_matches_finite_differences(tiny_model_cfg):
    torch.manual_seed(2)
    cfg = tiny_model_cfg.model_copy(update={"slot_dim": 4, "decoder_channels": 4})
    decoder = SpatialBroadcastDecoder(cfg, 16, 16).double()
    target = torch.rand(1, 3, 16, 16, dtype=torch.float64)
    slots = torch.randn(1, 2, 4, dtype=torch.float64, requires_grad=True)

    def loss(s):
        return image_loss(decoder(s).rgb, target)

    assert torch.autograd.gradcheck(loss, (slots,), eps=1e-6, atol=1e-6, rtol=1e-3)
