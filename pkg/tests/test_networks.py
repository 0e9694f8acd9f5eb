import pytest
import torch
from torch import nn

from satrestore.errors import ShapeError
from satrestore.models import FeatureMap, ImageTensor, RunConfig
from satrestore.networks import (
    DecoderNet,
    EncoderNet,
    FeatureDiscriminatorNet,
    build_networks,
    count_parameters,
    crop_to,
    decode,
    discriminate,
    encode,
    from_descriptor,
    pad_to_multiple,
)
from tests.conftest import random_image

CFG = RunConfig(base_width=8, depth=2, seed=1)


@pytest.fixture(scope="module")
def nets():
    return build_networks(CFG, (3, 64, 64))


def test_latent_shapes_match(nets):
    img = random_image(64, 64)
    f_c, inter_c = encode(nets.content_encoder, img)
    f_d, inter_d = encode(nets.distortion_encoder, img)
    assert f_c.shape == f_d.shape == (16, 16, 16)
    assert f_c.role == "content"
    assert f_d.role == "distortion"
    assert len(inter_c) == len(inter_d) == CFG.depth
    assert [f.shape for f in inter_d] == [(8, 32, 32), (16, 16, 16)]


def test_decode_restores_input_shape(nets):
    img = random_image(64, 48)
    f_c, _ = encode(nets.content_encoder, img)
    out = decode(nets.decoder, f_c)
    assert out.shape == img.shape
    assert 0.0 <= out.data.min() and out.data.max() <= 1.0


def test_indivisible_input_rejected(nets):
    with pytest.raises(ShapeError, match="not divisible"):
        encode(nets.content_encoder, random_image(63, 63))
    with pytest.raises(ShapeError):
        build_networks(CFG, (3, 63, 64))


def test_decoder_channel_mismatch(nets):
    with pytest.raises(ShapeError, match="latent channels"):
        decode(nets.decoder, FeatureMap(torch.zeros(3, 4, 4)))


def test_build_is_seed_deterministic():
    a = build_networks(CFG, (3, 64, 64))
    b = build_networks(CFG, (3, 64, 64))
    c = build_networks(RunConfig(base_width=8, depth=2, seed=2), (3, 64, 64))
    img = random_image(64, 64, seed=9)
    za, _ = encode(a.content_encoder, img)
    zb, _ = encode(b.content_encoder, img)
    zc, _ = encode(c.content_encoder, img)
    assert torch.equal(za.data, zb.data)
    assert torch.equal(decode(a.decoder, za).data, decode(b.decoder, zb).data)
    assert not torch.equal(za.data, zc.data)


def test_build_leaves_global_rng_alone():
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    build_networks(CFG, (3, 64, 64))
    assert torch.equal(torch.rand(3), expected)


def test_encoders_share_architecture_not_parameters(nets):
    c = nets.content_encoder.stages[0][0].weight
    d = nets.distortion_encoder.stages[0][0].weight
    assert c.shape == d.shape
    assert not torch.equal(c, d)
    assert c.data_ptr() != d.data_ptr()


def test_zero_image_gives_zero_distortion_intermediates(nets):
    _, intermediates = encode(nets.distortion_encoder, ImageTensor(torch.zeros(3, 32, 32)))
    assert all(f.data.abs().max().item() == 0.0 for f in intermediates)


def test_content_latent_is_instance_normalized(nets):
    img = random_image(64, 64, seed=3)
    f_c, _ = encode(nets.content_encoder, img)
    f_d, _ = encode(nets.distortion_encoder, img)
    flat = f_c.data.flatten(1)
    assert torch.allclose(flat.mean(dim=1), torch.zeros(16), atol=1e-5)
    assert torch.allclose(flat.var(dim=1, unbiased=False), torch.ones(16), atol=1e-2)
    assert not torch.allclose(f_d.data.flatten(1).mean(dim=1), torch.zeros(16), atol=1e-5)


def test_latent_normalization_adds_no_tensors(nets):
    rebuilt = from_descriptor(nets.content_encoder.descriptor())
    assert rebuilt.normalize_latent
    plain = EncoderNet("content", CFG.base_width, CFG.depth, norm="instance")
    assert rebuilt.state_dict().keys() == plain.state_dict().keys()


def test_discriminator_layers_have_unit_spectral_norm():
    torch.manual_seed(0)
    disc = FeatureDiscriminatorNet(16)
    fmap = torch.randn(1, 16, 8, 8)
    with torch.no_grad():
        for _ in range(50):
            disc(fmap)
    disc.eval()
    layers = [m for m in disc.body if isinstance(m, (nn.Conv2d, nn.Linear))]
    assert len(layers) == 3
    for layer in layers:
        w = layer.weight.detach()
        sigma = torch.linalg.matrix_norm(w.reshape(w.shape[0], -1), ord=2).item()
        assert sigma == pytest.approx(1.0, rel=0.05)


def test_discriminator_score_in_open_interval(nets):
    for seed in range(3):
        fmap = FeatureMap(torch.randn(16, 8, 8, generator=torch.Generator().manual_seed(seed)) * 50)
        score = discriminate(nets.discriminator, fmap)
        assert 0.0 < score < 1.0
        assert score == discriminate(nets.discriminator, fmap)
    assert nets.discriminator.training
    with pytest.raises(ShapeError):
        discriminate(nets.discriminator, FeatureMap(torch.zeros(4, 8, 8)))


def test_restoration_decoder_parameter_count(nets):
    fresh = from_descriptor(nets.restoration_decoder.descriptor())
    assert isinstance(fresh, DecoderNet)
    assert count_parameters(fresh) == count_parameters(nets.restoration_decoder)
    assert count_parameters(nets.restoration_decoder) == count_parameters(nets.decoder)


def test_descriptor_round_trip(nets):
    rebuilt = from_descriptor(nets.distortion_encoder.descriptor())
    assert rebuilt.descriptor() == nets.distortion_encoder.descriptor()
    assert rebuilt.norm == "none"


def test_single_latent_cell_rejected():
    with pytest.raises(ShapeError, match="single latent cell"):
        build_networks(CFG, (3, 4, 4))


def test_pad_smaller_than_image_required():
    with pytest.raises(ShapeError, match="too small"):
        pad_to_multiple(torch.rand(1, 3, 3, 12), 8)


def test_pad_then_crop():
    x = torch.rand(1, 3, 61, 50)
    padded, size = pad_to_multiple(x, 8)
    assert padded.shape[-2:] == (64, 56)
    assert torch.equal(crop_to(padded, size), x)
