import math
from dataclasses import replace

import pytest
import torch
from torch import nn

from satrestore.errors import ShapeError
from satrestore.losses import (
    cyclic_loss,
    feature_adversarial_loss,
    feature_regularization_loss,
    mse_loss,
    total_loss,
)
from satrestore.models import FeatureMap, ImageTensor, RunConfig
from satrestore.networks import FeatureDiscriminatorNet

GRADCHECK = {"eps": 1e-4, "rtol": 1e-3, "atol": 1e-6}


class ConstantLogit(nn.Module):
    """Stand-in discriminator returning a fixed logit per input."""

    def __init__(self, real: float, fake: float):
        super().__init__()
        self.real = real
        self.fake = fake

    def forward(self, x):
        value = self.real if x[0, 0, 0, 0] > 0 else self.fake
        return torch.full((x.shape[0],), value, dtype=x.dtype)


def _disc64(channels: int = 2) -> FeatureDiscriminatorNet:
    torch.manual_seed(0)
    # eval mode freezes the spectral-norm power iteration between evaluations
    return FeatureDiscriminatorNet(channels).double().eval()


def _latent(seed: int, shape=(1, 2, 2, 2)) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


# --- feature adversarial loss ---

def test_adversarial_loss_at_even_odds():
    ones, neg = torch.ones(1, 2, 2, 2), -torch.ones(1, 2, 2, 2)
    d_loss, g_loss = feature_adversarial_loss(ones, neg, ConstantLogit(0.0, 0.0))
    assert d_loss.item() == pytest.approx(2 * math.log(2), abs=1e-6)
    assert g_loss.item() == pytest.approx(math.log(2), abs=1e-6)


def test_adversarial_loss_optimal_discriminator_limit():
    ones, neg = torch.ones(1, 2, 2, 2), -torch.ones(1, 2, 2, 2)
    d_loss, _ = feature_adversarial_loss(ones, neg, ConstantLogit(40.0, -40.0))
    assert 0.0 <= d_loss.item() < 1e-12


def test_adversarial_loss_decreases_as_discriminator_improves():
    ones, neg = torch.ones(1, 2, 2, 2), -torch.ones(1, 2, 2, 2)
    losses = [
        feature_adversarial_loss(ones, neg, ConstantLogit(k, -k))[0].item()
        for k in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)
    ]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_adversarial_loss_finite_for_saturated_scores():
    ones, neg = torch.ones(1, 2, 2, 2), -torch.ones(1, 2, 2, 2)
    d_loss, g_loss = feature_adversarial_loss(ones, neg, ConstantLogit(-200.0, 200.0))
    assert torch.isfinite(d_loss) and torch.isfinite(g_loss)


def test_adversarial_loss_shape_mismatch():
    disc = FeatureDiscriminatorNet(2)
    with pytest.raises(ShapeError):
        feature_adversarial_loss(torch.zeros(1, 2, 2, 2), torch.zeros(1, 2, 4, 4), disc)


def test_generator_loss_gradient_matches_finite_differences():
    disc = _disc64()
    f_rc = _latent(1)
    f_dc = _latent(2).requires_grad_()
    assert torch.autograd.gradcheck(
        lambda x: feature_adversarial_loss(f_rc, x, disc)[1], (f_dc,), **GRADCHECK,
    )


def test_discriminator_loss_gradient_matches_finite_differences():
    disc = _disc64()
    f_rc = _latent(3).requires_grad_()
    f_dc = _latent(4).requires_grad_()
    assert torch.autograd.gradcheck(
        lambda a, b: feature_adversarial_loss(a, b, disc)[0], (f_rc, f_dc), **GRADCHECK,
    )


# --- feature regularization loss ---

def test_regularization_hand_arithmetic():
    fmap = FeatureMap(torch.tensor([[[1.0, -1.0], [2.0, 0.0]]]), role="distortion")
    assert feature_regularization_loss([fmap]).item() == pytest.approx(1.0)


def test_regularization_zero_maps():
    maps = [torch.zeros(4, 8, 8), torch.zeros(8, 4, 4)]
    assert feature_regularization_loss(maps).item() == 0.0


def test_regularization_normalizes_by_total_count():
    maps = [torch.ones(1, 2, 2), torch.zeros(1, 2, 2)]
    assert feature_regularization_loss(maps).item() == pytest.approx(0.5)


def test_regularization_homogeneous():
    maps = [_latent(5, (4, 4, 4)), _latent(6, (8, 2, 2))]
    base = feature_regularization_loss(maps).item()
    for c in (-3.0, 0.5, 2.0):
        scaled = feature_regularization_loss([c * m for m in maps]).item()
        assert scaled == pytest.approx(abs(c) * base, rel=1e-12)


def test_regularization_gradient_is_sign_over_count():
    x = torch.tensor([[[0.5, -1.5], [2.0, -0.25]]], dtype=torch.float64, requires_grad=True)
    feature_regularization_loss([x]).backward()
    assert torch.equal(x.grad, torch.sign(x.detach()) / 4)
    y = _latent(7, (2, 2, 2)).requires_grad_()
    assert torch.autograd.gradcheck(lambda t: feature_regularization_loss([t]), (y,), **GRADCHECK)


def test_regularization_empty_list():
    with pytest.raises(ValueError):
        feature_regularization_loss([])


# --- cyclic and mse losses ---

def test_cyclic_loss_values():
    zeros, ones = torch.zeros(3, 2, 2), torch.ones(3, 2, 2)
    assert cyclic_loss(zeros, ones).item() == 1.0
    assert cyclic_loss(ImageTensor(ones), ImageTensor(ones)).item() == 0.0


def test_cyclic_loss_symmetric():
    a, b = _latent(8, (3, 4, 4)), _latent(9, (3, 4, 4))
    assert cyclic_loss(a, b).item() == cyclic_loss(b, a).item()


def test_cyclic_loss_gradient():
    target = _latent(10, (1, 3, 2, 2))
    x = _latent(11, (1, 3, 2, 2)).requires_grad_()
    assert torch.autograd.gradcheck(lambda t: cyclic_loss(t, target), (x,), **GRADCHECK)


def test_mse_values_and_gradient():
    zeros, ones = torch.zeros(3, 2, 2), torch.ones(3, 2, 2)
    assert mse_loss(zeros, ones).item() == 1.0
    assert mse_loss(ones, ones).item() == 0.0

    target = _latent(12, (1, 3, 2, 2))
    x = _latent(13, (1, 3, 2, 2)).requires_grad_()
    mse_loss(x, target).backward()
    assert torch.allclose(x.grad, 2 * (x.detach() - target) / x.numel())
    assert torch.autograd.gradcheck(lambda t: mse_loss(t, target), (x,), **GRADCHECK)


def test_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        cyclic_loss(torch.zeros(3, 2, 2), torch.zeros(3, 2, 3))
    with pytest.raises(ShapeError):
        mse_loss(torch.zeros(3, 2, 2), torch.zeros(3, 4, 2))


def test_losses_non_negative():
    for seed in range(5):
        a, b = _latent(seed, (3, 4, 4)), _latent(seed + 100, (3, 4, 4))
        assert cyclic_loss(a, b).item() >= 0
        assert mse_loss(a, b).item() >= 0
        assert feature_regularization_loss([a, b]).item() >= 0


# --- total loss ---

def test_total_loss_with_default_weights():
    cfg = RunConfig()
    assert total_loss(0.5, 0.1, 0.2, 0.3, cfg) == pytest.approx(2.0)
    assert total_loss(0.0, 0.0, 0.0, 0.0, cfg) == 0.0


def test_total_loss_linear_in_lambda_reg():
    cfg = RunConfig()
    doubled = replace(cfg, lambda_reg=2 * cfg.lambda_reg)
    base = total_loss(0.5, 0.1, 0.2, 0.3, cfg)
    assert total_loss(0.5, 0.1, 0.2, 0.3, doubled) - base == pytest.approx(0.1 * cfg.lambda_reg)


def test_total_loss_on_tensors():
    parts = [torch.tensor(v, requires_grad=True) for v in (0.5, 0.1, 0.2, 0.3)]
    total = total_loss(*parts, RunConfig())
    total.backward()
    assert [p.grad.item() for p in parts] == [1.0, 10.0, 1.0, 1.0]
