"""
Training objectives for the disentanglement and restoration networks.

All functions take plain tensors (batched or not) or the ImageTensor/FeatureMap
wrappers and return scalar tensors, so they can be backpropagated through.
Image losses are mean-reduced so the loss weights do not depend on patch size.
"""

import torch
import torch.nn.functional as F

from satrestore.errors import ShapeError
from satrestore.models import FeatureMap, ImageTensor, RunConfig
from satrestore.networks import FeatureDiscriminatorNet

Tensorish = torch.Tensor | ImageTensor | FeatureMap


def _tensor(x: Tensorish) -> torch.Tensor:
    return x.data if isinstance(x, (ImageTensor, FeatureMap)) else x


def _batched(x: Tensorish) -> torch.Tensor:
    t = _tensor(x)
    return t.unsqueeze(0) if t.ndim == 3 else t


def _same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def feature_adversarial_loss(
    f_rc: Tensorish,
    f_dc: Tensorish,
    disc: FeatureDiscriminatorNet,
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    GAN objective on content features: reference features are real, distorted ones fake.

    Returns (discriminator_loss, generator_loss) where
        discriminator_loss = -[log D(f_rc) + log(1 - D(f_dc))]
        generator_loss     = -log D(f_dc)            (non-saturating)
    Both are evaluated from logits through softplus so they stay finite.
    """
    real, fake = _batched(f_rc), _batched(f_dc)
    _same_shape(real, fake)
    real_logit = disc(real)
    fake_logit = disc(fake)
    d_loss = F.softplus(-real_logit).mean() + F.softplus(fake_logit).mean()
    g_loss = F.softplus(-fake_logit).mean()
    return d_loss, g_loss


def feature_regularization_loss(intermediates: list[Tensorish]) -> torch.Tensor:
    """Mean absolute activation over every intermediate map of the distortion encoder."""
    if not intermediates:
        raise ValueError("feature regularization needs at least one feature map")
    maps = [_tensor(f) for f in intermediates]
    total = sum(m.abs().sum() for m in maps)
    count = sum(m.numel() for m in maps)
    return total / count


def cyclic_loss(reconstruction: Tensorish, target: Tensorish) -> torch.Tensor:
    a, b = _tensor(reconstruction), _tensor(target)
    _same_shape(a, b)
    return (a - b).abs().mean()


def mse_loss(prediction: Tensorish, target: Tensorish) -> torch.Tensor:
    a, b = _tensor(prediction), _tensor(target)
    _same_shape(a, b)
    return F.mse_loss(a, b)


def total_loss(adv_g, reg, d_cy, r_cy, cfg: RunConfig):
    """Generator-side weighted sum; works on tensors and on plain floats."""
    return (
        cfg.lambda_adv * adv_g
        + cfg.lambda_reg * reg
        + cfg.lambda_dcy * d_cy
        + cfg.lambda_rcy * r_cy
    )
