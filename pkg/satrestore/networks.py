"""
Encoders, decoders and the feature discriminator.

Every encoder stage is conv(4x4, stride 2) -> optional instance norm -> ReLU, so an
encoder of depth d downsamples by 2**d. The final latent is a bias-free 1x1
projection of the last stage; content and distortion latents therefore share a
shape and are combined by elementwise addition. The content latent is additionally
instance-normalized (no learned affine) and every discriminator layer is
spectrally normalized.
"""

from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm

from satrestore.errors import ShapeError
from satrestore.models import FeatureMap, ImageTensor, RunConfig

# Keeps discriminator scores strictly inside (0, 1) in float32
_PROB_EPS = 1e-7


def _norm(kind: str, channels: int) -> list[nn.Module]:
    if kind == "instance":
        return [nn.InstanceNorm2d(channels, affine=True)]
    if kind == "none":
        return []
    raise ValueError(f"unknown normalization '{kind}'")


class EncoderNet(nn.Module):
    def __init__(
        self,
        role: str,
        base_width: int,
        depth: int,
        norm: str = "instance",
        normalize_latent: bool = False,
    ):
        super().__init__()
        if base_width < 1 or depth < 1:
            raise ShapeError(f"encoder needs positive width and depth, got {base_width}, {depth}")
        self.role = role
        self.base_width = base_width
        self.depth = depth
        self.norm = norm
        self.normalize_latent = normalize_latent

        stages = []
        in_ch = 3
        for i in range(depth):
            out_ch = base_width * 2 ** i
            stages.append(nn.Sequential(
                nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1, bias=False),
                *_norm(norm, out_ch),
                nn.ReLU(),
            ))
            in_ch = out_ch
        self.stages = nn.ModuleList(stages)
        self.project = nn.Conv2d(in_ch, in_ch, kernel_size=1, bias=False)
        # No affine: adds no checkpoint tensors
        self.latent_norm = nn.InstanceNorm2d(in_ch) if normalize_latent else nn.Identity()

    @property
    def downsample(self) -> int:
        return 2 ** self.depth

    @property
    def latent_channels(self) -> int:
        return self.base_width * 2 ** (self.depth - 1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        intermediates = []
        for stage in self.stages:
            x = stage(x)
            intermediates.append(x)
        return self.latent_norm(self.project(x)), intermediates

    def descriptor(self) -> dict:
        return {
            "kind": "encoder", "role": self.role, "base_width": self.base_width,
            "depth": self.depth, "norm": self.norm, "normalize_latent": self.normalize_latent,
        }


class DecoderNet(nn.Module):
    """Mirror of EncoderNet: nearest upsampling + conv per stage, sigmoid output."""

    def __init__(self, base_width: int, depth: int, norm: str = "instance"):
        super().__init__()
        if base_width < 1 or depth < 1:
            raise ShapeError(f"decoder needs positive width and depth, got {base_width}, {depth}")
        self.base_width = base_width
        self.depth = depth
        self.norm = norm

        stages = []
        in_ch = base_width * 2 ** (depth - 1)
        for i in reversed(range(depth)):
            out_ch = base_width * 2 ** max(i - 1, 0)
            stages.append(nn.Sequential(
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
                *_norm(norm, out_ch),
                nn.ReLU(),
            ))
            in_ch = out_ch
        self.stages = nn.Sequential(*stages)
        self.head = nn.Conv2d(in_ch, 3, kernel_size=3, padding=1)

    @property
    def latent_channels(self) -> int:
        return self.base_width * 2 ** (self.depth - 1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.head(self.stages(z)))

    def descriptor(self) -> dict:
        return {"kind": "decoder", "base_width": self.base_width, "depth": self.depth,
                "norm": self.norm}


class FeatureDiscriminatorNet(nn.Module):
    """
    Scores a latent feature map; forward() returns the logit.

    All layers are spectrally normalized. In training mode each forward pass advances
    the power iteration, so use eval mode where repeated scores must agree.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.body = nn.Sequential(
            spectral_norm(nn.Conv2d(channels, channels, kernel_size=3, stride=2, padding=1)),
            nn.LeakyReLU(0.2),
            spectral_norm(nn.Conv2d(channels, channels, kernel_size=3, stride=1, padding=1)),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            spectral_norm(nn.Linear(channels, 1)),
        )

    def forward(self, fmap: torch.Tensor) -> torch.Tensor:
        return self.body(fmap).squeeze(-1)

    def probability(self, fmap: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self(fmap)).clamp(_PROB_EPS, 1.0 - _PROB_EPS)

    def descriptor(self) -> dict:
        return {"kind": "discriminator", "channels": self.channels}


class Networks(NamedTuple):
    content_encoder: EncoderNet
    distortion_encoder: EncoderNet
    decoder: DecoderNet
    restoration_decoder: DecoderNet
    discriminator: FeatureDiscriminatorNet


def check_latent_size(height: int, width: int, downsample: int) -> None:
    # instance norm needs more than one spatial element
    if (height // downsample) * (width // downsample) < 2:
        raise ShapeError(
            f"input {height}x{width} leaves a single latent cell at downsampling factor {downsample}"
        )


def check_input_shape(input_shape: tuple[int, ...], downsample: int) -> None:
    if len(input_shape) != 3 or input_shape[0] != 3:
        raise ShapeError(f"input shape must be (3, H, W), got {tuple(input_shape)}")
    _, h, w = input_shape
    if h % downsample or w % downsample:
        raise ShapeError(f"input {h}x{w} is not divisible by the downsampling factor {downsample}")
    check_latent_size(h, w, downsample)


def build_networks(cfg: RunConfig, input_shape: tuple[int, int, int]) -> Networks:
    """Build all five networks deterministically from cfg.seed, without touching global RNG state."""
    if cfg.base_width < 1 or cfg.depth < 1:
        raise ShapeError(f"base_width and depth must be positive, got {cfg.base_width}, {cfg.depth}")
    check_input_shape(input_shape, cfg.downsample)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        content = EncoderNet(
            "content", cfg.base_width, cfg.depth, norm="instance", normalize_latent=True,
        )
        distortion = EncoderNet("distortion", cfg.base_width, cfg.depth, norm=cfg.distortion_norm)
        decoder = DecoderNet(cfg.base_width, cfg.depth)
        restoration = DecoderNet(cfg.base_width, cfg.depth)
        discriminator = FeatureDiscriminatorNet(content.latent_channels)
    return Networks(content, distortion, decoder, restoration, discriminator)


def from_descriptor(desc: dict) -> nn.Module:
    """Rebuild an (uninitialised) network from a checkpoint architecture descriptor."""
    kind = desc["kind"]
    if kind == "encoder":
        return EncoderNet(
            desc["role"], desc["base_width"], desc["depth"], norm=desc["norm"],
            normalize_latent=desc.get("normalize_latent", False),
        )
    if kind == "decoder":
        return DecoderNet(desc["base_width"], desc["depth"], norm=desc["norm"])
    if kind == "discriminator":
        return FeatureDiscriminatorNet(desc["channels"])
    raise ValueError(f"unknown network kind '{kind}'")


def encode(net: EncoderNet, img: ImageTensor) -> tuple[FeatureMap, list[FeatureMap]]:
    check_input_shape(img.shape, net.downsample)
    with torch.no_grad():
        latent, intermediates = net(img.batch())
    return (
        FeatureMap(latent[0], role=net.role),
        [FeatureMap(f[0], role=net.role) for f in intermediates],
    )


def decode(net: DecoderNet, fmap: FeatureMap) -> ImageTensor:
    if fmap.shape[0] != net.latent_channels:
        raise ShapeError(
            f"decoder expects {net.latent_channels} latent channels, got {fmap.shape[0]}"
        )
    with torch.no_grad():
        out = net(fmap.batch())
    return ImageTensor.from_batch(out)


def discriminate(net: FeatureDiscriminatorNet, fmap: FeatureMap) -> float:
    if fmap.shape[0] != net.channels:
        raise ShapeError(f"discriminator expects {net.channels} channels, got {fmap.shape[0]}")
    was_training = net.training
    net.eval()
    try:
        with torch.no_grad():
            return net.probability(fmap.batch()).item()
    finally:
        net.train(was_training)


def pad_to_multiple(x: torch.Tensor, factor: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad a (N, C, H, W) batch on the bottom/right to multiples of `factor`."""
    h, w = x.shape[-2:]
    pad_h = -h % factor
    pad_w = -w % factor
    # reflect padding needs the pad to be smaller than the padded dimension
    if pad_h >= h or pad_w >= w:
        raise ShapeError(f"image {h}x{w} is too small to pad to a multiple of {factor}")
    check_latent_size(h + pad_h, w + pad_w, factor)
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
    return x, (h, w)


def crop_to(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    return x[..., : size[0], : size[1]]


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())
