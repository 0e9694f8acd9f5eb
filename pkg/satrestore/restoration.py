"""
Restoration by knowledge distillation: the trained content encoder is reused,
frozen, as the encoder of a restoration network whose fresh decoder is fit with
MSE on the distilled pairs. The same builder gives a from-scratch baseline with a
trainable encoder.
"""

import csv
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
from torch import nn
from tqdm import tqdm

from satrestore.checkpoint import (
    CheckpointManifest,
    load_checkpoint,
    parameter_checksum,
    save_checkpoint,
)
from satrestore.ddn import DDNBundle
from satrestore.errors import CheckpointError, DivergenceError, SatRestoreError
from satrestore.losses import mse_loss
from satrestore.models import DistilledPair, ImageTensor, RunConfig
from satrestore.networks import (
    DecoderNet,
    EncoderNet,
    build_networks,
    crop_to,
    pad_to_multiple,
)

log = logging.getLogger(__name__)

LOSS_LOG_NAME = "restore_loss.csv"
FINAL_DIR = "final"


class RestorationNet(nn.Module):
    """
    Encoder plus decoder. A frozen encoder runs under no_grad and is left out of
    trainable_parameters(); its requires_grad flags are not touched, so an encoder
    shared with a DDNBundle stays trainable there.
    """

    def __init__(self, encoder: EncoderNet, decoder: DecoderNet, frozen: bool = True):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder
        self.frozen = frozen
        # Mean training MSE per epoch
        self.history: list[float] = []

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.frozen:
            with torch.no_grad():
                z, _ = self.encoder(x)
        else:
            z, _ = self.encoder(x)
        return self.decoder(z)

    def trainable_parameters(self) -> list[nn.Parameter]:
        if self.frozen:
            return list(self.decoder.parameters())
        return list(self.parameters())

    def save(self, directory: Path, cfg: RunConfig) -> CheckpointManifest:
        return save_checkpoint(
            directory,
            {"content_encoder": self.encoder, "restoration_decoder": self.decoder},
            cfg,
            iteration=len(self.history),
            extra={"frozen": self.frozen, "history": self.history},
        )

    @classmethod
    def load(cls, directory: Path) -> "RestorationNet":
        manifest, nets = load_checkpoint(directory)
        if set(nets) != {"content_encoder", "restoration_decoder"}:
            raise CheckpointError(f"{directory} is not a restoration checkpoint")
        net = cls(nets["content_encoder"], nets["restoration_decoder"],
                  frozen=manifest.extra.get("frozen", True))
        net.history = list(manifest.extra.get("history", []))
        return net


def build_restoration_net(bundle: DDNBundle, cfg: RunConfig, from_scratch: bool = False) -> RestorationNet:
    """
    Pair the bundle's content encoder (frozen) with a freshly initialised decoder.

    With from_scratch, the encoder is a fresh, trainable network of the same shape.
    Architecture always follows the bundle's config; initialisation uses cfg.seed.
    """
    arch = replace(bundle.config, seed=cfg.seed)
    nets = build_networks(arch, (3, 2 * arch.downsample, 2 * arch.downsample))
    if from_scratch:
        return RestorationNet(nets.content_encoder, nets.restoration_decoder, frozen=False)
    return RestorationNet(bundle.content_encoder, nets.restoration_decoder, frozen=True)


def _forward_full(net: RestorationNet, x: torch.Tensor) -> torch.Tensor:
    padded, size = pad_to_multiple(x, net.encoder.downsample)
    return crop_to(net(padded), size)


def _training_views(
    pair: DistilledPair, size: int, rng: np.random.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """The whole pair, or one aligned random crop when the images exceed the patch size."""
    x, y = pair.distorted.batch(), pair.clean.batch()
    h, w = x.shape[-2:]
    if h > size and w > size:
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        x = x[..., top:top + size, left:left + size]
        y = y[..., top:top + size, left:left + size]
    return x, y


def train_restoration(
    bundle: DDNBundle,
    dataset: list[DistilledPair],
    cfg: RunConfig,
    out_dir: Path | None = None,
    from_scratch: bool = False,
) -> RestorationNet:
    """
    Fit the restoration decoder for cfg.restore_epochs epochs, batch size 1.

    Each epoch visits every pair once in shuffled order. With `out_dir`, writes the
    per-epoch loss log and the final checkpoint under final/.
    """
    if not dataset:
        raise ValueError("cannot train restoration on an empty dataset")

    net = build_restoration_net(bundle, cfg, from_scratch=from_scratch)
    encoder_checksum = parameter_checksum(net.encoder)
    optimizer = torch.optim.Adam(
        net.trainable_parameters(), lr=cfg.learning_rate, betas=(cfg.adam_beta1, cfg.adam_beta2),
    )
    rng = np.random.default_rng(cfg.seed)

    log_file = None
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / LOSS_LOG_NAME, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(["epoch", "mse"])

    try:
        for epoch in tqdm(range(1, cfg.restore_epochs + 1), desc="restore", unit="ep", disable=None):
            losses = []
            for idx in rng.permutation(len(dataset)):
                x, y = _training_views(dataset[idx], cfg.patch_size, rng)
                loss = mse_loss(_forward_full(net, x), y)
                if not torch.isfinite(loss):
                    raise DivergenceError("mse", epoch, loss.item())
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(loss.item())

            mean = float(np.mean(losses))
            net.history.append(mean)
            if writer is not None:
                writer.writerow([epoch, mean])
            if epoch % max(1, cfg.log_every // 10) == 0:
                log.info("epoch %d: mse=%.6f", epoch, mean)
    finally:
        if log_file is not None:
            log_file.close()

    if net.frozen and parameter_checksum(net.encoder) != encoder_checksum:
        raise SatRestoreError("frozen content encoder changed during restoration training")

    if out_dir is not None:
        net.save(out_dir / FINAL_DIR, cfg)
    return net


def restore(net: RestorationNet, distorted: ImageTensor) -> ImageTensor:
    """Restored image D_res(E_c(I_d)), same shape as the input."""
    with torch.no_grad():
        return ImageTensor.from_batch(_forward_full(net, distorted.batch()))
