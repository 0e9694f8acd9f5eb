"""
Distortion disentanglement: joint training of the content encoder, distortion
encoder, decoder and feature discriminator on one reference and one distorted image.
"""

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from tqdm import tqdm

from satrestore.checkpoint import CheckpointManifest, load_checkpoint, save_checkpoint
from satrestore.config import from_dict
from satrestore.errors import CheckpointError, DivergenceError, ShapeError
from satrestore.losses import (
    cyclic_loss,
    feature_adversarial_loss,
    feature_regularization_loss,
    total_loss,
)
from satrestore.models import ImageTensor, LossReport, RunConfig
from satrestore.networks import (
    DecoderNet,
    EncoderNet,
    FeatureDiscriminatorNet,
    build_networks,
    crop_to,
    pad_to_multiple,
)

log = logging.getLogger(__name__)

LOSS_LOG_NAME = "ddn_loss.csv"
FINAL_DIR = "final"


@dataclass(eq=False)
class DDNBundle:
    content_encoder: EncoderNet
    distortion_encoder: EncoderNet
    decoder: DecoderNet
    discriminator: FeatureDiscriminatorNet
    config: RunConfig
    report: LossReport | None = None
    iteration: int = 0

    def networks(self) -> dict[str, nn.Module]:
        return {
            "content_encoder": self.content_encoder,
            "distortion_encoder": self.distortion_encoder,
            "decoder": self.decoder,
            "discriminator": self.discriminator,
        }

    def generator_parameters(self) -> list[nn.Parameter]:
        return [
            *self.content_encoder.parameters(),
            *self.distortion_encoder.parameters(),
            *self.decoder.parameters(),
        ]

    def save(self, directory: Path) -> CheckpointManifest:
        extra = {"report": asdict(self.report)} if self.report else {}
        return save_checkpoint(directory, self.networks(), self.config, self.iteration, extra)

    @classmethod
    def load(cls, directory: Path) -> "DDNBundle":
        manifest, nets = load_checkpoint(directory)
        missing = {"content_encoder", "distortion_encoder", "decoder", "discriminator"} - set(nets)
        if missing:
            raise CheckpointError(f"{directory} is not a DDN checkpoint (missing {sorted(missing)})")
        report = manifest.extra.get("report")
        return cls(
            content_encoder=nets["content_encoder"],
            distortion_encoder=nets["distortion_encoder"],
            decoder=nets["decoder"],
            discriminator=nets["discriminator"],
            config=from_dict(manifest.config),
            report=LossReport(**report) if report else None,
            iteration=manifest.iteration,
        )


@dataclass
class DDNOptimizers:
    generator: torch.optim.Optimizer
    discriminator: torch.optim.Optimizer


def build_bundle(cfg: RunConfig) -> DDNBundle:
    nets = build_networks(cfg, (3, cfg.patch_size, cfg.patch_size))
    return DDNBundle(
        content_encoder=nets.content_encoder,
        distortion_encoder=nets.distortion_encoder,
        decoder=nets.decoder,
        discriminator=nets.discriminator,
        config=cfg,
    )


def make_optimizers(bundle: DDNBundle, cfg: RunConfig) -> DDNOptimizers:
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    return DDNOptimizers(
        generator=torch.optim.Adam(bundle.generator_parameters(), lr=cfg.learning_rate, betas=betas),
        discriminator=torch.optim.Adam(
            bundle.discriminator.parameters(), lr=cfg.learning_rate, betas=betas,
        ),
    )


def patch_origin(height: int, width: int, size: int, rng: np.random.Generator) -> tuple[int, int]:
    if height < size or width < size:
        raise ShapeError(f"image {height}x{width} is smaller than the patch size {size}")
    y = int(rng.integers(0, height - size + 1))
    x = int(rng.integers(0, width - size + 1))
    return y, x


def sample_patch(img: ImageTensor, size: int, rng: np.random.Generator) -> ImageTensor:
    """Uniformly random size x size crop."""
    y, x = patch_origin(img.height, img.width, size, rng)
    return ImageTensor(img.data[:, y:y + size, x:x + size])


def _check_finite(terms: dict[str, torch.Tensor], step: int) -> None:
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise DivergenceError(name, step, value.item())


def training_step(
    bundle: DDNBundle,
    reference: ImageTensor,
    distorted: ImageTensor,
    optimizers: DDNOptimizers,
    step: int = 0,
) -> LossReport:
    """One discriminator update followed by one update of both encoders and the decoder."""
    cfg = bundle.config
    i_r, i_d = reference.batch(), distorted.batch()

    f_rc, _ = bundle.content_encoder(i_r)
    f_dc, _ = bundle.content_encoder(i_d)
    f_rd, rd_intermediates = bundle.distortion_encoder(i_r)
    f_dd, _ = bundle.distortion_encoder(i_d)

    # Discriminator: reference content features are real, distorted ones fake
    adv_d, _ = feature_adversarial_loss(f_rc.detach(), f_dc.detach(), bundle.discriminator)
    _check_finite({"adv_d": adv_d}, step)
    optimizers.discriminator.zero_grad()
    adv_d.backward()
    optimizers.discriminator.step()

    _, adv_g = feature_adversarial_loss(f_rc, f_dc, bundle.discriminator)
    reg = feature_regularization_loss(rd_intermediates)
    d_cy = cyclic_loss(bundle.decoder(f_dc + f_dd), i_d)
    r_cy = cyclic_loss(bundle.decoder(f_rc + f_rd), i_r)
    total = total_loss(adv_g, reg, d_cy, r_cy, cfg)
    _check_finite({"adv_g": adv_g, "reg": reg, "d_cy": d_cy, "r_cy": r_cy, "total": total}, step)

    optimizers.generator.zero_grad()
    total.backward()
    optimizers.generator.step()

    return LossReport(
        adv_d=adv_d.item(),
        adv_g=adv_g.item(),
        reg=reg.item(),
        d_cy=d_cy.item(),
        r_cy=r_cy.item(),
        total=total.item(),
    )


def train_ddn(
    reference: ImageTensor,
    distorted: ImageTensor,
    cfg: RunConfig,
    out_dir: Path | None = None,
) -> DDNBundle:
    """
    Train the disentanglement networks for cfg.ddn_iterations steps.

    Each step crops one random patch from each image independently; the two images
    need not be aligned. With `out_dir`, writes the loss log, a checkpoint every
    cfg.checkpoint_every steps under checkpoints/, and the final bundle under final/.
    """
    for name, img in (("reference", reference), ("distorted", distorted)):
        if img.height < cfg.patch_size or img.width < cfg.patch_size:
            raise ShapeError(
                f"{name} image {img.height}x{img.width} is smaller than patch size {cfg.patch_size}"
            )

    bundle = build_bundle(cfg)
    optimizers = make_optimizers(bundle, cfg)
    rng = np.random.default_rng(cfg.seed)

    log_file = None
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / LOSS_LOG_NAME, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(["iteration", *LossReport.COLUMNS])

    try:
        for it in tqdm(range(1, cfg.ddn_iterations + 1), desc="DDN", unit="it", disable=None):
            i_r = sample_patch(reference, cfg.patch_size, rng)
            i_d = sample_patch(distorted, cfg.patch_size, rng)
            report = training_step(bundle, i_r, i_d, optimizers, step=it)
            bundle.report = report
            bundle.iteration = it

            if writer is not None:
                writer.writerow(report.as_row(it))
            if it % cfg.log_every == 0:
                log.info(
                    "iter %d: total=%.4f reg=%.4f d_cy=%.4f r_cy=%.4f adv_g=%.4f adv_d=%.4f",
                    it, report.total, report.reg, report.d_cy, report.r_cy,
                    report.adv_g, report.adv_d,
                )
            if out_dir is not None and it % cfg.checkpoint_every == 0:
                bundle.save(out_dir / "checkpoints" / f"iter_{it:05d}")
    finally:
        if log_file is not None:
            log_file.close()

    if out_dir is not None:
        bundle.save(out_dir / FINAL_DIR)
    return bundle


def distortion_response(bundle: DDNBundle, img: ImageTensor) -> float:
    """Mean absolute activation of the distortion encoder's intermediate maps for `img`."""
    with torch.no_grad():
        x, _ = pad_to_multiple(img.batch(), bundle.distortion_encoder.downsample)
        _, intermediates = bundle.distortion_encoder(x)
        return feature_regularization_loss(intermediates).item()


def reconstruct(bundle: DDNBundle, img: ImageTensor) -> ImageTensor:
    """Cyclic reconstruction D(E_c(x) + E_d(x))."""
    with torch.no_grad():
        x, size = pad_to_multiple(img.batch(), bundle.content_encoder.downsample)
        f_c, _ = bundle.content_encoder(x)
        f_d, _ = bundle.distortion_encoder(x)
        return ImageTensor.from_batch(crop_to(bundle.decoder(f_c + f_d), size))
