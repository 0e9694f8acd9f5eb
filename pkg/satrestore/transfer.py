"""
Distortion transfer: stamp graded amounts of the distorted image's distortion
latent onto the reference and write the resulting supervised pairs.

For alpha = 1..n the distorted reference is D(F_rc + alpha_scale * alpha * F_dd),
where F_rc is the content latent of the reference and F_dd the distortion latent
of the distorted image. Note that with the default alpha_scale 0.1 and n = 100 the
distortion latent is weighted up to 10x, far beyond the weight 1.0 the decoder saw
during cyclic training.
"""

import logging
from pathlib import Path

import torch

from satrestore.ddn import DDNBundle
from satrestore.errors import ImageError, ShapeError
from satrestore.images import load_image, save_image
from satrestore.models import DistilledPair, FeatureMap, ImageTensor, RunConfig
from satrestore.networks import crop_to, pad_to_multiple

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
CLEAN_NAME = "clean.png"
PAIRS_DIR = "pairs"
SWEEP_NAME = "sweep.png"


def _whole_image_latent(net, img: ImageTensor) -> FeatureMap:
    x, _ = pad_to_multiple(img.batch(), net.downsample)
    with torch.no_grad():
        latent, _ = net(x)
    return FeatureMap(latent[0], role=net.role)


def transfer_latents(
    bundle: DDNBundle,
    reference: ImageTensor,
    distorted: ImageTensor,
) -> tuple[FeatureMap, FeatureMap]:
    """Content latent of the reference and distortion latent of the distorted image."""
    f_rc = _whole_image_latent(bundle.content_encoder, reference)
    f_dd = _whole_image_latent(bundle.distortion_encoder, distorted)
    if f_rc.shape != f_dd.shape:
        raise ShapeError(
            f"reference latent {f_rc.shape} and distortion latent {f_dd.shape} differ; "
            "reference and distorted images must have the same size"
        )
    return f_rc, f_dd


def combine_latents(f_rc: FeatureMap, f_dd: FeatureMap, alpha: int, alpha_scale: float) -> FeatureMap:
    return f_rc + f_dd.scaled(alpha_scale * alpha)


def _decode_to(bundle: DDNBundle, latent: FeatureMap, size: tuple[int, int]) -> ImageTensor:
    with torch.no_grad():
        out = bundle.decoder(latent.batch())
    return ImageTensor.from_batch(crop_to(out, size))


def transfer_distortion(
    bundle: DDNBundle,
    reference: ImageTensor,
    distorted: ImageTensor,
    alpha: int,
) -> ImageTensor:
    if alpha < 0:
        raise ValueError(f"alpha must be ≥ 0, got {alpha}")
    f_rc, f_dd = transfer_latents(bundle, reference, distorted)
    latent = combine_latents(f_rc, f_dd, alpha, bundle.config.alpha_scale)
    return _decode_to(bundle, latent, (reference.height, reference.width))


def generate_kd_dataset(
    bundle: DDNBundle,
    reference: ImageTensor,
    distorted: ImageTensor,
    cfg: RunConfig,
    out_dir: Path,
) -> list[DistilledPair]:
    """
    Write pairs/alpha_<k>.png for k = 1..cfg.n_alpha, clean.png and manifest.txt.

    Returns the pairs as read back from disk, so in-memory and reloaded datasets agree.
    """
    out_dir = Path(out_dir)
    (out_dir / PAIRS_DIR).mkdir(parents=True, exist_ok=True)

    f_rc, f_dd = transfer_latents(bundle, reference, distorted)
    size = (reference.height, reference.width)

    entries = []
    for alpha in range(1, cfg.n_alpha + 1):
        latent = combine_latents(f_rc, f_dd, alpha, cfg.alpha_scale)
        filename = f"{PAIRS_DIR}/alpha_{alpha}.png"
        save_image(_decode_to(bundle, latent, size), out_dir / filename)
        entries.append((alpha, filename))

    save_image(reference, out_dir / CLEAN_NAME)
    _write_sweep(out_dir, reference, cfg.n_alpha)
    with open(out_dir / MANIFEST_NAME, "w", encoding="utf-8") as f:
        for alpha, filename in entries:
            f.write(f"{alpha} {filename}\n")

    log.info("wrote %d distorted pairs to %s", len(entries), out_dir)
    return load_kd_dataset(out_dir)


def _write_sweep(out_dir: Path, reference: ImageTensor, n_alpha: int) -> None:
    levels = sorted({1, max(1, n_alpha // 4), max(1, n_alpha // 2), n_alpha})
    tiles = [reference.data]
    for alpha in levels:
        tiles.append(load_image(out_dir / PAIRS_DIR / f"alpha_{alpha}.png").data)
    save_image(ImageTensor(torch.cat(tiles, dim=2)), out_dir / SWEEP_NAME)


def load_kd_dataset(directory: Path) -> list[DistilledPair]:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.exists():
        raise ImageError(f"no dataset manifest at {manifest}")

    clean = load_image(directory / CLEAN_NAME)
    pairs = []
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        alpha, filename = line.split(maxsplit=1)
        distorted = load_image(directory / filename)
        if distorted.shape != clean.shape:
            raise ShapeError(f"{filename} has shape {distorted.shape}, clean image {clean.shape}")
        pairs.append(DistilledPair(distorted=distorted, clean=clean, alpha=int(alpha)))
    return pairs
