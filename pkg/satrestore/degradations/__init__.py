"""
Degradation registry.

Synthetic degradations give (clean, distorted) validation pairs with known ground truth.
To add a new kind:
1. Subclass BaseDegradation in <kind>.py, setting `kind` and the neutral `defaults`
2. Implement validate() and apply()
3. Register it in the DEGRADATIONS dict below

Spec strings list stages separated by ';', each `<kind> key=value ...`, with
comma-separated values for vector parameters:

    color_cast gains=0.8,1.1,0.8; gaussian_blur sigma=1.5; haze t=0.7 airlight=0.9
"""

import numpy as np
import torch

from satrestore.degradations.base import BaseDegradation
from satrestore.degradations.blur import GaussianBlur
from satrestore.degradations.colorcast import ColorCast
from satrestore.degradations.compose import Compose
from satrestore.degradations.haze import Haze
from satrestore.degradations.noise import GaussianNoise
from satrestore.errors import DegradationError, ShapeError
from satrestore.models import DegradationSpec, ImageTensor

DEGRADATIONS: dict[str, type[BaseDegradation]] = {
    "color_cast": ColorCast,
    "gaussian_blur": GaussianBlur,
    "haze": Haze,
    "gaussian_noise": GaussianNoise,
}


def build(spec: DegradationSpec) -> BaseDegradation:
    if spec.kind == "compose":
        return Compose(spec, [build(s) for s in spec.stages])
    if spec.kind not in DEGRADATIONS:
        raise DegradationError(
            f"unknown degradation '{spec.kind}' (available: {', '.join(sorted(DEGRADATIONS))})"
        )
    return DEGRADATIONS[spec.kind](spec)


def apply_degradation(img: ImageTensor, spec: DegradationSpec) -> ImageTensor:
    out = build(spec).apply(img.data.double().numpy())
    return ImageTensor(torch.from_numpy(out.astype(np.float32)))


def parse_spec(text: str, seed: int = 0) -> DegradationSpec:
    stages = [part.strip() for part in text.split(";") if part.strip()]
    if not stages:
        raise DegradationError("empty degradation spec")
    specs = [_parse_stage(part, seed + i) for i, part in enumerate(stages)]
    if len(specs) == 1:
        return specs[0]
    return DegradationSpec(kind="compose", seed=seed, stages=tuple(specs))


def _parse_stage(text: str, seed: int) -> DegradationSpec:
    kind, *tokens = text.split()
    params = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep:
            raise DegradationError(f"{kind}: expected key=value, got '{token}'")
        try:
            numbers = tuple(float(v) for v in value.split(","))
        except ValueError:
            raise DegradationError(f"{kind}: '{value}' is not a number list") from None
        params[key] = numbers if len(numbers) > 1 else numbers[0]
    spec = DegradationSpec(kind=kind, params=params, seed=seed)
    build(spec)  # validates kind and parameter domains
    return spec


def format_spec(spec: DegradationSpec) -> str:
    if spec.kind == "compose":
        return "; ".join(format_spec(s) for s in spec.stages)
    parts = [spec.kind]
    for key, value in spec.params.items():
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        parts.append(f"{key}={value}")
    return " ".join(parts)


def make_validation_pair(
    clean: ImageTensor,
    spec: DegradationSpec,
    offset: tuple[int, int] = (16, 16),
) -> tuple[ImageTensor, ImageTensor, ImageTensor]:
    """
    Cut two equally sized crops of `clean`, shifted by `offset`, to emulate a
    reference captured at a different time.

    Returns (reference, distorted, ground_truth): the reference is the top-left crop,
    the ground truth the shifted crop, and the distorted image is the degraded ground truth.
    """
    dy, dx = offset
    _, h, w = clean.shape
    if dy < 0 or dx < 0:
        raise ShapeError(f"offset must be non-negative, got {offset}")
    if dy >= h or dx >= w:
        raise ShapeError(f"image {h}x{w} is too small for two crops shifted by {offset}")

    reference = ImageTensor(clean.data[:, : h - dy, : w - dx].clone())
    ground_truth = ImageTensor(clean.data[:, dy:, dx:].clone())
    distorted = apply_degradation(ground_truth, spec)
    return reference, distorted, ground_truth
