"""Procedural aerial-style scene: crop fields, a road grid and building blocks."""

import numpy as np
import torch
from skimage.draw import line_aa, rectangle
from skimage.filters import gaussian

from satrestore.models import ImageTensor

_FIELD_COLOURS = np.array([
    [0.36, 0.48, 0.22],   # pasture
    [0.55, 0.50, 0.30],   # stubble
    [0.28, 0.38, 0.18],   # dense crop
    [0.47, 0.36, 0.25],   # ploughed
    [0.62, 0.60, 0.42],   # dry grass
])
_ROOF_COLOURS = np.array([
    [0.70, 0.68, 0.66],
    [0.58, 0.30, 0.24],
    [0.40, 0.42, 0.46],
    [0.85, 0.84, 0.80],
])


def aerial_scene(size: int = 256, seed: int = 0) -> ImageTensor:
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size, 3))

    # Fields: nearest-seed (Voronoi) partition with per-field colour and row texture
    n_fields = max(4, size // 24)
    seeds = rng.uniform(0, size, size=(n_fields, 2))
    yy, xx = np.mgrid[0:size, 0:size]
    dist = (yy[..., None] - seeds[:, 0]) ** 2 + (xx[..., None] - seeds[:, 1]) ** 2
    owner = dist.argmin(axis=-1)
    colours = _FIELD_COLOURS[rng.integers(0, len(_FIELD_COLOURS), size=n_fields)]
    angles = rng.uniform(0, np.pi, size=n_fields)
    rows = np.sin((xx * np.cos(angles[owner]) + yy * np.sin(angles[owner])) * 0.8)
    img[:] = colours[owner] * (1.0 + 0.06 * rows[..., None])

    # Roads
    for _ in range(max(2, size // 96)):
        for horizontal in (True, False):
            a, b = rng.integers(0, size, size=2)
            r0, c0, r1, c1 = (a, 0, b, size - 1) if horizontal else (0, a, size - 1, b)
            for w in range(-1, 2):
                rr, cc, val = line_aa(
                    int(np.clip(r0 + w, 0, size - 1)), c0, int(np.clip(r1 + w, 0, size - 1)), c1,
                )
                img[rr, cc] = img[rr, cc] * (1 - val[:, None]) + 0.52 * val[:, None]

    # Buildings
    for _ in range(size // 8):
        h, w = rng.integers(4, 14, size=2)
        r, c = rng.integers(0, size - 14, size=2)
        rr, cc = rectangle((r, c), extent=(h, w), shape=img.shape[:2])
        roof = _ROOF_COLOURS[rng.integers(0, len(_ROOF_COLOURS))]
        img[rr, cc] = roof
        # Shadow on the south-east edge
        rr, cc = rectangle((r + h, c + 1), extent=(2, w), shape=img.shape[:2])
        img[rr, cc] *= 0.45

    img += rng.normal(0.0, 0.015, size=img.shape)
    img = gaussian(img, sigma=0.6, channel_axis=-1, preserve_range=True)
    img = np.clip(img, 0.0, 1.0)
    return ImageTensor(torch.from_numpy(img.transpose(2, 0, 1).astype(np.float32)))
