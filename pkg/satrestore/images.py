from pathlib import Path

import cv2
import numpy as np
import torch

from satrestore.errors import ImageError
from satrestore.models import ImageTensor

_SCALES = {np.dtype(np.uint8): 255.0, np.dtype(np.uint16): 65535.0}


def load_image(path: Path) -> ImageTensor:
    """Read an 8-bit or 16-bit RGB raster and scale it into [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise ImageError(f"image not found: {path}")
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise ImageError(f"cannot decode {path}")

    scale = _SCALES.get(arr.dtype)
    if scale is None:
        raise ImageError(f"{path}: unsupported sample type {arr.dtype} (need 8 or 16 bit)")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageError(f"{path}: expected a 3-channel RGB image, got shape {arr.shape}")

    rgb = cv2.cvtColor(arr, cv2.COLOR_BGR2RGB)
    data = torch.from_numpy(rgb.transpose(2, 0, 1).astype(np.float32) / np.float32(scale))
    return ImageTensor(data.contiguous())


def to_uint8(img: ImageTensor) -> np.ndarray:
    """Quantize to an (H, W, 3) RGB uint8 array, rounding to the nearest level."""
    arr = img.data.detach().cpu().numpy().transpose(1, 2, 0)
    return np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: ImageTensor, path: Path) -> None:
    """Write an 8-bit PNG (or any format OpenCV infers from the suffix)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bgr = cv2.cvtColor(to_uint8(img), cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), bgr):
        raise ImageError(f"cannot write {path}")


def quantize(img: ImageTensor) -> ImageTensor:
    """The image exactly as save_image followed by load_image would return it."""
    arr = to_uint8(img).transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)
    return ImageTensor(torch.from_numpy(arr).contiguous())
