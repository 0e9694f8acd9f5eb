import csv
from pathlib import Path

import numpy as np
from skimage.metrics import mean_squared_error, structural_similarity

from satrestore.errors import ShapeError
from satrestore.models import EvalReport, EvalRow, ImageTensor

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114]).reshape(3, 1, 1)


def _arrays(a: ImageTensor, b: ImageTensor) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare images of shapes {a.shape} and {b.shape}")
    return a.data.detach().double().numpy(), b.data.detach().double().numpy()


def psnr(a: ImageTensor, b: ImageTensor) -> float:
    """PSNR in dB at data range 1.0; identical images give PSNR_CAP_DB."""
    x, y = _arrays(a, b)
    mse = mean_squared_error(x, y)
    if mse == 0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def ssim(a: ImageTensor, b: ImageTensor) -> float:
    """Mean SSIM of the BT.601 luminance, Gaussian window (11, sigma 1.5), K1=0.01, K2=0.03."""
    x, y = _arrays(a, b)
    if min(x.shape[1:]) < SSIM_WINDOW:
        raise ShapeError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    luma_x = (x * _LUMA).sum(axis=0)
    luma_y = (y * _LUMA).sum(axis=0)
    return float(structural_similarity(
        luma_x, luma_y,
        data_range=1.0,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=0.01,
        K2=0.03,
    ))


def evaluate(images: dict[str, ImageTensor], reference: ImageTensor) -> EvalReport:
    """Score every named image against the same full reference."""
    report = EvalReport()
    for name, img in images.items():
        value = psnr(img, reference)
        report.rows.append(EvalRow(
            image=name,
            psnr_db=value,
            ssim=ssim(img, reference),
            capped=value == PSNR_CAP_DB and np.array_equal(img.data, reference.data),
        ))
    return report


def write_report_csv(report: EvalReport, path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image", "psnr_db", "ssim", "capped"])
        for row in [*report.rows, report.aggregate()]:
            writer.writerow([row.image, f"{row.psnr_db:.6f}", f"{row.ssim:.6f}", int(row.capped)])
