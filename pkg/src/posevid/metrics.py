"""Frame-vs-ground-truth image quality metrics: MSE, PSNR, SSIM.

All three operate on the 8-bit scale (values in [0, 255]); SSIM is computed
on Rec.601 luminance with the standard 11x11 Gaussian window.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

PSNR_CAP = 100.0
MSE_EPS = 1e-10

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class MetricReport:
    mse: float
    psnr: float
    ssim: float


def mse(a, b):
    """Mean squared per-pixel difference over all channels."""
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b):
    """10*log10(255^2 / mse), capped at 100 dB for near-zero mse."""
    err = mse(a, b)
    if err < MSE_EPS:
        return PSNR_CAP
    return float(10.0 * np.log10(255.0**2 / err))


def ssim(a, b):
    """Mean structural similarity over all valid 11x11 window positions."""
    a, b = _check_pair(a, b)
    a, b = _to_luma(a), _to_luma(b)
    h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    kernel = gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _filter(a, kernel)
    mu_b = _filter(b, kernel)
    sig_a = _filter(a * a, kernel) - mu_a * mu_a
    sig_b = _filter(b * b, kernel) - mu_b * mu_b
    sig_ab = _filter(a * b, kernel) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * sig_ab + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (sig_a + sig_b + SSIM_C2)
    return float(np.mean(num / den))


def gaussian_window(size, sigma):
    """Normalized 2-D Gaussian kernel."""
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def metric_report(a, b):
    return MetricReport(mse=mse(a, b), psnr=psnr(a, b), ssim=ssim(a, b))


def evaluate_set(pred_dir, truth_dir):
    """Per-frame reports plus arithmetic means for two image directories.

    Directories must contain the same image file names.
    """
    pred_dir, truth_dir = Path(pred_dir), Path(truth_dir)
    pred_names = _image_names(pred_dir)
    truth_names = _image_names(truth_dir)
    if pred_names != truth_names:
        raise ValueError(
            f"manifest mismatch: {pred_dir} has {len(pred_names)} images, "
            f"{truth_dir} has {len(truth_names)}, or names differ"
        )
    if not pred_names:
        raise ValueError("no images to evaluate")
    reports = {}
    for name in pred_names:
        a = _load_8bit(pred_dir / name)
        b = _load_8bit(truth_dir / name)
        reports[name] = metric_report(a, b)
    means = MetricReport(
        mse=float(np.mean([r.mse for r in reports.values()])),
        psnr=float(np.mean([r.psnr for r in reports.values()])),
        ssim=float(np.mean([r.ssim for r in reports.values()])),
    )
    return reports, means


def write_report_csv(path, reports, means):
    """CSV columns frame,mse,psnr,ssim with a final means row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "mse", "psnr", "ssim"])
        for name in sorted(reports):
            r = reports[name]
            writer.writerow([name, f"{r.mse:.6f}", f"{r.psnr:.6f}", f"{r.ssim:.6f}"])
        writer.writerow(["mean", f"{means.mse:.6f}", f"{means.psnr:.6f}", f"{means.ssim:.6f}"])


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _to_luma(img):
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ _LUMA
    raise ValueError(f"expected HxW or HxWx3 image, got shape {img.shape}")


def _filter(img, kernel):
    # valid-mode windowed sum via stride tricks
    k = kernel.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.tensordot(view, kernel, axes=([2, 3], [0, 1]))


def _image_names(directory):
    if not directory.is_dir():
        raise ValueError(f"{directory} is not a directory")
    return sorted(p.name for p in directory.glob("*.png"))


def _load_8bit(path):
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
