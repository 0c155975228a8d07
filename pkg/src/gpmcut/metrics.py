"""Seam and fidelity metrics for composited images.

* seam-gradient (SG) score: mean Sobel gradient magnitude over seam
  pixels, computed on Rec.601 luma scaled to [0, 1], reported next to the
  min/avg/max SG of the stack images over the same seam set;
* PSNR against the hard pixel composite;
* masked SSIM: per-region SSIM of the blend against that region's source
  image using mask-restricted window statistics, area-weighted across
  regions. Restricting the Gaussian window to the region makes a hard
  composite score exactly 1.0 for any partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .errors import ShapeMismatch

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # Rec.601

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 255.0


def to_luma(image: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (H, W) float64 luma on [0, 1]."""
    img = np.asarray(image, dtype=np.float64) / 255.0
    r, g, b = LUMA_WEIGHTS
    return img[..., 0] * r + img[..., 1] * g + img[..., 2] * b


def seam_pixels(fullres_labels: np.ndarray) -> np.ndarray:
    """Boolean (H, W) mask: pixels with any 4-neighbor of a different label."""
    labels = np.asarray(fullres_labels)
    seam = np.zeros(labels.shape, dtype=bool)
    horizontal = labels[:, :-1] != labels[:, 1:]
    seam[:, :-1] |= horizontal
    seam[:, 1:] |= horizontal
    vertical = labels[:-1, :] != labels[1:, :]
    seam[:-1, :] |= vertical
    seam[1:, :] |= vertical
    return seam


def _sobel_magnitude(luma: np.ndarray) -> np.ndarray:
    """3x3 Sobel magnitude, kernels normalized by 1/8, edges replicated."""
    padded = np.pad(luma, 1, mode="edge")
    # correlate with [[-1,0,1],[-2,0,2],[-1,0,1]] / 8 and its transpose
    gx = (
        (padded[:-2, 2:] - padded[:-2, :-2])
        + 2.0 * (padded[1:-1, 2:] - padded[1:-1, :-2])
        + (padded[2:, 2:] - padded[2:, :-2])
    ) / 8.0
    gy = (
        (padded[2:, :-2] - padded[:-2, :-2])
        + 2.0 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
        + (padded[2:, 2:] - padded[:-2, 2:])
    ) / 8.0
    return np.hypot(gx, gy)


def sg_score(image: np.ndarray, seam_mask: np.ndarray) -> float:
    """Mean Sobel gradient magnitude over seam pixels; 0.0 when no seam."""
    seam_mask = np.asarray(seam_mask, dtype=bool)
    if not seam_mask.any():
        return 0.0
    return float(_sobel_magnitude(to_luma(image))[seam_mask].mean())


@dataclass(frozen=True)
class SeamReport:
    sg_score: float
    stack_min: float
    stack_avg: float
    stack_max: float
    n_seam_pixels: int
    empty_seam: bool

    def to_json(self) -> dict:
        return {
            "score": self.sg_score,
            "stack_min": self.stack_min,
            "stack_avg": self.stack_avg,
            "stack_max": self.stack_max,
            "n_seam_pixels": self.n_seam_pixels,
            "empty_seam": self.empty_seam,
        }


def seam_report(blended: np.ndarray, stack_images: np.ndarray,
                fullres_labels: np.ndarray) -> SeamReport:
    """SG of the blend plus the stack's [min, avg, max] band over one seam set."""
    seam = seam_pixels(fullres_labels)
    empty = not bool(seam.any())
    score = sg_score(blended, seam)
    per_image = [sg_score(img, seam) for img in stack_images]
    return SeamReport(
        sg_score=score,
        stack_min=float(min(per_image)),
        stack_avg=float(np.mean(per_image)),
        stack_max=float(max(per_image)),
        n_seam_pixels=int(seam.sum()),
        empty_seam=empty,
    )


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """20*log10(255 / sqrt(MSE)) over all channels; inf for identical images."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(255.0 / math.sqrt(mse))


def _gaussian_taps(window: int, sigma: float) -> np.ndarray:
    offsets = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _window_sum(field: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = convolve1d(field, taps, axis=0, mode="constant", cval=0.0)
    return convolve1d(out, taps, axis=1, mode="constant", cval=0.0)


def masked_ssim(blended: np.ndarray, stack_images: np.ndarray,
                masks_fullres: np.ndarray) -> float:
    """Area-weighted mean of per-region SSIM with mask-restricted windows.

    For region i, every 11x11 Gaussian window is renormalized over the
    pixels of mask i it covers, and the SSIM map is averaged over centers
    inside the mask. Comparing each region to its own source pixel-exactly
    therefore yields exactly 1.0. Channels are averaged.
    """
    blended = np.asarray(blended)
    masks = np.asarray(masks_fullres)
    if masks.ndim != 3 or masks.shape[1:] != blended.shape[:2]:
        raise ShapeMismatch(
            f"masks shape {masks.shape} does not cover image {blended.shape[:2]}"
        )
    coverage = masks.astype(np.int64).sum(axis=0)
    if not np.all(coverage == 1):
        raise ShapeMismatch("masks must partition the image (one region per pixel)")

    taps = _gaussian_taps(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2

    total = 0.0
    total_area = 0
    for mask_u8, source in zip(masks, stack_images):
        mask = mask_u8.astype(bool)
        area = int(mask.sum())
        if area == 0:
            continue
        weight = mask.astype(np.float64)
        norm = _window_sum(weight, taps)

        region_scores = np.zeros(3, dtype=np.float64)
        for channel in range(3):
            x = blended[..., channel].astype(np.float64) * weight
            y = np.asarray(source)[..., channel].astype(np.float64) * weight
            with np.errstate(invalid="ignore", divide="ignore"):
                mu_x = _window_sum(x, taps) / norm
                mu_y = _window_sum(y, taps) / norm
                e_xx = _window_sum(x * x, taps) / norm
                e_yy = _window_sum(y * y, taps) / norm
                e_xy = _window_sum(x * y, taps) / norm
            var_x = e_xx - mu_x * mu_x
            var_y = e_yy - mu_y * mu_y
            cov_xy = e_xy - mu_x * mu_y
            ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov_xy + c2)) / (
                (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
            )
            region_scores[channel] = ssim_map[mask].mean()
        total += float(region_scores.mean()) * area
        total_area += area
    return total / total_area


@dataclass(frozen=True)
class FidelityReport:
    psnr_db: float
    masked_ssim: float

    @property
    def psnr_infinite(self) -> bool:
        return math.isinf(self.psnr_db)


def metrics_report(blended: np.ndarray, stack_images: np.ndarray,
                   fullres_labels: np.ndarray) -> dict:
    """Full JSON-shaped metrics report for a blended image.

    ``psnr_db`` compares against the hard composite implied by the labels;
    JSON carries no infinity, so identical images emit null plus the
    ``psnr_infinite`` flag.
    """
    labels = np.asarray(fullres_labels)
    n_images = stack_images.shape[0]
    rows = np.arange(labels.shape[0])[:, None]
    cols = np.arange(labels.shape[1])[None, :]
    hard = stack_images[labels, rows, cols]
    masks = (labels[None, :, :] == np.arange(n_images)[:, None, None]).astype(np.uint8)

    seam = seam_report(blended, stack_images, labels)
    psnr_db = psnr(blended, hard)
    ssim_value = masked_ssim(blended, stack_images, masks)
    return {
        "sg": seam.to_json(),
        "psnr_db": None if math.isinf(psnr_db) else psnr_db,
        "psnr_infinite": math.isinf(psnr_db),
        "masked_ssim": ssim_value,
    }
