"""Quantitative evaluation: PSNR, SSIM, contrast correlation, leakage, halo.

All metrics operate on linear-radiance images in [0, 1]. SSIM uses the
standard parameterization (11x11 Gaussian window, sigma 1.5, K1 = 0.01,
K2 = 0.03, dynamic range 1.0) over fully valid windows; channels are
averaged to grayscale first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.signal import convolve2d

from .model import ValidationError
from .render import ImageBuffer

PSNR_CAP_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricsReport:
    """One evaluation row for a (scene, mode, viewpoint, focus) combination."""

    psnr_db: float
    ssim: float
    pearson_r: float
    leakage: float

    def as_row(self) -> dict:
        return {
            "psnr_db": self.psnr_db,
            "ssim": self.ssim,
            "pearson_r": self.pearson_r,
            "leakage": self.leakage,
        }


def _as_array(img) -> np.ndarray:
    if isinstance(img, ImageBuffer):
        return img.data
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    return a


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"image dimensions differ: {a.shape} vs {b.shape}")
    for name, arr in (("first", a), ("second", b)):
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError(f"{name} image must lie in [0, 1]; clip renders before scoring")


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 dB (identical images)."""
    a = _as_array(a)
    b = _as_array(b)
    _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a, b) -> float:
    """Mean structural similarity over fully valid 11x11 windows."""
    a = _as_array(a).mean(axis=2)
    b = _as_array(b).mean(axis=2)
    if a.shape != b.shape:
        raise ValidationError(f"image dimensions differ: {a.shape} vs {b.shape}")
    if min(a.shape) < _SSIM_WINDOW:
        raise ValidationError(f"images must be at least {_SSIM_WINDOW} px on each side")
    return float(np.mean(ssim_map(a, b)))


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-window SSIM values (valid region), grayscale inputs."""
    w = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2

    def filt(x):
        return convolve2d(x, w, mode="valid")

    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def contrast_scatter(fg_only, with_bg, fg_mask) -> tuple[np.ndarray, float]:
    """Per-pixel (background-free, with-background) intensity pairs and their
    Pearson correlation over the in-focus foreground mask.

    An ideal display keeps foreground pixels untouched by the background, so
    the points fall on the diagonal and r = 1; additive leakage lifts points
    above it and lowers r.
    """
    fg = _as_array(fg_only).mean(axis=2)
    wb = _as_array(with_bg).mean(axis=2)
    mask = np.asarray(fg_mask, dtype=bool)
    if fg.shape != wb.shape or mask.shape != fg.shape:
        raise ValidationError("images and mask must share dimensions")
    if mask.sum() < 2:
        raise ValidationError("foreground mask must contain at least 2 pixels")
    x = fg[mask]
    y = wb[mask]
    points = np.stack([x, y], axis=-1)
    sx = x.std()
    sy = y.std()
    if sx == 0.0 or sy == 0.0:
        r = 1.0 if np.array_equal(x, y) else 0.0
    else:
        r = float(np.corrcoef(x, y)[0, 1])
    return points, r


def leakage_score(fg_only, with_bg, fg_mask) -> float:
    """Mean positive excess of the with-background image over the
    background-free image, on the foreground mask."""
    fg = _as_array(fg_only).mean(axis=2)
    wb = _as_array(with_bg).mean(axis=2)
    mask = np.asarray(fg_mask, dtype=bool)
    if fg.shape != wb.shape or mask.shape != fg.shape:
        raise ValidationError("images and mask must share dimensions")
    if mask.sum() < 2:
        raise ValidationError("foreground mask must contain at least 2 pixels")
    return float(np.mean(np.maximum(wb[mask] - fg[mask], 0.0)))


@dataclass(frozen=True)
class HaloProfile:
    """Mean image-minus-reference intensity binned by distance to the edge."""

    distance_px: np.ndarray  # bin centers, negative on the occluder side
    mean_delta: np.ndarray
    counts: np.ndarray

    def value_at(self, distance: float) -> float:
        idx = int(np.argmin(np.abs(self.distance_px - distance)))
        return float(self.mean_delta[idx])


def halo_profile(image, occluder_mask, reference, extent_px: int = 20) -> HaloProfile:
    """Radial profile of (image - reference) around the occluding edge.

    ``occluder_mask`` marks the occluder side on the sensor grid; pixel
    distances are signed (negative inside the occluder) and binned at 1 px
    over +-extent_px. Bins with no pixels report a zero mean and count.
    """
    img = _as_array(image).mean(axis=2)
    ref = _as_array(reference).mean(axis=2)
    mask = np.asarray(occluder_mask, dtype=bool)
    if img.shape != ref.shape or mask.shape != img.shape:
        raise ValidationError("image, reference and mask must share dimensions")
    if not mask.any() or mask.all():
        raise ValidationError("occluder mask must contain an edge")
    d_out = ndimage.distance_transform_edt(~mask)
    d_in = ndimage.distance_transform_edt(mask)
    signed = np.where(mask, -(d_in - 0.5), d_out - 0.5)
    delta = img - ref
    centers = np.arange(-extent_px, extent_px + 1)
    means = np.zeros(len(centers))
    counts = np.zeros(len(centers), dtype=np.int64)
    for i, c in enumerate(centers):
        sel = (signed >= c - 0.5) & (signed < c + 0.5)
        counts[i] = int(sel.sum())
        if counts[i]:
            means[i] = float(delta[sel].mean())
    return HaloProfile(distance_px=centers.astype(float), mean_delta=means, counts=counts)
