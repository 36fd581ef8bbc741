"""Fidelity metrics (PSNR, SSIM) and the disparity-consistency error MADE."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .tensor import ShapeError, StereoPair, as_tensor3

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
DEFAULT_DMAX = 64
DEFAULT_WINDOW = 9


def psnr_rgb(a, b) -> float:
    """PSNR in dB over all channels for images in [0, 1]; ``inf`` when equal."""
    a, b = as_tensor3(a), as_tensor3(b)
    if a.shape != b.shape:
        raise ShapeError(f"{a.shape} and {b.shape} differ")
    mse = float(np.mean((a - b) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def _gauss_window() -> np.ndarray:
    x = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    g = np.exp(-(x**2) / (2 * SSIM_SIGMA**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    y = ndimage.correlate1d(x, g, axis=0, mode="constant")
    y = ndimage.correlate1d(y, g, axis=1, mode="constant")
    return y[r:-r, r:-r]


def ssim(a, b) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), valid windows only,
    computed per channel and averaged.  Data range is 1."""
    a, b = as_tensor3(a), as_tensor3(b)
    if a.shape != b.shape:
        raise ShapeError(f"{a.shape} and {b.shape} differ")
    if min(a.shape[1:]) < SSIM_WINDOW:
        raise ShapeError(f"image {a.shape[1:]} smaller than the {SSIM_WINDOW}px SSIM window")
    g = _gauss_window()
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    scores = []
    for x, y in zip(a, b):
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


@dataclass
class DisparityMap:
    values: np.ndarray  # (H, W) horizontal disparity, left view
    valid: np.ndarray  # (H, W) bool

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean())


def _cost_volume(ref: np.ndarray, other: np.ndarray, d_max: int, window: int, sign: int) -> np.ndarray:
    """Mean windowed SSD of ``ref`` pixel x against ``other`` pixel x + sign*d.

    Window samples whose partner falls outside ``other`` are left out of the
    mean; a candidate whose centre has no partner costs ``inf``.
    """
    _, h, w = ref.shape
    costs = np.empty((d_max + 1, h, w))
    for d in range(d_max + 1):
        diff = np.zeros((h, w))
        have = np.zeros((h, w))
        if sign < 0:
            diff[:, d:] = ((ref[:, :, d:] - other[:, :, : w - d]) ** 2).sum(axis=0)
            have[:, d:] = 1.0
        else:
            diff[:, : w - d] = ((ref[:, :, : w - d] - other[:, :, d:]) ** 2).sum(axis=0)
            have[:, : w - d] = 1.0
        total = ndimage.uniform_filter(diff, size=window, mode="constant")
        count = ndimage.uniform_filter(have, size=window, mode="constant")
        with np.errstate(divide="ignore", invalid="ignore"):
            costs[d] = np.where(have > 0, total / np.maximum(count, 1e-12), np.inf)
    return costs


def block_match_disparity(pair: StereoPair, d_max: int = DEFAULT_DMAX,
                          window: int = DEFAULT_WINDOW) -> DisparityMap:
    """SSD block matching along scanlines with a left-right consistency check.

    A left pixel at column x matches the right pixel at x - d; ties go to the
    smaller disparity.  A pixel is valid when its whole matching window lies
    inside the right view and the right view's own estimate at x - d agrees
    within one pixel.
    """
    _, h, w = pair.shape
    if d_max >= w:
        raise ValueError(f"d_max {d_max} must be smaller than the width {w}")
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    disp_l = np.argmin(_cost_volume(pair.left, pair.right, d_max, window, -1), axis=0)
    disp_r = np.argmin(_cost_volume(pair.right, pair.left, d_max, window, +1), axis=0)
    cols = np.arange(w)[None, :] - disp_l
    rows = np.arange(h)[:, None].repeat(w, axis=1)
    back = disp_r[rows, np.clip(cols, 0, w - 1)]
    valid = (cols >= window // 2) & (np.abs(disp_l - back) <= 1)
    return DisparityMap(disp_l.astype(np.float64), valid)


def made_with_coverage(sr: StereoPair, hr: StereoPair, d_max: int = DEFAULT_DMAX,
                       window: int = DEFAULT_WINDOW) -> tuple[float, float]:
    """(MADE, fraction of pixels valid in both disparity maps)."""
    if sr.shape != hr.shape:
        raise ShapeError(f"SR {sr.shape} and HR {hr.shape} differ")
    ds = block_match_disparity(sr, d_max, window)
    dh = block_match_disparity(hr, d_max, window)
    joint = ds.valid & dh.valid
    if not joint.any():
        raise ValueError("no pixel has a valid disparity in both pairs")
    err = np.abs(ds.values - dh.values)[joint]
    return float(err.mean()), float(joint.mean())


def made(sr: StereoPair, hr: StereoPair, d_max: int = DEFAULT_DMAX, window: int = DEFAULT_WINDOW) -> float:
    """Mean absolute disparity error over jointly valid pixels."""
    return made_with_coverage(sr, hr, d_max, window)[0]
