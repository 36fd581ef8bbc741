from __future__ import annotations

import numpy as np
from scipy.special import j1

from ..tensor import ShapeError


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    if size < 1 or size % 2 == 0:
        raise ShapeError(f"kernel size must be odd, got {size}")
    ax = np.arange(size, dtype=np.float64) - size // 2
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    return xx, yy


def make_gaussian_kernel(size: int, sigma_x: float, sigma_y: float, theta: float = 0.0) -> np.ndarray:
    """Rotated bivariate Gaussian sampled at integer offsets, normalised to sum 1.

    ``theta`` rotates the ``sigma_x`` axis counter-clockwise from the x axis.
    """
    if sigma_x <= 0 or sigma_y <= 0:
        raise ValueError(f"sigmas must be positive, got {sigma_x}, {sigma_y}")
    xx, yy = _grid(size)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([sigma_x**2, sigma_y**2]) @ rot.T
    inv = np.linalg.inv(cov)
    q = inv[0, 0] * xx * xx + (inv[0, 1] + inv[1, 0]) * xx * yy + inv[1, 1] * yy * yy
    k = np.exp(-0.5 * q)
    return k / k.sum()


def make_sinc_kernel(size: int, cutoff: float) -> np.ndarray:
    """Circular low-pass (jinc) kernel with angular cutoff in (0, pi]."""
    if not 0 < cutoff <= np.pi:
        raise ValueError(f"cutoff must be in (0, pi], got {cutoff}")
    xx, yy = _grid(size)
    r = np.hypot(xx, yy)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = cutoff * j1(cutoff * r) / (2 * np.pi * r)
    k[size // 2, size // 2] = cutoff**2 / (4 * np.pi)
    return k / k.sum()
