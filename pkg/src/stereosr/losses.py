"""Generator and discriminator objectives as pure functions of their inputs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import ShapeError, StereoPair, as_tensor3, conv2d_reflect

PerceptualBackend = Callable[[np.ndarray, np.ndarray], float]

_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
PYRAMID_KERNEL = np.outer(_BINOMIAL, _BINOMIAL)


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 1.0  # perceptual
    lam: float = 0.1  # adversarial
    eta: float = 1.0  # pixel
    epsilon: float = 0.1  # residual perceptual

    def __post_init__(self):
        if min(self.gamma, self.lam, self.eta, self.epsilon) < 0:
            raise ValueError("loss weights must be non-negative")


def _check(sr: StereoPair, hr: StereoPair):
    if sr.shape != hr.shape:
        raise ShapeError(f"SR {sr.shape} and HR {hr.shape} differ")


def pixel_l1(sr: StereoPair, hr: StereoPair) -> float:
    _check(sr, hr)
    total = np.abs(sr.left - hr.left).sum() + np.abs(sr.right - hr.right).sum()
    return float(total / (2 * sr.left.size))


def pyramid_l1(a, b, levels: int = 3) -> float:
    """Sum over a Gaussian pyramid of the per-level mean absolute difference.

    Each level blurs with the 5-tap binomial kernel (reflect borders) and
    keeps every second pixel.  Stand-in for LPIPS: zero at identity, symmetric.
    """
    a, b = as_tensor3(a), as_tensor3(b)
    if a.shape != b.shape:
        raise ShapeError(f"{a.shape} and {b.shape} differ")
    total = 0.0
    for level in range(levels):
        total += float(np.abs(a - b).mean())
        if level + 1 < levels:
            a = conv2d_reflect(a, PYRAMID_KERNEL)[:, ::2, ::2]
            b = conv2d_reflect(b, PYRAMID_KERNEL)[:, ::2, ::2]
    return total


def perceptual_residual_loss(sr: StereoPair, hr: StereoPair, backend: PerceptualBackend = pyramid_l1,
                             epsilon: float = 0.1) -> float:
    """Per-eye perceptual distance plus ``epsilon`` times the distance between
    right-minus-left residuals, mapped from [-1, 1] to [0, 1]."""
    _check(sr, hr)
    res_sr = (sr.right - sr.left + 1.0) / 2.0
    res_hr = (hr.right - hr.left + 1.0) / 2.0
    return (backend(sr.left, hr.left) + backend(sr.right, hr.right)
            + epsilon * backend(res_sr, res_hr))


def adversarial_g_loss(d_scalar_on_sr: float) -> float:
    return 1.0 - d_scalar_on_sr


def d_loss(d_scalar_on_sr: float) -> float:
    return -d_scalar_on_sr


def total_g_loss(per: float, adv: float, pix: float, w: LossWeights = LossWeights()) -> float:
    return w.gamma * per + w.lam * adv + w.eta * pix
