from __future__ import annotations

import numpy as np

from ..tensor import SeededRng, as_tensor3


def add_gaussian_noise(img, sigma_8bit: float, rng: SeededRng) -> np.ndarray:
    """i.i.d. N(0, (sigma/255)^2) per element, clamped back to [0, 1]."""
    img = as_tensor3(img)
    g = rng.gen.standard_normal(img.shape) * (sigma_8bit / 255.0)
    return np.clip(img + g, 0.0, 1.0)


def add_poisson_noise(img, scale: float, rng: SeededRng) -> np.ndarray:
    """Photon-count noise; larger ``scale`` means more counts and less noise."""
    if scale <= 0:
        raise ValueError(f"poisson scale must be positive, got {scale}")
    img = as_tensor3(img)
    k = 255.0 * scale
    counts = rng.gen.poisson(np.clip(img, 0.0, 1.0) * k)
    return np.clip(counts / k, 0.0, 1.0)
