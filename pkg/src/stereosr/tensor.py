"""Numeric volumes and the primitive image ops shared by every other module.

Images and feature maps are plain ``float64`` numpy arrays laid out as
``(channels, height, width)``.  Image-valued arrays live in ``[0, 1]``;
feature arrays are unbounded.  Functions that can push values out of range
take a ``clamp`` flag instead of carrying the role on the array.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage

LN_EPS = 1e-6
CUBIC_A = -0.5
RESIZE_MODES = ("bicubic", "bilinear", "area")


class ShapeError(ValueError):
    pass


def as_tensor3(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected (C, H, W) array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class StereoPair:
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left, right = as_tensor3(self.left), as_tensor3(self.right)
        if left.shape != right.shape:
            raise ShapeError(f"left {left.shape} and right {right.shape} differ")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.left.shape

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "StereoPair":
        return StereoPair(fn(self.left), fn(self.right))

    def swap(self) -> "StereoPair":
        return StereoPair(self.right, self.left)

    def eye(self, name: str) -> np.ndarray:
        return {"left": self.left, "right": self.right}[name]


def _stream_hash(parent: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{parent}/{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class SeededRng:
    """Counter-based generator keyed by ``(seed, stream_id)``.

    Philox is keyed directly with the two 64-bit words, so a stream's values
    never depend on what other streams drew.  ``derive`` names a sub-stream
    with a stable hash, which keeps stream ids portable across runs.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        bitgen = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        self.gen = np.random.Generator(bitgen)

    def derive(self, tag: str) -> "SeededRng":
        return SeededRng(self.seed, _stream_hash(self.stream_id, tag))

    def uniform(self, lo: float, hi: float) -> float:
        return float(self.gen.uniform(lo, hi)) if hi > lo else float(lo)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id})"


def check_kernel(kernel) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError(f"kernel must be square, got {k.shape}")
    if k.shape[0] % 2 == 0:
        raise ShapeError(f"kernel size must be odd, got {k.shape[0]}")
    if abs(k.sum() - 1.0) > 1e-6:
        raise ValueError(f"kernel taps sum to {k.sum()}, expected 1")
    return k


def conv2d_reflect(img, kernel) -> np.ndarray:
    """Convolve every channel with ``kernel`` using reflect (edge-exclusive) borders."""
    img = as_tensor3(img)
    k = check_kernel(kernel)
    # scipy's "mirror" is d c b | a b c d | c b a, i.e. numpy's "reflect"
    return np.stack([ndimage.convolve(ch, k, mode="mirror") for ch in img])


def _cubic(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _interp_matrix(n_in: int, n_out: int, mode: str) -> np.ndarray:
    """Row i holds the weights of output sample i over the input samples."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    if mode == "area":
        for i in range(n_out):
            lo, hi = i * scale, (i + 1) * scale
            for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
                w[i, j] = min(hi, j + 1) - max(lo, j)
        return w / w.sum(axis=1, keepdims=True)

    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(int)
    frac = src - base
    if mode == "bilinear":
        offsets, weights = (0, 1), (1.0 - frac, frac)
    elif mode == "bicubic":
        offsets = (-1, 0, 1, 2)
        weights = tuple(_cubic(frac - o) for o in offsets)
    else:
        raise ValueError(f"unknown resize mode {mode!r}")
    rows = np.arange(n_out)
    for off, wt in zip(offsets, weights):
        np.add.at(w, (rows, np.clip(base + off, 0, n_in - 1)), wt)
    return w


def resize(img, out_h: int, out_w: int, mode: str = "bicubic", clamp: bool = True) -> np.ndarray:
    """Separable resampling with half-pixel centres and replicated borders.

    Bicubic uses the a=-0.5 kernel without antialiasing; ``area`` integrates
    the exact pixel overlap, so integer downscales are block means.
    """
    img = as_tensor3(img)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {out_h}x{out_w}")
    _, h, w = img.shape
    if (out_h, out_w) == (h, w) and mode != "area":
        out = img.copy()
    else:
        wh = _interp_matrix(h, out_h, mode)
        ww = _interp_matrix(w, out_w, mode)
        out = wh @ img @ ww.T
    return np.clip(out, 0.0, 1.0) if clamp else out


def layer_norm(feat, gain, bias, eps: float = LN_EPS) -> np.ndarray:
    """Normalise across channels independently at every spatial location."""
    feat = as_tensor3(feat)
    gain, bias = np.asarray(gain, dtype=np.float64), np.asarray(bias, dtype=np.float64)
    c = feat.shape[0]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"gain/bias must have length {c}")
    mu = feat.mean(axis=0, keepdims=True)
    var = ((feat - mu) ** 2).mean(axis=0, keepdims=True)
    y = (feat - mu) / np.sqrt(var + eps)
    return gain[:, None, None] * y + bias[:, None, None]


def pixel_shuffle(feat, scale: int) -> np.ndarray:
    """(C*r*r, H, W) -> (C, H*r, W*r) with the usual sub-pixel channel order."""
    feat = as_tensor3(feat)
    c, h, w = feat.shape
    r = int(scale)
    if r < 1 or c % (r * r):
        raise ShapeError(f"{c} channels not divisible by scale^2={r * r}")
    out = feat.reshape(c // (r * r), r, r, h, w).transpose(0, 3, 1, 4, 2)
    return out.reshape(c // (r * r), h * r, w * r)


def softmax_rows(mat) -> np.ndarray:
    m = np.asarray(mat, dtype=np.float64)
    e = np.exp(m - m.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
