"""Forward pass of the stereo generator.

Shallow 3x3 conv -> N x (NAFBlock + temperature cross-attention) -> bucketed
global attention over the joint left/right feature space -> conv + pixel
shuffle, plus a bilinear global residual.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .nn import Initializer, conv2d, depthwise3x3, deterministic_blas, pointwise, relu
from .tensor import (
    SeededRng,
    ShapeError,
    StereoPair,
    as_tensor3,
    layer_norm,
    pixel_shuffle,
    resize,
    softmax_rows,
)


def simple_gate(feat) -> np.ndarray:
    feat = as_tensor3(feat)
    c = feat.shape[0]
    if c % 2:
        raise ShapeError(f"SimpleGate needs an even channel count, got {c}")
    return feat[: c // 2] * feat[c // 2:]


@dataclass
class NAFBlockWeights:
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    expand_w: np.ndarray  # (2c, c)
    expand_b: np.ndarray
    dw_w: np.ndarray  # (2c, 3, 3)
    dw_b: np.ndarray
    sca_w: np.ndarray  # (c, c)
    sca_b: np.ndarray
    project_w: np.ndarray  # (c, c)
    project_b: np.ndarray
    beta: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    ffn1_w: np.ndarray  # (2c, c)
    ffn1_b: np.ndarray
    ffn2_w: np.ndarray  # (c, c)
    ffn2_b: np.ndarray
    gamma: np.ndarray

    @property
    def channels(self) -> int:
        return self.ln1_gain.shape[0]

    @classmethod
    def init(cls, c: int, init: Initializer) -> "NAFBlockWeights":
        expand_w, expand_b = init.linear(2 * c, c)
        dw_w, dw_b = init.uniform((2 * c, 3, 3), 9), init.uniform((2 * c,), 9)
        sca_w, sca_b = init.linear(c, c)
        project_w, project_b = init.linear(c, c)
        ffn1_w, ffn1_b = init.linear(2 * c, c)
        ffn2_w, ffn2_b = init.linear(c, c)
        return cls(
            np.ones(c), np.zeros(c), expand_w, expand_b, dw_w, dw_b, sca_w, sca_b,
            project_w, project_b, init.scale(c),
            np.ones(c), np.zeros(c), ffn1_w, ffn1_b, ffn2_w, ffn2_b, init.scale(c),
        )


def naf_block(feat, w: NAFBlockWeights) -> np.ndarray:
    feat = as_tensor3(feat)
    if feat.shape[0] != w.channels:
        raise ShapeError(f"NAFBlock built for {w.channels} channels, got {feat.shape[0]}")
    # mobile conv branch with simplified channel attention
    x = layer_norm(feat, w.ln1_gain, w.ln1_bias)
    x = pointwise(x, w.expand_w, w.expand_b)
    x = depthwise3x3(x, w.dw_w, w.dw_b)
    x = simple_gate(x)
    x = x * (w.sca_w @ x.mean(axis=(1, 2)) + w.sca_b)[:, None, None]
    x = pointwise(x, w.project_w, w.project_b)
    y = feat + w.beta[:, None, None] * x
    # feed-forward branch
    x = layer_norm(y, w.ln2_gain, w.ln2_bias)
    x = simple_gate(pointwise(x, w.ffn1_w, w.ffn1_b))
    x = pointwise(x, w.ffn2_w, w.ffn2_b)
    return y + w.gamma[:, None, None] * x


def temperature_attention(q, k, v, tau: float = 1.0, return_weights: bool = False):
    """softmax(tau * q k^T / sqrt(C)) v over the last two axes (leading axes batch)."""
    q, k, v = (np.asarray(a, dtype=np.float64) for a in (q, k, v))
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query dim {q.shape[-1]} != key dim {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"{k.shape[-2]} keys but {v.shape[-2]} values")
    scores = tau * (q @ np.swapaxes(k, -1, -2)) / np.sqrt(q.shape[-1])
    attn = softmax_rows(scores)
    out = attn @ v
    return (out, attn) if return_weights else out


def _rows(feat: np.ndarray) -> np.ndarray:
    return feat.transpose(1, 2, 0)  # (H, W, C): one attention problem per scanline


def _unrows(rows: np.ndarray) -> np.ndarray:
    return rows.transpose(2, 0, 1)


@dataclass
class SCATMWeights:
    ln_l_gain: np.ndarray
    ln_l_bias: np.ndarray
    ln_r_gain: np.ndarray
    ln_r_bias: np.ndarray
    w1_l: np.ndarray
    w1_r: np.ndarray
    w2_l: np.ndarray
    w2_r: np.ndarray
    gamma_l: np.ndarray
    gamma_r: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"temperature must be non-negative, got {self.tau}")

    @classmethod
    def init(cls, c: int, init: Initializer, tau: float = 1.0) -> "SCATMWeights":
        proj = [init.uniform((c, c), c) for _ in range(4)]
        return cls(np.ones(c), np.zeros(c), np.ones(c), np.zeros(c), *proj,
                   init.scale(c), init.scale(c), tau)


def scatm(xl, xr, w: SCATMWeights) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise cross-view temperature attention with scaled residuals."""
    xl, xr = as_tensor3(xl), as_tensor3(xr)
    if xl.shape != xr.shape:
        raise ShapeError(f"left {xl.shape} and right {xr.shape} differ")
    ql = _rows(pointwise(layer_norm(xl, w.ln_l_gain, w.ln_l_bias), w.w1_l))
    qr = _rows(pointwise(layer_norm(xr, w.ln_r_gain, w.ln_r_bias), w.w1_r))
    vl = _rows(pointwise(xl, w.w2_l))
    vr = _rows(pointwise(xr, w.w2_r))
    r2l = _unrows(temperature_attention(ql, qr, vr, w.tau))
    l2r = _unrows(temperature_attention(qr, ql, vl, w.tau))
    return (w.gamma_l[:, None, None] * r2l + xl,
            w.gamma_r[:, None, None] * l2r + xr)


@dataclass
class HashBucketing:
    M: np.ndarray  # (b, c), orthonormal rows
    assignment: np.ndarray  # (N,)

    @property
    def b(self) -> int:
        return self.M.shape[0]

    def members(self, bucket: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == bucket)

    def buckets(self) -> list[np.ndarray]:
        return [self.members(i) for i in range(self.b)]


def hash_matrix(c: int, b: int, rng: SeededRng) -> np.ndarray:
    if b > c:
        raise ValueError(f"bucket count {b} exceeds feature dimension {c}")
    if b < 1:
        raise ValueError("need at least one bucket")
    q, _ = np.linalg.qr(rng.gen.standard_normal((c, b)))
    return q.T


def bucketize(vectors, b: int, rng: SeededRng) -> HashBucketing:
    """Super-bit LSH: bucket = argmax of the projection onto orthonormal rows."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError(f"expected a non-empty (c, N) matrix, got {x.shape}")
    m = hash_matrix(x.shape[0], b, rng)
    return HashBucketing(m, np.argmax(m @ x, axis=0))


@dataclass
class SCGLAWeights:
    phi_q: np.ndarray  # (d, c)
    phi_k: np.ndarray  # (d, c)
    phi_v: np.ndarray  # (c, c)
    phi_l: np.ndarray  # (e, c)
    w1: np.ndarray  # (hidden, e)
    b1: np.ndarray
    w2: np.ndarray  # (capacity, hidden)
    b2: np.ndarray

    def __post_init__(self):
        if self.phi_q.shape != self.phi_k.shape:
            raise ShapeError("query and key embeddings must share a shape")
        if self.w2.shape[0] != self.b2.shape[0]:
            raise ShapeError("scorer output and bias sizes differ")

    @property
    def capacity(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def init(cls, c: int, init: Initializer, qk_dim: int, l_dim: int, hidden: int,
             capacity: int) -> "SCGLAWeights":
        phi_q = init.uniform((qk_dim, c), c)
        phi_k = init.uniform((qk_dim, c), c)
        phi_v = init.uniform((c, c), c)
        phi_l = init.uniform((l_dim, c), c)
        w1, b1 = init.linear(hidden, l_dim)
        w2, b2 = init.linear(capacity, hidden)
        return cls(phi_q, phi_k, phi_v, phi_l, w1, b1, w2, b2)


def learned_scores(x: np.ndarray, w: SCGLAWeights) -> np.ndarray:
    """(capacity, n): column i is s_l(x_i) = W2 relu(W1 phi_l(x_i) + b1) + b2."""
    hidden = relu(w.w1 @ (w.phi_l @ x) + w.b1[:, None])
    return w.w2 @ hidden + w.b2[:, None]


def scgla(stereo_feat, buckets: HashBucketing, w: SCGLAWeights) -> np.ndarray:
    """Attention restricted to each bucket, similarity = learned + dot product.

    The learned term for key j is component ``pos(j)`` of the query's score
    vector, where ``pos`` is j's rank inside its bucket; keys ranked at or
    beyond the scorer capacity get no learned term.
    """
    f = np.asarray(stereo_feat, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] == 0:
        raise ShapeError("scgla needs a non-empty (c, N) feature matrix")
    if buckets.assignment.shape != (f.shape[1],):
        raise ShapeError("bucket assignment does not cover the feature columns")
    out = np.zeros((w.phi_v.shape[0], f.shape[1]))
    for idx in buckets.buckets():
        if idx.size == 0:
            continue
        x = f[:, idx]
        scores = (w.phi_q @ x).T @ (w.phi_k @ x)
        n = min(idx.size, w.capacity)
        scores[:, :n] += learned_scores(x, w)[:n].T
        out[:, idx] = (w.phi_v @ x) @ softmax_rows(scores).T
    return out


def scglam(fl, fr, w: SCGLAWeights, b: int, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    """Joint left+right bucketed attention with a residual connection."""
    fl, fr = as_tensor3(fl), as_tensor3(fr)
    if fl.shape != fr.shape:
        raise ShapeError(f"left {fl.shape} and right {fr.shape} differ")
    c, h, wd = fl.shape
    f = np.concatenate([fl.reshape(c, h * wd), fr.reshape(c, h * wd)], axis=1)
    out = f + scgla(f, bucketize(f, b, rng), w)
    return out[:, : h * wd].reshape(c, h, wd), out[:, h * wd:].reshape(c, h, wd)


# -- full generator ---------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    width: int = 16
    n_blocks: int = 2
    scale: int = 4
    tau: float = 1.0
    bucket_count: int = 4
    n_scglam: int = 1
    capacity: int = 128
    seed: int = 0
    zero_weights: bool = False

    def __post_init__(self):
        if self.width < 2 or self.width % 2:
            raise ValueError(f"width must be even, got {self.width}")
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")
        if not 1 <= self.bucket_count <= self.width:
            raise ValueError(f"bucket_count must be in [1, width], got {self.bucket_count}")
        if self.tau < 0 or self.n_blocks < 0 or self.n_scglam < 0 or self.capacity < 1:
            raise ValueError("tau, n_blocks, n_scglam must be >= 0 and capacity >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown generator config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "GeneratorConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(asdict(self), sort_keys=False))


@dataclass
class SCNAFTWeights:
    naf: NAFBlockWeights
    scatm: SCATMWeights


@dataclass
class GeneratorWeights:
    head_w: np.ndarray
    head_b: np.ndarray
    blocks: list[SCNAFTWeights] = field(default_factory=list)
    scglams: list[SCGLAWeights] = field(default_factory=list)
    tail_w: np.ndarray = None
    tail_b: np.ndarray = None


def build_generator_weights(cfg: GeneratorConfig) -> GeneratorWeights:
    """Seeded weights, drawn head -> blocks -> global attention -> tail."""
    init = Initializer(cfg.seed, zero=cfg.zero_weights)
    c = cfg.width
    head_w, head_b = init.conv(c, 3, 3)
    blocks = [SCNAFTWeights(NAFBlockWeights.init(c, init), SCATMWeights.init(c, init, cfg.tau))
              for _ in range(cfg.n_blocks)]
    scglams = [SCGLAWeights.init(c, init, qk_dim=c, l_dim=c, hidden=c, capacity=cfg.capacity)
               for _ in range(cfg.n_scglam)]
    tail_w, tail_b = init.conv(3 * cfg.scale**2, c, 3)
    return GeneratorWeights(head_w, head_b, blocks, scglams, tail_w, tail_b)


@deterministic_blas
def generator_forward(lr: StereoPair, cfg: GeneratorConfig,
                      weights: GeneratorWeights | None = None) -> StereoPair:
    if lr.shape[0] != 3:
        raise ShapeError(f"generator expects RGB input, got {lr.shape[0]} channels")
    w = weights if weights is not None else build_generator_weights(cfg)
    sl = conv2d(lr.left, w.head_w, w.head_b)
    sr = conv2d(lr.right, w.head_w, w.head_b)
    for blk in w.blocks:
        sl, sr = scatm(naf_block(sl, blk.naf), naf_block(sr, blk.naf), blk.scatm)
    hash_rng = SeededRng(cfg.seed).derive("lsh")
    for i, g in enumerate(w.scglams):
        sl, sr = scglam(sl, sr, g, cfg.bucket_count, hash_rng.derive(str(i)))
    _, h, wd = lr.shape
    s = cfg.scale

    def reconstruct(feat, img):
        base = resize(img, h * s, wd * s, "bilinear")
        return np.clip(pixel_shuffle(conv2d(feat, w.tail_w, w.tail_b), s) + base, 0.0, 1.0)

    return StereoPair(reconstruct(sl, lr.left), reconstruct(sr, lr.right))
