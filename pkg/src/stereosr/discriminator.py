"""Forward pass of the implicit-disparity stereo discriminator.

Each eye goes through one shared-weight U-Net that sees ``[this eye, other
eye]`` stacked to six channels, so swapping the eyes swaps the two feature
sets exactly.  Bidirectional cross-attention (IDEM) at x1/x2/x4 produces
disparity-aware maps that are upsampled and fused with spectrally normalised
per-eye features into a raw realness map.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .generator import temperature_attention
from .nn import Initializer, conv2d, deterministic_blas, leaky_relu, pointwise, relu
from .tensor import SeededRng, ShapeError, StereoPair, as_tensor3, layer_norm, resize

UNET_CHANNELS = (16, 32, 64)
DISC_VARIANTS = ("a", "b", "c", "d")
# 20 power iterations leave the top singular value of the 64x288 layers off by
# ~1e-3; 200 brings the normalised network within ~1e-7 of its limit
SN_WARMUP = 200


# -- spectral normalisation -------------------------------------------------------

@dataclass(frozen=True)
class SpectralConv:
    weight: np.ndarray  # (c_out, c_in, k, k)
    bias: np.ndarray
    u: np.ndarray  # left singular vector estimate, (c_out,)
    v: np.ndarray  # right singular vector estimate, (c_in*k*k,)
    n_iter: int = 0

    @classmethod
    def create(cls, weight, bias, rng: SeededRng) -> "SpectralConv":
        weight = np.asarray(weight, dtype=np.float64)
        u = rng.gen.standard_normal(weight.shape[0])
        u /= np.linalg.norm(u)
        v = np.zeros(int(np.prod(weight.shape[1:])))
        return cls(weight, np.asarray(bias, dtype=np.float64), u, v, 0)

    @property
    def matrix(self) -> np.ndarray:
        return self.weight.reshape(self.weight.shape[0], -1)

    @property
    def sigma(self) -> float:
        return float(self.u @ self.matrix @ self.v)

    @property
    def normalized_weight(self) -> np.ndarray:
        if self.n_iter == 0:
            raise ValueError("run spectral_normalize at least once before use")
        return self.weight / self.sigma


def spectral_normalize(conv: SpectralConv, iterations: int = 1) -> SpectralConv:
    """Advance the power-iteration estimates of the top singular pair."""
    w = conv.matrix
    if not np.any(w):
        raise ValueError("cannot spectrally normalise an all-zero weight")
    u, v = conv.u, conv.v
    for _ in range(iterations):
        v = w.T @ u
        v = v / np.linalg.norm(v)
        u = w @ v
        u = u / np.linalg.norm(u)
    return dataclasses.replace(conv, u=u, v=v, n_iter=conv.n_iter + iterations)


def sn_conv(x, conv: SpectralConv, stride: int = 1) -> np.ndarray:
    return conv2d(x, conv.normalized_weight, conv.bias, stride)


# -- weights ----------------------------------------------------------------------

@dataclass
class UNetWeights:
    enc1: SpectralConv  # 6 -> c1, x1
    enc2: SpectralConv  # c1 -> c2, stride 2
    enc3: SpectralConv  # c2 -> c3, stride 2
    dec2: SpectralConv  # c3 + c2 -> c2
    dec1: SpectralConv  # c2 + c1 -> c1

    def convs(self) -> list[SpectralConv]:
        return [self.enc1, self.enc2, self.enc3, self.dec2, self.dec1]


@dataclass
class IDEMWeights:
    ln_l_gain: np.ndarray
    ln_l_bias: np.ndarray
    ln_r_gain: np.ndarray
    ln_r_bias: np.ndarray
    w1_l: np.ndarray
    w1_r: np.ndarray
    w2_l: np.ndarray
    w2_r: np.ndarray
    wc: np.ndarray  # (m, c) fusion of F_d
    bc: np.ndarray

    @classmethod
    def init(cls, c: int, m: int, init: Initializer) -> "IDEMWeights":
        proj = [init.uniform((c, c), c) for _ in range(4)]
        wc, bc = init.linear(m, c)
        return cls(np.ones(c), np.zeros(c), np.ones(c), np.zeros(c), *proj, wc, bc)

    def mirrored(self) -> "IDEMWeights":
        return IDEMWeights(self.ln_r_gain, self.ln_r_bias, self.ln_l_gain, self.ln_l_bias,
                           self.w1_r, self.w1_l, self.w2_r, self.w2_l, self.wc, self.bc)


@dataclass
class DiscriminatorWeights:
    variant: str
    unet: UNetWeights
    idems: list[IDEMWeights] = field(default_factory=list)
    conv_sn: SpectralConv | None = None  # per-eye x1 features -> appearance map
    fuse_w: np.ndarray | None = None
    fuse_b: np.ndarray | None = None
    idem_channels: int = 4
    sn_channels: int = 8

    def spectral_convs(self) -> list[SpectralConv]:
        convs = self.unet.convs()
        return convs + ([self.conv_sn] if self.conv_sn is not None else [])

    def with_spectral(self, fn) -> "DiscriminatorWeights":
        """Copy with ``fn`` applied to every spectrally normalised conv."""
        unet = UNetWeights(*(fn(c) for c in self.unet.convs()))
        conv_sn = fn(self.conv_sn) if self.conv_sn is not None else None
        return dataclasses.replace(self, unet=unet, conv_sn=conv_sn)

    def warmup(self, iterations: int = SN_WARMUP) -> "DiscriminatorWeights":
        return self.with_spectral(lambda c: spectral_normalize(c, iterations))

    def mirrored(self) -> "DiscriminatorWeights":
        """Swap every left/right role: IDEM projections and the fusion inputs."""
        fuse_w = self.fuse_w
        if fuse_w is not None and self.variant in ("c", "d"):
            n_idem = 3 * self.idem_channels if self.variant == "d" else 0
            k = self.sn_channels
            left = fuse_w[:, n_idem:n_idem + k]
            right = fuse_w[:, n_idem + k:n_idem + 2 * k]
            fuse_w = np.concatenate([fuse_w[:, :n_idem], right, left], axis=1)
        return dataclasses.replace(self, idems=[w.mirrored() for w in self.idems], fuse_w=fuse_w)


def build_discriminator_weights(seed: int = 0, variant: str = "d", zero_fusion: bool = False,
                                idem_channels: int = 4, sn_channels: int = 8,
                                warmup: int = SN_WARMUP) -> DiscriminatorWeights:
    """Seeded weights for one of the four discriminator layouts.

    ``a``: single-image U-Net (3-channel input) scored per eye.
    ``b``: six-channel input, scored per eye.
    ``c``: six-channel input plus a fusion conv over both eyes' features.
    ``d``: ``c`` plus multi-scale IDEM maps (the full model).
    """
    if variant not in DISC_VARIANTS:
        raise ValueError(f"unknown discriminator variant {variant!r}")
    init = Initializer(seed, stream="disc-weights")
    sn_rng = SeededRng(seed).derive("disc-sn")
    c1, c2, c3 = UNET_CHANNELS
    c_in = 3 if variant == "a" else 6

    def sn(c_out, c_in_, k, tag):
        w, b = init.conv(c_out, c_in_, k)
        return SpectralConv.create(w, b, sn_rng.derive(tag))

    unet = UNetWeights(sn(c1, c_in, 3, "enc1"), sn(c2, c1, 3, "enc2"), sn(c3, c2, 3, "enc3"),
                       sn(c2, c3 + c2, 3, "dec2"), sn(c1, c2 + c1, 3, "dec1"))
    idems = [IDEMWeights.init(c, idem_channels, init) for c in UNET_CHANNELS] if variant == "d" else []
    conv_sn = sn(sn_channels, c1, 3, "conv_sn")
    if variant in ("c", "d"):
        fuse_in = 2 * sn_channels + (3 * idem_channels if variant == "d" else 0)
    else:
        fuse_in = sn_channels
    fuse_w, fuse_b = init.conv(1, fuse_in, 3)
    if zero_fusion:
        fuse_w, fuse_b = np.zeros_like(fuse_w), np.zeros_like(fuse_b)
    weights = DiscriminatorWeights(variant, unet, idems, conv_sn, fuse_w, fuse_b,
                                   idem_channels, sn_channels)
    return weights.warmup(warmup) if warmup else weights


# -- forward ----------------------------------------------------------------------

@dataclass
class UNetFeatures:
    f_x1: np.ndarray
    f_x2: np.ndarray
    f_x4: np.ndarray

    def scales(self) -> list[np.ndarray]:
        return [self.f_x1, self.f_x2, self.f_x4]


@dataclass
class DiscriminatorOutput:
    d_map: np.ndarray  # (1, H, W)

    @property
    def d_scalar(self) -> float:
        return float(self.d_map.mean())


def _upsample2(x: np.ndarray) -> np.ndarray:
    return resize(x, x.shape[1] * 2, x.shape[2] * 2, "bilinear", clamp=False)


def _unet(x: np.ndarray, w: UNetWeights) -> UNetFeatures:
    e1 = leaky_relu(sn_conv(x, w.enc1))
    e2 = leaky_relu(sn_conv(e1, w.enc2, stride=2))
    e3 = leaky_relu(sn_conv(e2, w.enc3, stride=2))
    d2 = leaky_relu(sn_conv(np.concatenate([_upsample2(e3), e2]), w.dec2))
    d1 = leaky_relu(sn_conv(np.concatenate([_upsample2(d2), e1]), w.dec1))
    return UNetFeatures(d1, d2, e3)


def _pad_to_4(pair: StereoPair) -> tuple[StereoPair, int, int]:
    _, h, w = pair.shape
    ph, pw = -h % 4, -w % 4
    if ph or pw:
        if ph >= h or pw >= w:
            raise ShapeError(f"{h}x{w} too small to pad to a multiple of 4")
        pair = pair.map(lambda x: np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="reflect"))
    return pair, h, w


def unet_features(pair: StereoPair, weights: DiscriminatorWeights) -> tuple[UNetFeatures, UNetFeatures]:
    """Multi-scale features per eye from the shared U-Net."""
    if pair.shape[0] != 3:
        raise ShapeError(f"discriminator expects RGB eyes, got {pair.shape[0]} channels")
    pair, _, _ = _pad_to_4(pair)
    if weights.variant == "a":
        return _unet(pair.left, weights.unet), _unet(pair.right, weights.unet)
    left_in = np.concatenate([pair.left, pair.right])
    right_in = np.concatenate([pair.right, pair.left])
    return _unet(left_in, weights.unet), _unet(right_in, weights.unet)


def cross_attention_rows(q: np.ndarray, k: np.ndarray, v: np.ndarray, return_weights: bool = False):
    """Plain scaled dot-product attention per scanline; inputs are (C, H, W)."""
    out = temperature_attention(q.transpose(1, 2, 0), k.transpose(1, 2, 0), v.transpose(1, 2, 0),
                                tau=1.0, return_weights=return_weights)
    if return_weights:
        return out[0].transpose(2, 0, 1), out[1]
    return out.transpose(2, 0, 1)


def idem(xl, xr, w: IDEMWeights, return_attention: bool = False):
    """Product of the two cross-view attentions, fused by a 1x1 conv."""
    xl, xr = as_tensor3(xl), as_tensor3(xr)
    if xl.shape != xr.shape:
        raise ShapeError(f"left {xl.shape} and right {xr.shape} differ")
    ql = pointwise(layer_norm(xl, w.ln_l_gain, w.ln_l_bias), w.w1_l)
    qr = pointwise(layer_norm(xr, w.ln_r_gain, w.ln_r_bias), w.w1_r)
    r2l, a_r2l = cross_attention_rows(ql, qr, pointwise(xr, w.w2_r), return_weights=True)
    l2r, a_l2r = cross_attention_rows(qr, ql, pointwise(xl, w.w2_l), return_weights=True)
    m_d = pointwise(r2l * l2r, w.wc, w.bc)
    if return_attention:
        return m_d, (a_r2l, a_l2r)
    return m_d


@deterministic_blas
def discriminator_forward(pair: StereoPair, weights: DiscriminatorWeights) -> DiscriminatorOutput:
    feats_l, feats_r = unet_features(pair, weights)
    _, h, w = pair.shape
    hp, wp = feats_l.f_x1.shape[1:]

    def appearance(f):
        return relu(sn_conv(f.f_x1, weights.conv_sn))

    if weights.variant in ("a", "b"):
        maps = [conv2d(appearance(f), weights.fuse_w, weights.fuse_b) for f in (feats_l, feats_r)]
        d_map = 0.5 * (maps[0] + maps[1])
    else:
        parts = []
        if weights.variant == "d":
            for scale_l, scale_r, iw in zip(feats_l.scales(), feats_r.scales(), weights.idems):
                m = idem(scale_l, scale_r, iw)
                if m.shape[1:] != (hp, wp):
                    m = resize(m, hp, wp, "bilinear", clamp=False)
                parts.append(m)
        parts += [appearance(feats_l), appearance(feats_r)]
        d_map = conv2d(np.concatenate(parts), weights.fuse_w, weights.fuse_b)
    return DiscriminatorOutput(d_map[:, :h, :w])
