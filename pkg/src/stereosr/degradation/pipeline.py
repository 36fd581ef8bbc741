"""Three-stage stereo degradation: fixed order, shuffled, then sinc + JPEG.

Every stage first samples a list of :class:`DegradationOp` from the shape of
the pair alone, then applies that list.  Because application only reads the
record (noise fields are regenerated from their logged stream id), replaying
a record reproduces the LR pair bit for bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..imageio import jpeg_roundtrip
from ..tensor import RESIZE_MODES, SeededRng, ShapeError, StereoPair, conv2d_reflect, resize
from .config import DegradationConfig
from .kernels import make_gaussian_kernel, make_sinc_kernel
from .noise import add_gaussian_noise, add_poisson_noise

STAGE_ORDER = ("blur", "resize", "noise", "jpeg")
EYES = ("left", "right")
MIN_INTERMEDIATE = 8


@dataclass
class DegradationOp:
    stage: str
    op: str
    eye: str  # "left", "right" or "both"
    params: dict
    stream_id: int

    def to_dict(self) -> dict:
        return {"stage": self.stage, "op": self.op, "eye": self.eye,
                "params": self.params, "stream_id": self.stream_id}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationOp":
        return cls(d["stage"], d["op"], d["eye"], dict(d["params"]), int(d["stream_id"]))


@dataclass
class DegradationRecord:
    seed: int
    ops: list[DegradationOp] = field(default_factory=list)
    pair_id: str | None = None

    def extend(self, other: "DegradationRecord") -> None:
        self.ops.extend(other.ops)

    def ops_for(self, stage: str) -> list[DegradationOp]:
        return [op for op in self.ops if op.stage == stage]

    def to_json(self) -> str:
        d = {"pair": self.pair_id, "seed": self.seed, "ops": [op.to_dict() for op in self.ops]}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "DegradationRecord":
        d = json.loads(line)
        return cls(int(d["seed"]), [DegradationOp.from_dict(o) for o in d["ops"]], d.get("pair"))


# -- sampling -----------------------------------------------------------------

def _blur_params(cfg: DegradationConfig, rng: SeededRng) -> dict:
    g = rng.gen
    aniso = bool(g.random() < cfg.anisotropic_prob)
    sx = rng.uniform(*cfg.blur_sigma_range)
    sy = rng.uniform(*cfg.blur_sigma_range)
    theta = float(g.uniform(0.0, np.pi))
    if not aniso:
        sy, theta = sx, 0.0
    return {"size": cfg.kernel_size, "sigma_x": sx, "sigma_y": sy, "theta": theta, "anisotropic": aniso}


def _noise_params(cfg: DegradationConfig, rng: SeededRng) -> dict:
    if rng.gen.random() < 0.5:
        return {"kind": "gaussian", "level": rng.uniform(*cfg.noise_range)}
    return {"kind": "poisson", "level": rng.uniform(*cfg.poisson_scale_range)}


def _sinc_params(cfg: DegradationConfig, rng: SeededRng) -> dict:
    return {"size": cfg.kernel_size, "cutoff": rng.uniform(*cfg.sinc_cutoff_range)}


def _per_eye(stage, op, vary, rng, sample, cfg) -> list[DegradationOp]:
    """One op per eye; both eyes share a single draw unless ``vary``."""
    if vary:
        draws = {eye: rng.derive(f"{op}/{eye}") for eye in EYES}
    else:
        shared = rng.derive(op)
        draws = {eye: shared for eye in EYES}
    ops = []
    for eye in EYES:
        sub = draws[eye]
        params = sample(cfg, SeededRng(sub.seed, sub.stream_id))
        if op == "noise":
            params["field_stream"] = sub.derive(f"field/{eye}").stream_id
        ops.append(DegradationOp(stage, op, eye, params, sub.stream_id))
    return ops


def _resize_op(stage: str, cfg: DegradationConfig, rng: SeededRng, shape) -> DegradationOp:
    sub = rng.derive("resize")
    h, w = shape
    mode = RESIZE_MODES[int(sub.gen.integers(len(RESIZE_MODES)))]
    factor = sub.uniform(*cfg.resize_range)
    out_h = max(int(np.floor(h * factor + 0.5)), min(h, MIN_INTERMEDIATE))
    out_w = max(int(np.floor(w * factor + 0.5)), min(w, MIN_INTERMEDIATE))
    return DegradationOp(stage, "resize", "both",
                         {"mode": mode, "factor": factor, "out_h": out_h, "out_w": out_w}, sub.stream_id)


def _jpeg_op(stage: str, cfg: DegradationConfig, rng: SeededRng) -> DegradationOp:
    sub = rng.derive("jpeg")
    lo, hi = cfg.jpeg_range
    q = int(sub.gen.integers(int(lo), int(hi), endpoint=True))
    return DegradationOp(stage, "jpeg", "both", {"quality": q}, sub.stream_id)


def _family_ops(family, stage, cfg, rng, shape) -> list[DegradationOp]:
    if family == "blur":
        return _per_eye(stage, "blur", cfg.enable_VB, rng, _blur_params, cfg)
    if family == "noise":
        return _per_eye(stage, "noise", cfg.enable_VN, rng, _noise_params, cfg)
    if family == "resize":
        return [_resize_op(stage, cfg, rng, shape)]
    return [_jpeg_op(stage, cfg, rng)]


def _track_shape(shape, ops):
    for op in ops:
        if op.op == "resize":
            shape = (op.params["out_h"], op.params["out_w"])
    return shape


def sample_stage1(shape, cfg: DegradationConfig, rng: SeededRng) -> list[DegradationOp]:
    ops = []
    for family in STAGE_ORDER:
        ops += _family_ops(family, "stage1", cfg, rng, _track_shape(shape, ops))
    return ops


def stage2_plan(cfg: DegradationConfig, rng: SeededRng) -> list[str]:
    """Op families for stage 2 in application order, skipped ones removed."""
    g = rng.derive("plan").gen
    perm = g.permutation(len(STAGE_ORDER))
    skip = g.random(len(STAGE_ORDER)) < cfg.skip_prob
    order = [STAGE_ORDER[i] for i in perm] if cfg.enable_SO else list(STAGE_ORDER)
    return [fam for fam in order if not skip[STAGE_ORDER.index(fam)]]


def sample_stage2(shape, cfg: DegradationConfig, rng: SeededRng) -> list[DegradationOp]:
    ops = []
    for family in stage2_plan(cfg, rng):
        ops += _family_ops(family, "stage2", cfg, rng, _track_shape(shape, ops))
    return ops


def sample_stage3(shape, cfg: DegradationConfig, rng: SeededRng) -> list[DegradationOp]:
    g = rng.derive("plan").gen
    use_sinc = bool(g.random() < cfg.sinc_prob)
    sinc_first = bool(g.random() < 0.5)
    jpeg = [_jpeg_op("stage3", cfg, rng)]
    if not use_sinc:
        return jpeg
    sinc = _per_eye("stage3", "sinc", cfg.enable_VB, rng, _sinc_params, cfg)
    return sinc + jpeg if sinc_first else jpeg + sinc


# -- application --------------------------------------------------------------

def _apply_to_image(img: np.ndarray, op: DegradationOp, seed: int) -> np.ndarray:
    p = op.params
    if op.op == "blur":
        k = make_gaussian_kernel(p["size"], p["sigma_x"], p["sigma_y"], p["theta"])
        return np.clip(conv2d_reflect(img, k), 0.0, 1.0)
    if op.op == "sinc":
        return np.clip(conv2d_reflect(img, make_sinc_kernel(p["size"], p["cutoff"])), 0.0, 1.0)
    if op.op == "resize":
        return resize(img, p["out_h"], p["out_w"], p["mode"])
    if op.op == "noise":
        field_rng = SeededRng(seed, p["field_stream"])
        if p["kind"] == "gaussian":
            return add_gaussian_noise(img, p["level"], field_rng)
        return add_poisson_noise(img, p["level"], field_rng)
    if op.op == "jpeg":
        return jpeg_roundtrip(img, p["quality"])
    raise ValueError(f"unknown degradation op {op.op!r}")


def apply_ops(pair: StereoPair, ops, seed: int) -> StereoPair:
    left, right = pair.left, pair.right
    for op in ops:
        if op.eye in ("left", "both"):
            left = _apply_to_image(left, op, seed)
        if op.eye in ("right", "both"):
            right = _apply_to_image(right, op, seed)
    return StereoPair(left, right)


def replay(hr: StereoPair, record: DegradationRecord) -> StereoPair:
    return apply_ops(hr, record.ops, record.seed)


def _run_stage(sampler, tag, pair, cfg, rng):
    ops = sampler(pair.shape[1:], cfg, rng.derive(tag))
    return apply_ops(pair, ops, rng.seed), DegradationRecord(rng.seed, ops)


def stage1(pair: StereoPair, cfg: DegradationConfig, rng: SeededRng):
    """Blur -> resize -> noise -> JPEG in fixed order."""
    return _run_stage(sample_stage1, "stage1", pair, cfg, rng)


def stage2(pair: StereoPair, cfg: DegradationConfig, rng: SeededRng):
    """The same four families, shuffled when SO is on, each possibly skipped."""
    return _run_stage(sample_stage2, "stage2", pair, cfg, rng)


def stage3(pair: StereoPair, cfg: DegradationConfig, rng: SeededRng):
    """Optional sinc filter and a final JPEG, in random relative order."""
    return _run_stage(sample_stage3, "stage3", pair, cfg, rng)


def degrade_pair(hr: StereoPair, cfg: DegradationConfig, seed: int):
    _, h, w = hr.shape
    s = cfg.scale
    if h % s or w % s:
        raise ShapeError(f"HR size {h}x{w} not divisible by scale {s}")
    rng = SeededRng(seed)
    record = DegradationRecord(rng.seed)
    pair = hr
    for stage in (stage1, stage2, stage3):
        pair, rec = stage(pair, cfg, rng)
        record.extend(rec)
    final = DegradationOp("final", "resize", "both",
                          {"mode": "bicubic", "factor": 1.0 / s, "out_h": h // s, "out_w": w // s},
                          rng.stream_id)
    record.ops.append(final)
    return apply_ops(pair, [final], rng.seed), record
