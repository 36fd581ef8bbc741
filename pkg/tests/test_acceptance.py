"""Acceptance checks: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are repeated in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
"""
import itertools
import math
import sys
import tempfile
import time
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import shifted_pair, textured  # noqa: E402

from stereosr import SeededRng, StereoPair  # noqa: E402
from stereosr.cli import main as cli_main  # noqa: E402
from stereosr.degradation import (  # noqa: E402
    default_config,
    make_gaussian_kernel,
    make_sinc_kernel,
    sample_stage1,
    sample_stage2,
    sample_stage3,
)
from stereosr.discriminator import (  # noqa: E402
    DISC_VARIANTS,
    SpectralConv,
    build_discriminator_weights,
    discriminator_forward,
    idem,
    spectral_normalize,
    unet_features,
)
from stereosr.generator import (  # noqa: E402
    GeneratorConfig,
    SCGLAWeights,
    bucketize,
    generator_forward,
    scgla,
    temperature_attention,
)
from stereosr.losses import (  # noqa: E402
    LossWeights,
    adversarial_g_loss,
    d_loss,
    perceptual_residual_loss,
    pixel_l1,
    pyramid_l1,
    total_g_loss,
)
from stereosr.metrics import block_match_disparity, made, psnr_rgb, ssim  # noqa: E402
from stereosr.nn import Initializer  # noqa: E402
from stereosr.tensor import resize  # noqa: E402

RESULTS: list[str] = []


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# -- checks -------------------------------------------------------------------------

def check_kernels():
    t0 = time.perf_counter()
    g = SeededRng(2024).gen
    worst_sum, worst_rot, n = 0.0, 0.0, 0
    for i in range(500):
        size = int(g.choice([7, 9, 11, 13, 15, 17, 19, 21]))
        if i % 2:
            k = make_gaussian_kernel(size, g.uniform(0.2, 3), g.uniform(0.2, 3), g.uniform(0, math.pi))
        else:
            s = g.uniform(0.2, 3)
            k = make_gaussian_kernel(size, s, s, g.uniform(0, math.pi))
            rot = make_gaussian_kernel(size, s, s, g.uniform(0, math.pi))
            worst_rot = max(worst_rot, float(np.abs(k - rot).max()))
        worst_sum = max(worst_sum, abs(k.sum() - 1))
        k = make_sinc_kernel(size, g.uniform(1e-3, math.pi))
        worst_sum = max(worst_sum, abs(k.sum() - 1))
        n += 2
    dt = time.perf_counter() - t0
    ok = n == 1000 and worst_sum < 1e-6 and worst_rot < 1e-12 and dt < 5
    return record("kernel suite", ok,
                  f"{n} kernels, max |sum-1| {worst_sum:.1e}, isotropic rotation drift {worst_rot:.1e}, {dt:.2f}s")


def check_synth_determinism():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        for sub in ("left", "right"):
            (root / "hr" / sub).mkdir(parents=True)
        from stereosr.imageio import write_png
        for i in range(50):
            write_png(root / "hr" / "left" / f"{i:03d}.png", textured((3, 48, 64), 2 * i))
            write_png(root / "hr" / "right" / f"{i:03d}.png", textured((3, 48, 64), 2 * i + 1))
        codes = [cli_main(["synth", str(root / "hr"), str(root / out), "--seed", "7", "--workers", str(w)])
                 for out, w in (("w1", 1), ("w8", 8))]

        def tree(d):
            return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}

        a, b = tree(root / "w1"), tree(root / "w8")
    dt = time.perf_counter() - t0
    ok = codes == [0, 0] and a == b and len(a) == 101 and dt < 60
    return record("degradation determinism", ok,
                  f"50 pairs, workers 1 vs 8, {len(a)} files {'identical' if a == b else 'DIFFER'}, {dt:.1f}s")


def _all_sampled_ops(n_target):
    cfg = default_config()
    ops, seed = [], 0
    while len(ops) < n_target:
        rng = SeededRng(seed)
        shape = (96, 304)
        for sampler, tag in ((sample_stage1, "stage1"), (sample_stage2, "stage2"), (sample_stage3, "stage3")):
            ops += sampler(shape, cfg, rng.derive(tag))
        seed += 1
    return cfg, ops


def check_conformance():
    cfg, ops = _all_sampled_ops(10_000)
    bad = 0
    for op in ops:
        p = op.params
        if op.op == "blur":
            bad += not (0.2 <= p["sigma_x"] <= 1.5 and 0.2 <= p["sigma_y"] <= 1.5)
        elif op.op == "resize":
            bad += not 0.5 <= p["factor"] <= 1.2
        elif op.op == "noise" and p["kind"] == "gaussian":
            bad += not 1 <= p["level"] <= 15
        elif op.op == "noise":
            bad += not cfg.poisson_scale_range[0] <= p["level"] <= cfg.poisson_scale_range[1]
        elif op.op == "jpeg":
            bad += not 30 <= p["quality"] <= 95
    return record("shipped-config conformance", bad == 0, f"{len(ops)} sampled ops, {bad} violations")


def check_shuffle():
    cfg = replace(default_config(), enable_SO=True, skip_prob=0.0)
    n = 10_000
    counts = Counter()
    for seed in range(n):
        ops = sample_stage2((64, 64), cfg, SeededRng(seed).derive("stage2"))
        counts[tuple(k for k, _ in itertools.groupby(op.op for op in ops))] += 1
    p = 1 / 24
    sd = math.sqrt(n * p * (1 - p))
    worst = max(abs(c - n * p) / sd for c in counts.values())
    ok = len(counts) == 24 and worst <= 3
    return record("shuffle statistics", ok, f"{len(counts)}/24 orders seen, worst deviation {worst:.2f} sd")


def check_vb_ablation():
    def blur_pairs(cfg, seed):
        rng = SeededRng(seed)
        ops = sample_stage1((64, 64), cfg, rng.derive("stage1")) + sample_stage2((64, 64), cfg, rng.derive("stage2"))
        blurs = [op for op in ops if op.op == "blur"]
        return [(blurs[i], blurs[i + 1]) for i in range(0, len(blurs), 2)]

    def taps(op):
        return make_gaussian_kernel(op.params["size"], op.params["sigma_x"], op.params["sigma_y"], op.params["theta"])

    off, on = default_config().with_ablation([]), default_config().with_ablation(["VB"])
    off_pairs = [pr for s in range(1000) for pr in blur_pairs(off, s)]
    same = sum(left.params == right.params for left, right in off_pairs)
    on_pairs = [pr for s in range(1000) for pr in blur_pairs(on, s)]
    equal_taps = sum(np.array_equal(taps(left), taps(right)) for left, right in on_pairs)
    ok = same == len(off_pairs) and equal_taps == 0
    return record("ablation switches", ok,
                  f"VB off: {same}/{len(off_pairs)} identical; VB on: {equal_taps}/{len(on_pairs)} bit-equal taps")


def _attention_ref(f, w):
    n = f.shape[1]
    q, k, v = w.phi_q @ f, w.phi_k @ f, w.phi_v @ f
    out = np.zeros((v.shape[0], n))
    for i in range(n):
        sl = w.w2 @ np.maximum(w.w1 @ (w.phi_l @ f[:, i]) + w.b1, 0) + w.b2
        s = np.array([q[:, i] @ k[:, j] + (sl[j] if j < w.capacity else 0.0) for j in range(n)])
        e = np.exp(s - s.max())
        out[:, i] = v @ (e / e.sum())
    return out


def check_attention():
    r = np.random.default_rng(99)
    worst_scgla = 0.0
    for n in (1, 2, 7, 20, 33, 64):
        w = SCGLAWeights.init(8, Initializer(n), qk_dim=8, l_dim=8, hidden=8, capacity=64)
        f = r.normal(size=(8, n)) * 0.5
        worst_scgla = max(worst_scgla, float(np.abs(scgla(f, bucketize(f, 1, SeededRng(n)), w)
                                                    - _attention_ref(f, w)).max()))
    worst_tau = 0.0
    for _ in range(100):
        q, k, v = r.normal(size=(5, 4)), r.normal(size=(9, 4)), r.normal(size=(9, 3))
        worst_tau = max(worst_tau, float(np.abs(temperature_attention(q, k, v, 0.0) - v.mean(0)).max()))
    mismatches = 0
    for i in range(1000):
        c = int(r.integers(2, 17))
        b = int(r.integers(1, c + 1))
        x = r.normal(size=(c, int(r.integers(1, 60))))
        hb = bucketize(x, b, SeededRng(i))
        brute = [max(range(b), key=lambda row: (hb.M[row] @ x[:, j], -row)) for j in range(x.shape[1])]
        mismatches += hb.assignment.tolist() != brute
    ok = worst_scgla < 1e-5 and worst_tau < 1e-9 and mismatches == 0
    return record("attention oracles", ok,
                  f"scgla b=1 err {worst_scgla:.1e}, tau=0 err {worst_tau:.1e}, bucketize {mismatches}/1000 mismatches")


def check_generator():
    r = np.random.default_rng(5)
    lr = StereoPair(r.random((3, 12, 20)), r.random((3, 12, 20)))
    zero_ok, shape_ok = True, True
    for s in (2, 4):
        out = generator_forward(lr, GeneratorConfig(scale=s, zero_weights=True))
        zero_ok &= np.array_equal(out.left, resize(lr.left, 12 * s, 20 * s, "bilinear"))
        zero_ok &= np.array_equal(out.right, resize(lr.right, 12 * s, 20 * s, "bilinear"))
        shape_ok &= generator_forward(lr, GeneratorConfig(scale=s)).shape == (3, 12 * s, 20 * s)
    a, b = generator_forward(lr, GeneratorConfig(seed=11)), generator_forward(lr, GeneratorConfig(seed=11))
    repro = np.array_equal(a.left, b.left) and np.array_equal(a.right, b.right)
    return record("generator identities", zero_ok and shape_ok and repro,
                  f"zero-weight == bilinear: {zero_ok}, shapes x2/x4: {shape_ok}, bit-reproducible: {repro}")


def check_discriminator():
    r = np.random.default_rng(8)
    p = StereoPair(r.random((3, 32, 40)), r.random((3, 32, 40)))
    mirror = 0.0
    for v in DISC_VARIANTS:
        w = build_discriminator_weights(3, v)
        mirror = max(mirror, float(np.abs(discriminator_forward(p, w).d_map
                                          - discriminator_forward(p.swap(), w.mirrored()).d_map).max()))
    worst_sn = 0.0
    for i in range(64):
        m = r.normal(size=(int(r.integers(2, 65)), int(r.integers(2, 130)))) * r.uniform(0.1, 10)
        conv = spectral_normalize(SpectralConv.create(m[:, :, None, None], np.zeros(m.shape[0]), SeededRng(i)), 500)
        top = np.linalg.svd(conv.normalized_weight.reshape(m.shape), compute_uv=False)[0]
        worst_sn = max(worst_sn, abs(top - 1))
    w = build_discriminator_weights(4)
    fl, fr = unet_features(p, w)
    worst_rows = 0.0
    for a, b, iw in zip(fl.scales(), fr.scales(), w.idems):
        for m in idem(a, b, iw, return_attention=True)[1]:
            worst_rows = max(worst_rows, float(np.abs(m.sum(-1) - 1).max()))
    ok = mirror < 1e-6 and worst_sn < 1e-3 and worst_rows < 1e-9
    return record("discriminator properties", ok,
                  f"mirror err {mirror:.1e}, SN |sigma-1| over 64 SVDs {worst_sn:.1e}, attention row err {worst_rows:.1e}")


def check_losses():
    r = np.random.default_rng(12)
    sr = StereoPair(r.random((3, 8, 8)), r.random((3, 8, 8)))
    hr = StereoPair(r.random((3, 8, 8)), r.random((3, 8, 8)))
    l1_loop = sum(abs(a - b) for u, v in ((sr.left, hr.left), (sr.right, hr.right))
                  for a, b in zip(u.ravel(), v.ravel())) / (2 * sr.left.size)
    errs = [abs(pixel_l1(sr, hr) - l1_loop)]
    per = perceptual_residual_loss(sr, hr)
    errs.append(abs(per - (pyramid_l1(sr.left, hr.left) + pyramid_l1(sr.right, hr.right)
                           + 0.1 * pyramid_l1((sr.right - sr.left + 1) / 2, (hr.right - hr.left + 1) / 2))))
    errs += [abs(adversarial_g_loss(0.3) - 0.7), abs(d_loss(-2.5) - 2.5)]
    w = LossWeights()
    totals = [total_g_loss(1, 1, 1, w), total_g_loss(0.2, 0.5, 0.1, w)]
    errs += [abs(totals[0] - 2.1), abs(totals[1] - 0.35)]
    exact = (w.gamma, w.lam, w.eta, w.epsilon) == (1.0, 0.1, 1.0, 0.1)
    ok = max(errs) < 1e-9 and exact
    return record("loss arithmetic", ok, f"max oracle err {max(errs):.1e}, totals {totals[0]:.12g} / {totals[1]:.12g}")


def check_metrics():
    a = np.full((3, 16, 16), 0.3)
    p20 = psnr_rgb(a, a + 0.1)
    x = textured((3, 32, 32), 1)
    s1 = ssim(x, x)
    pair = shifted_pair(5)
    m0 = made(pair, pair, d_max=16)
    dm = block_match_disparity(shifted_pair(5, noise=2 / 255), d_max=16)
    within = float(np.mean(np.abs(dm.values[dm.valid] - 5) <= 1))
    m1 = made(shifted_pair(5), shifted_pair(4), d_max=16)
    ok = abs(p20 - 20) < 1e-6 and abs(s1 - 1) < 1e-12 and m0 == 0 and within >= 0.95 and abs(m1 - 1) <= 0.2
    return record("metric suite", ok,
                  f"PSNR {p20:.9f} dB, SSIM(x,x) {s1:.12f}, MADE(x,x) {m0}, "
                  f"shift-5 within 1px {within:.1%}, MADE(4 vs 5) {m1:.3f}")


CHECKS = [check_kernels, check_synth_determinism, check_conformance, check_shuffle, check_vb_ablation,
          check_attention, check_generator, check_discriminator, check_losses, check_metrics]


@pytest.mark.parametrize("check", CHECKS, ids=[c.__name__.removeprefix("check_") for c in CHECKS])
def test_acceptance(check):
    assert check(), RESULTS[-1]


if __name__ == "__main__":
    t0 = time.perf_counter()
    passed = sum(bool(c()) for c in CHECKS)
    print(f"{passed}/{len(CHECKS)} criteria passed in {time.perf_counter() - t0:.1f}s")
    sys.exit(0 if passed == len(CHECKS) else 1)
