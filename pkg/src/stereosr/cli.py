"""``stereosr`` command line: dataset synthesis, generator smoke runs, evaluation.

Exit codes: 0 success, 1 partial or total failure, 2 invalid invocation.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .degradation import DegradationConfig, default_config, degrade_pair, load_config
from .discriminator import DISC_VARIANTS, build_discriminator_weights, discriminator_forward
from .generator import GeneratorConfig, build_generator_weights, generator_forward
from .imageio import read_png, to_uint8, write_png
from .metrics import DEFAULT_DMAX, DEFAULT_WINDOW, made_with_coverage, psnr_rgb, ssim
from .nn import named_arrays, save_weights
from .tensor import StereoPair, resize

log = logging.getLogger("stereosr")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
IMAGE_SUFFIXES = (".png", ".npy")
MAX_OUTPUT_PIXELS = 4096 * 4096
RECORD_FILE = "degradation.jsonl"
CSV_COLUMNS = ["pair-id", "psnr", "ssim", "made", "valid-fraction", "error"]


def read_image(path: Path) -> np.ndarray:
    """PNG (8-bit RGB) or .npy holding a float (C, H, W) array in [0, 1]."""
    if path.suffix == ".npy":
        arr = np.load(path)
        if arr.ndim != 3:
            raise ValueError(f"{path}: expected a (C, H, W) array")
        return arr.astype(np.float64)
    return read_png(path)


def find_pairs(root: Path) -> tuple[list[str], list[str]]:
    """Names present in both ``left/`` and ``right/``, plus the unmatched ones."""
    def names(sub):
        d = root / sub
        return {p.name for p in d.iterdir() if p.suffix in IMAGE_SUFFIXES} if d.is_dir() else set()

    left, right = names("left"), names("right")
    return sorted(left & right), sorted(left ^ right)


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.6f}"


# -- synth -----------------------------------------------------------------------

def _synth_one(job):
    root, out, name, cfg, seed = job
    hr = StereoPair(read_image(root / "left" / name), read_image(root / "right" / name))
    _, h, w = hr.shape
    s = cfg.scale
    if h % s or w % s:
        hr = hr.map(lambda x: x[:, : h - h % s, : w - w % s])
    lr, record = degrade_pair(hr, cfg, seed)
    record.pair_id = name
    stem = Path(name).with_suffix(".png").name
    write_png(out / "left" / stem, lr.left)
    write_png(out / "right" / stem, lr.right)
    return record.to_json()


def cmd_synth(args) -> int:
    cfg = load_config(args.config) if args.config else default_config()
    if args.scale:
        cfg = replace(cfg, scale=args.scale)
    if args.ablation is not None:
        cfg = cfg.with_ablation(args.ablation)
    root, out = Path(args.input), Path(args.output)
    pairs, unmatched = find_pairs(root)
    for name in unmatched:
        log.warning("skipping %s: no same-named image in the other view", name)
    if not pairs:
        log.error("no pairs found under %s", root)
        return EXIT_PARTIAL
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(root, out, name, cfg, (args.seed ^ i) & 0xFFFFFFFFFFFFFFFF) for i, name in enumerate(pairs)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            lines = list(pool.map(_synth_one, jobs))
    else:
        lines = [_synth_one(job) for job in jobs]
    (out / RECORD_FILE).write_text("".join(line + "\n" for line in lines))
    log.info("wrote %d LR pairs to %s", len(lines), out)
    return EXIT_OK


# -- eval ------------------------------------------------------------------------

def evaluate_pair(sr: StereoPair, hr: StereoPair, d_max: int, window: int) -> dict:
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: SR {sr.shape} vs HR {hr.shape}")
    d_max = min(d_max, hr.shape[2] - 1)
    made_value, coverage = made_with_coverage(sr, hr, d_max, window)
    return {
        "psnr": 0.5 * (psnr_rgb(sr.left, hr.left) + psnr_rgb(sr.right, hr.right)),
        "ssim": 0.5 * (ssim(sr.left, hr.left) + ssim(sr.right, hr.right)),
        "made": made_value,
        "valid-fraction": coverage,
    }


def cmd_eval(args) -> int:
    sr_root, hr_root = Path(args.sr_dir), Path(args.hr_dir)
    names, unmatched = find_pairs(hr_root)
    if not names:
        log.error("no pairs found under %s", hr_root)
        return EXIT_PARTIAL
    rows, failed = [], bool(unmatched)
    for name in names:
        row = {"pair-id": name}
        try:
            hr = StereoPair(read_image(hr_root / "left" / name), read_image(hr_root / "right" / name))
            sr = StereoPair(read_image(sr_root / "left" / name), read_image(sr_root / "right" / name))
            if args.upsample and sr.shape != hr.shape:
                _, h, w = hr.shape
                sr = sr.map(lambda x: resize(x, h, w, "bicubic"))
            row.update(evaluate_pair(sr, hr, args.dmax, args.window))
        except Exception as exc:  # noqa: BLE001 -- one bad pair must not stop the report
            log.warning("%s: %s", name, exc)
            row["error"] = str(exc)
            failed = True
        rows.append(row)

    good = [r for r in rows if "error" not in r]
    summary = {"pair-id": "mean"}
    for key in ("psnr", "ssim", "made", "valid-fraction"):
        if good:
            summary[key] = float(np.mean([r[key] for r in good]))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows + [summary]:
            writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    finally:
        if args.out:
            out.close()
    return EXIT_PARTIAL if failed else EXIT_OK


# -- forward ---------------------------------------------------------------------

def cmd_forward(args) -> int:
    cfg = GeneratorConfig.load(args.config) if args.config else GeneratorConfig()
    if args.scale:
        cfg = replace(cfg, scale=args.scale)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    root, out = Path(args.lr_dir), Path(args.output)
    names, unmatched = find_pairs(root)
    if not names:
        log.error("no pairs found under %s", root)
        return EXIT_PARTIAL
    out.mkdir(parents=True, exist_ok=True)
    weights = build_generator_weights(cfg)
    save_weights(out / "generator_weights.bin", named_arrays(weights))
    disc = None
    if args.disc_variant:
        disc = build_discriminator_weights(cfg.seed, args.disc_variant)
        save_weights(out / "discriminator_weights.bin", named_arrays(disc))
    scores, failed = [], bool(unmatched)
    for name in names:
        lr = StereoPair(read_image(root / "left" / name), read_image(root / "right" / name))
        _, h, w = lr.shape
        if h * w * cfg.scale**2 > MAX_OUTPUT_PIXELS:
            log.error("%s: input %dx%d too large for a x%d forward pass (size guard %d output pixels)",
                      name, h, w, cfg.scale, MAX_OUTPUT_PIXELS)
            failed = True
            continue
        sr = generator_forward(lr, cfg, weights)
        stem = Path(name).with_suffix(".png").name
        write_png(out / "left" / stem, sr.left)
        write_png(out / "right" / stem, sr.right)
        if disc is not None:
            quantised = sr.map(lambda x: to_uint8(x).transpose(2, 0, 1) / 255.0)
            scores.append((name, discriminator_forward(quantised, disc).d_scalar))
    if disc is not None:
        with open(out / "disc_scores.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["pair-id", "d_scalar"])
            writer.writerows((n, f"{s:.9f}") for n, s in scores)
    return EXIT_PARTIAL if failed else EXIT_OK


# -- entry point -----------------------------------------------------------------

def _switches(text: str) -> list[str]:
    if text.lower() == "none":
        return []
    return [s.strip().upper() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stereosr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="degrade an HR stereo corpus into LR pairs")
    s.add_argument("input", help="directory with left/ and right/ HR images")
    s.add_argument("output")
    s.add_argument("--config", help="degradation config (YAML); defaults to Flickr1024RS")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--scale", type=int)
    s.add_argument("--ablation", type=_switches, metavar="SO,VB,VN",
                   help="enable exactly these switches ('none' for the baseline)")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="PSNR/SSIM/MADE report as CSV")
    e.add_argument("sr_dir")
    e.add_argument("hr_dir")
    e.add_argument("--dmax", type=int, default=DEFAULT_DMAX)
    e.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    e.add_argument("--upsample", action="store_true", help="bicubic-resize SR images to the HR size first")
    e.add_argument("--out", help="CSV path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("forward", help="run the seeded generator over an LR corpus")
    f.add_argument("lr_dir")
    f.add_argument("output")
    f.add_argument("--config", help="generator config (YAML)")
    f.add_argument("--seed", type=int)
    f.add_argument("--scale", type=int, choices=(2, 4))
    f.add_argument("--disc-variant", choices=DISC_VARIANTS,
                   help="also score outputs with this discriminator layout")
    f.set_defaults(func=cmd_forward)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
