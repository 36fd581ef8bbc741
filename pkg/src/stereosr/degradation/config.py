from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path

import yaml

RANGE_FIELDS = (
    "blur_sigma_range",
    "resize_range",
    "noise_range",
    "poisson_scale_range",
    "jpeg_range",
    "sinc_cutoff_range",
)
PROB_FIELDS = ("anisotropic_prob", "sinc_prob", "skip_prob")
ABLATION_SWITCHES = ("SO", "VB", "VN")


@dataclass(frozen=True)
class DegradationConfig:
    """Sampling ranges for the three-stage degradation; defaults are Flickr1024RS."""

    scale: int = 4
    blur_sigma_range: tuple[float, float] = (0.2, 1.5)
    kernel_size: int = 21
    anisotropic_prob: float = 0.5
    resize_range: tuple[float, float] = (0.5, 1.2)
    noise_range: tuple[float, float] = (1.0, 15.0)
    poisson_scale_range: tuple[float, float] = (0.5, 3.0)
    jpeg_range: tuple[int, int] = (30, 95)
    sinc_prob: float = 0.8
    sinc_cutoff_range: tuple[float, float] = (1.0471975511965976, 3.141592653589793)
    skip_prob: float = 0.2
    enable_SO: bool = True
    enable_VB: bool = True
    enable_VN: bool = True

    def __post_init__(self):
        for name in RANGE_FIELDS:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lo {lo} > hi {hi}")
            object.__setattr__(self, name, (lo, hi))
        for name in PROB_FIELDS:
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.blur_sigma_range[0] <= 0:
            raise ValueError("blur sigmas must be positive")
        if self.noise_range[0] <= 0 or self.poisson_scale_range[0] <= 0:
            raise ValueError("noise levels must be positive")
        lo, hi = self.jpeg_range
        if not (1 <= lo and hi <= 100) or int(lo) != lo or int(hi) != hi:
            raise ValueError(f"jpeg_range must hold integers in [1, 100], got {self.jpeg_range}")
        lo, hi = self.sinc_cutoff_range
        if not (0 < lo and hi <= 3.141592653589794):
            raise ValueError(f"sinc_cutoff_range must lie in (0, pi], got {self.sinc_cutoff_range}")

    def with_ablation(self, enabled) -> "DegradationConfig":
        """Turn on exactly the listed switches out of SO/VB/VN."""
        enabled = {s.upper() for s in enabled}
        unknown = enabled - set(ABLATION_SWITCHES)
        if unknown:
            raise ValueError(f"unknown ablation switches: {sorted(unknown)}")
        return replace(self, **{f"enable_{s}": s in enabled for s in ABLATION_SWITCHES})

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in RANGE_FIELDS:
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "DegradationConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        data = {k: tuple(v) if k in RANGE_FIELDS else v for k, v in data.items()}
        return cls(**data)


def load_config(path) -> DegradationConfig:
    with open(path) as fh:
        return DegradationConfig.from_dict(yaml.safe_load(fh) or {})


def save_config(cfg: DegradationConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


def default_config() -> DegradationConfig:
    text = resources.files("stereosr.data").joinpath("flickr1024rs.yaml").read_text()
    return DegradationConfig.from_dict(yaml.safe_load(text))
