from .config import DegradationConfig, default_config, load_config, save_config
from .kernels import make_gaussian_kernel, make_sinc_kernel
from .noise import add_gaussian_noise, add_poisson_noise
from .pipeline import (
    DegradationOp,
    DegradationRecord,
    apply_ops,
    degrade_pair,
    replay,
    sample_stage1,
    sample_stage2,
    sample_stage3,
    stage1,
    stage2,
    stage2_plan,
    stage3,
)
from ..imageio import jpeg_roundtrip

__all__ = [
    "DegradationConfig",
    "DegradationOp",
    "DegradationRecord",
    "add_gaussian_noise",
    "add_poisson_noise",
    "apply_ops",
    "default_config",
    "degrade_pair",
    "jpeg_roundtrip",
    "load_config",
    "make_gaussian_kernel",
    "make_sinc_kernel",
    "replay",
    "sample_stage1",
    "sample_stage2",
    "sample_stage3",
    "save_config",
    "stage1",
    "stage2",
    "stage2_plan",
    "stage3",
]
