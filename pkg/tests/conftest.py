import sys
import time

import numpy as np
import pytest
from scipy import ndimage

from stereosr import StereoPair

SUITE_BUDGET_S = 300.0
_session_start = time.perf_counter()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def textured(shape, seed=0, smooth=1.0):
    """Band-limited random texture stretched to [0, 1]."""
    r = np.random.default_rng(seed)
    x = ndimage.gaussian_filter(r.random(shape), (0, smooth, smooth))
    return (x - x.min()) / (x.max() - x.min())


def shifted_pair(shift, h=48, w=96, noise=0.0, seed=0):
    """Rectified pair whose every left pixel x sits at x - shift in the right view."""
    big = textured((3, h, w + shift + 8), seed=seed)
    left, right = big[:, :, :w], big[:, :, shift:shift + w]
    if noise:
        r = np.random.default_rng(seed + 1)
        left = np.clip(left + r.normal(0, noise, left.shape), 0, 1)
        right = np.clip(right + r.normal(0, noise, right.shape), 0, 1)
    return StereoPair(left, right)


def smooth_gradient(h=32, w=48):
    yy, xx = np.mgrid[0:h, 0:w]
    return np.stack([xx / (w - 1), yy / (h - 1), 0.5 * (xx / (w - 1) + yy / (h - 1))])


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    elapsed = time.perf_counter() - _session_start
    terminalreporter.section("acceptance criteria")
    for line in acceptance.RESULTS:
        terminalreporter.write_line(line)
    verdict = "PASS" if elapsed < SUITE_BUDGET_S else "FAIL"
    terminalreporter.write_line(f"{verdict}  full suite runtime: {elapsed:.1f}s (budget {SUITE_BUDGET_S:.0f}s, offline)")
