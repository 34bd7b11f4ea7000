import os

import numpy as np
import pytest
from hypothesis import settings

# Deterministic hypothesis runs: same examples every invocation.
settings.register_profile("deterministic", derandomize=True, max_examples=200)
settings.load_profile("deterministic")

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def photo_path() -> str:
    path = os.path.join(FIXTURE_DIR, "photo.png")
    assert os.path.exists(path), "bundled fixture photo is missing; run tools/make_fixtures.py"
    return path


@pytest.fixture(scope="session")
def photo(photo_path) -> np.ndarray:
    from emp.image import load_png

    return load_png(photo_path)


def brute_force_ssim_plane(a, b, data_range: float = 255.0) -> float:
    """Independent direct-window SSIM: explicit loops, explicit 11x11 kernel,
    edge-including mirror padding, no crop.  Only used as a test oracle."""
    sigma, truncate = 1.5, 3.5
    r = int(truncate * sigma + 0.5)
    win = 2 * r + 1
    g1 = np.exp(-0.5 * (np.arange(win) - r) ** 2 / sigma**2)
    g1 /= g1.sum()
    kernel = np.outer(g1, g1)
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    h, w = x.shape
    xp = np.pad(x, r, mode="symmetric")
    yp = np.pad(y, r, mode="symmetric")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    total = 0.0
    for i in range(h):
        for j in range(w):
            wx = xp[i : i + win, j : j + win]
            wy = yp[i : i + win, j : j + win]
            ux = (kernel * wx).sum()
            uy = (kernel * wy).sum()
            vx = (kernel * wx * wx).sum() - ux * ux
            vy = (kernel * wy * wy).sum() - uy * uy
            vxy = (kernel * wx * wy).sum() - ux * uy
            total += ((2 * ux * uy + c1) * (2 * vxy + c2)) / (
                (ux * ux + uy * uy + c1) * (vx + vy + c2)
            )
    return total / (h * w)


def fixture_8x8_pair():
    """The frozen 8x8 SSIM fixture pair (deterministic integer pattern)."""
    base = (np.arange(64).reshape(8, 8) * 37 + 11) % 251
    distorted = (base + np.arange(64).reshape(8, 8) % 17 * 5 - 20) % 256
    return base.astype(np.uint8), distorted.astype(np.uint8)


# Offline reference value of brute_force_ssim_plane(*fixture_8x8_pair()),
# frozen so the acceptance check does not depend on re-running the oracle.
FIXTURE_8X8_SSIM = 0.50903838899216136
