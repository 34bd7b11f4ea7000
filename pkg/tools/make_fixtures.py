#!/usr/bin/env python3
"""Regenerate the deterministic test fixtures.

The bundled photo is a synthetic landscape (sky gradient, sun disk, two
hill ridges, textured ground) rendered from a fixed seed, standing in for
a real photograph that the repository does not redistribute.
"""

import os

import numpy as np

from emp.image import save_png

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")


def make_photo(h: int = 96, w: int = 128, seed: int = 2024) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = xx / (w - 1), yy / (h - 1)

    r = 120 + 90 * (1 - v)
    g = 110 + 70 * (1 - v)
    b = 150 + 90 * (1 - v)

    d = np.hypot(xx - 0.72 * w, yy - 0.22 * h)
    sun = np.clip(1.0 - d / 14.0, 0, 1) ** 1.5
    r += 120 * sun
    g += 100 * sun
    b += 60 * sun

    ridge1 = 0.55 * h + 8 * np.sin(2 * np.pi * u * 1.7 + 0.5)
    ridge2 = 0.72 * h + 6 * np.sin(2 * np.pi * u * 2.9 + 2.1)
    hill1 = yy > ridge1
    hill2 = yy > ridge2
    r[hill1], g[hill1], b[hill1] = 60 + 30 * v[hill1], 90 + 40 * v[hill1], 60 + 20 * v[hill1]
    r[hill2], g[hill2], b[hill2] = 45 + 50 * v[hill2], 70 + 60 * v[hill2], 40 + 30 * v[hill2]

    tex = rng.normal(0, 9, size=(h, w))
    r += np.where(hill2, tex, 0) + rng.normal(0, 2.5, (h, w))
    g += np.where(hill2, tex * 0.8, 0) + rng.normal(0, 2.5, (h, w))
    b += np.where(hill2, tex * 0.6, 0) + rng.normal(0, 2.5, (h, w))
    return np.clip(np.stack([r, g, b], axis=2), 0, 255).astype(np.uint8)


def main() -> None:
    os.makedirs(FIXTURE_DIR, exist_ok=True)
    path = os.path.join(FIXTURE_DIR, "photo.png")
    save_png(make_photo(), path)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
