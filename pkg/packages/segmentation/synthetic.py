"""Noisy two-region test images with exact ground truth."""
from __future__ import annotations

from typing import Literal, Sequence, Tuple

import numpy as np

FOREGROUND = (0.8, 0.2, 0.2)
BACKGROUND = (0.2, 0.2, 0.8)


def two_region_image(
    height: int = 48,
    width: int = 48,
    shape: Literal["disc", "box"] = "disc",
    noise: float = 0.1,
    seed: int = 0,
    foreground: Sequence[float] = FOREGROUND,
    background: Sequence[float] = BACKGROUND,
) -> Tuple[np.ndarray, np.ndarray]:
    """(rgb in [0, 1], truth mask) for a centred disc or box on a flat background.

    The disc radius is 3/8 of the shorter side, so it contains the default
    foreground seed box.
    """
    rows, cols = np.mgrid[0:height, 0:width]
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    if shape == "disc":
        radius = 0.375 * min(height, width)
        truth = (rows - cy) ** 2 + (cols - cx) ** 2 <= radius ** 2
    elif shape == "box":
        truth = (np.abs(rows - cy) <= height / 4.0) & (np.abs(cols - cx) <= width / 4.0)
    else:
        raise ValueError(f"unknown foreground shape {shape!r}")
    rgb = np.where(truth[..., None], np.asarray(foreground, dtype=float), np.asarray(background, dtype=float))
    rng = np.random.default_rng(seed)
    rgb = np.clip(rgb + noise * rng.standard_normal(rgb.shape), 0.0, 1.0)
    return rgb, truth
