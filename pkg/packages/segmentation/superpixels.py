"""Superpixel layers: axis-aligned blocks or external label maps."""
from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from packages.shared.errors import ModelFormatError

Region = NDArray[np.intp]


def _shape_of(image) -> Tuple[int, int]:
    shape = getattr(image, "shape", image)
    return int(shape[0]), int(shape[1])


def grid_superpixels(image, block: int) -> List[Region]:
    """Partition the pixels into block x block tiles (smaller tiles along the far edges).

    `image` is anything with a (height, width, ...) shape, or the shape itself.
    Regions hold flat row-major pixel indices.
    """
    if block < 2:
        raise ValueError(f"superpixel block must be at least 2, got {block}")
    height, width = _shape_of(image)
    index = np.arange(height * width, dtype=np.intp).reshape(height, width)
    return [
        index[r:r + block, c:c + block].ravel()
        for r in range(0, height, block)
        for c in range(0, width, block)
    ]


def load_superpixels(label_map: np.ndarray, shape=None) -> List[Region]:
    """One region per distinct label, in ascending label order."""
    labels = np.asarray(label_map)
    if labels.ndim != 2:
        raise ModelFormatError(f"label map must be 2-d, got shape {labels.shape}")
    if shape is not None and labels.shape != _shape_of(shape):
        raise ModelFormatError(f"label map of shape {labels.shape} does not match image {_shape_of(shape)}")
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    values, starts = np.unique(flat[order], return_index=True)
    return [r.astype(np.intp) for r in np.split(order, starts[1:])]


def layered_superpixels(image, blocks: Sequence[int]) -> List[Region]:
    """Several overlapping block layers, one per granularity."""
    regions: List[Region] = []
    for block in blocks:
        regions.extend(grid_superpixels(image, block))
    return regions
