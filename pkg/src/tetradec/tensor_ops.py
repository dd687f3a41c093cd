"""Minimal tensor primitives for the detection head: corner pooling, peak NMS, top-k."""

from __future__ import annotations

from enum import IntEnum

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import ShapeError

__all__ = ["CornerType", "corner_pool", "nms_3x3", "topk"]


class CornerType(IntEnum):
    TL = 0
    TR = 1
    BL = 2
    BR = 3


def _running_max(a: np.ndarray, axis: int, from_end: bool) -> np.ndarray:
    """Cumulative maximum along an axis; from_end=True scans from the far edge,
    so each cell holds the max over the suffix starting at that cell."""
    if from_end:
        return np.flip(np.maximum.accumulate(np.flip(a, axis), axis), axis)
    return np.maximum.accumulate(a, axis)


# Per corner type: does the horizontal / vertical scan window extend toward
# the far edge (suffix) or the near edge (prefix)? TL looks right+down, BR
# looks left+up; TR and BL are their mirror images.
_POOL_SUFFIX = {
    CornerType.TL: (True, True),   # (cols toward right, rows toward bottom)
    CornerType.TR: (False, True),
    CornerType.BL: (True, False),
    CornerType.BR: (False, False),
}


def corner_pool(features: np.ndarray, corner_type: CornerType) -> np.ndarray:
    """Directional corner pooling over a (C, H, W) tensor.

    Each output cell is the sum of the running maximum over its half-row and
    the running maximum over its half-column, with scan directions chosen per
    corner type (e.g. TL pools over everything to the right and below).
    """
    features = np.asarray(features)
    if features.ndim != 3:
        raise ShapeError(f"corner_pool expects (C, H, W), got {features.shape}")
    cols_suffix, rows_suffix = _POOL_SUFFIX[CornerType(corner_type)]
    horiz = _running_max(features, axis=2, from_end=cols_suffix)
    vert = _running_max(features, axis=1, from_end=rows_suffix)
    return horiz + vert


def nms_3x3(heat: np.ndarray, window: int = 3) -> np.ndarray:
    """Keep cells equal to the max of their (edge-clamped) window, zero the rest.

    Ties are all kept, so plateaus survive.
    """
    heat = np.asarray(heat)
    if heat.ndim != 2:
        raise ShapeError(f"nms_3x3 expects (H, W), got {heat.shape}")
    local_max = maximum_filter(heat, size=window, mode="nearest")
    return np.where(heat == local_max, heat, 0.0).astype(heat.dtype, copy=False)


def topk(heat: np.ndarray, k: int) -> list[tuple[int, int, float]]:
    """The k largest cells of a 2-D map as (row, col, value), value-descending.

    Ties break toward the smaller row-major linear index. Returns fewer than k
    entries when the map has fewer cells.
    """
    heat = np.asarray(heat)
    if heat.ndim != 2:
        raise ShapeError(f"topk expects (H, W), got {heat.shape}")
    if k < 1:
        raise ValueError("k must be >= 1")
    flat = heat.ravel()
    order = np.argsort(-flat, kind="stable")[:k]
    w = heat.shape[1]
    return [(int(i // w), int(i % w), float(flat[i])) for i in order]
