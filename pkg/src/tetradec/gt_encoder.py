"""Ground-truth encoding: four-corner annotations to heatmaps and offset maps.

Targets live at feature-map resolution (image dims / stride, rounded up).
Heat channel layout is [corner_type, class, row, col]; offsets are
[corner_type, (dx, dy), row, col] sub-cell displacements in [0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidAnnotation
from .geometry import Tetragon

__all__ = [
    "Annotation",
    "ObjectCorners",
    "TargetMaps",
    "gaussian_radius",
    "encode_targets",
]

RADIUS_MIN = 2
RADIUS_MAX = 15
RADIUS_SCALE = 0.05


@dataclass(frozen=True)
class Annotation:
    """One labelled object: a class id and a valid tetragon in image pixels."""

    class_id: int
    tetragon: Tetragon


@dataclass
class ObjectCorners:
    """Feature-map footprint of one object.

    cells: (4, 2) int array of (row, col) peak cells in corner order tl,tr,bl,br.
    subpixel: (4, 2) float array of (dx, dy) sub-cell offsets at those cells.
    """

    class_id: int
    cells: np.ndarray
    subpixel: np.ndarray


@dataclass
class TargetMaps:
    """Encoded ground truth for one image.

    heat: (4, C, Hf, Wf) float32 in [0, 1], exactly 1.0 at each object corner cell.
    offset: (4, 2, Hf, Wf) float32; (dx, dy) written only at peak cells.
    """

    heat: np.ndarray
    offset: np.ndarray
    objects: list[ObjectCorners] = field(default_factory=list)
    stride: int = 4

    @property
    def num_classes(self) -> int:
        return self.heat.shape[1]

    @property
    def feat_shape(self) -> tuple[int, int]:
        return self.heat.shape[2], self.heat.shape[3]


def gaussian_radius(t: Tetragon, stride: int) -> int:
    """Heat-spread radius (feature cells) for an object, from its bbox size.

    r = clamp(round(0.05 * sqrt(bbox_area) / stride), 2, 15), rounding half up.
    """
    x0, y0, x1, y1 = t.bbox()
    bbox_area = (x1 - x0) * (y1 - y0)
    raw = RADIUS_SCALE * math.sqrt(bbox_area) / stride
    return int(min(RADIUS_MAX, max(RADIUS_MIN, math.floor(raw + 0.5))))


def _gaussian_window(radius: int) -> np.ndarray:
    """(2r+1, 2r+1) Gaussian bump with sigma = r/3, peak value 1 at the center."""
    sigma = radius / 3.0
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    dist2 = d[:, None] ** 2 + d[None, :] ** 2
    return np.exp(-dist2 / (2.0 * sigma * sigma))


def splat_gaussian(heat2d: np.ndarray, row: int, col: int, radius: int,
                   peak: float = 1.0) -> None:
    """Max-combine a Gaussian bump (scaled to `peak`) into a 2-D map in place.

    The window is clipped at the map bounds; the center cell is forced to
    exactly `peak`.
    """
    hf, wf = heat2d.shape
    g = peak * _gaussian_window(radius)
    r0 = max(0, row - radius)
    r1 = min(hf, row + radius + 1)
    c0 = max(0, col - radius)
    c1 = min(wf, col + radius + 1)
    gw = g[r0 - (row - radius):r1 - (row - radius),
           c0 - (col - radius):c1 - (col - radius)]
    np.maximum(heat2d[r0:r1, c0:c1], gw, out=heat2d[r0:r1, c0:c1])
    heat2d[row, col] = max(heat2d[row, col], peak)


def _check_annotation(ann: Annotation, num_classes: int, img_w: int, img_h: int) -> None:
    if not (0 <= ann.class_id < num_classes):
        raise InvalidAnnotation(
            f"class id {ann.class_id} outside [0, {num_classes})")
    if not ann.tetragon.is_valid():
        raise InvalidAnnotation(f"tetragon fails validity: {ann.tetragon}")
    for p in ann.tetragon.corners():
        if not (0.0 <= p.x < img_w and 0.0 <= p.y < img_h):
            raise InvalidAnnotation(
                f"corner ({p.x}, {p.y}) outside image {img_w}x{img_h}")


def encode_targets(anns: list[Annotation], num_classes: int,
                   img_w: int, img_h: int, stride: int = 4) -> TargetMaps:
    """Encode annotations into heat/offset target maps.

    For every object and corner type the peak cell is floor(corner / stride);
    a Gaussian with sigma = r/3 fills the (2r+1)^2 window around it (clipped
    to the map), overlapping objects combine by element-wise max, and the peak
    cell is forced to exactly 1.0. The sub-cell remainder is stored in the
    offset map at the peak cell.
    """
    hf = math.ceil(img_h / stride)
    wf = math.ceil(img_w / stride)
    heat = np.zeros((4, num_classes, hf, wf), dtype=np.float32)
    offset = np.zeros((4, 2, hf, wf), dtype=np.float32)
    objects: list[ObjectCorners] = []
    for ann in anns:
        _check_annotation(ann, num_classes, img_w, img_h)
        radius = gaussian_radius(ann.tetragon, stride)
        cells = np.zeros((4, 2), dtype=np.int64)
        subpix = np.zeros((4, 2), dtype=np.float64)
        for i, p in enumerate(ann.tetragon.corners()):
            cx = p.x / stride
            cy = p.y / stride
            col = int(math.floor(cx))
            row = int(math.floor(cy))
            splat_gaussian(heat[i, ann.class_id], row, col, radius)
            offset[i, 0, row, col] = cx - col
            offset[i, 1, row, col] = cy - row
            cells[i] = (row, col)
            subpix[i] = (cx - col, cy - row)
        objects.append(ObjectCorners(ann.class_id, cells, subpix))
    return TargetMaps(heat=heat, offset=offset, objects=objects, stride=stride)
