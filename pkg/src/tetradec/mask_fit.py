"""Approximate a binary segmentation mask by the best-overlapping valid tetragon.

The objective is rasterized IoU at mask resolution, maximized by deterministic
coordinate descent over the four vertices with a coarse-to-fine integer
perturbation schedule. Rasterization uses a scanline fill with half-open
boundaries: pixel (r, c) is inside iff its center (c+0.5, r+0.5) is covered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMask, EmptyMask
from .geometry import Point2, Tetragon, is_valid

__all__ = ["BinaryMask", "FitResult", "rasterize", "fit_tetragon"]

PERTURBATION_SCHEDULE = (8, 4, 2, 1)


@dataclass
class BinaryMask:
    """A row-major binary mask; `bits` is a (height, width) bool array."""

    width: int
    height: int
    bits: np.ndarray

    @classmethod
    def from_array(cls, arr) -> "BinaryMask":
        arr = np.asarray(arr).astype(bool)
        if arr.ndim != 2:
            raise ValueError("mask array must be 2-D")
        return cls(width=arr.shape[1], height=arr.shape[0], bits=arr)


@dataclass
class FitResult:
    tetragon: Tetragon
    iou: float
    iterations: int


def _row_crossings(ring: np.ndarray, yc: np.ndarray) -> np.ndarray:
    """Sorted x-crossings of the polygon with each scanline y in yc.

    Half-open rule per edge (p.y <= y < q.y or q.y <= y < p.y), so vertices
    are counted once. Non-crossings pad with +inf; shape (len(yc), 4).
    """
    px = ring[:, 0]
    py = ring[:, 1]
    qx = np.roll(px, -1)
    qy = np.roll(py, -1)
    y = yc[:, None]
    hit = ((py <= y) & (y < qy)) | ((qy <= y) & (y < py))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (y - py) / (qy - py)
        x = px + t * (qx - px)
    x = np.where(hit, x, np.inf)
    x.sort(axis=1)
    return x


def _interval_cols(x0: np.ndarray, x1: np.ndarray, width: int):
    """Column ranges [lo, hi) with centers inside [x0, x1), clipped to the image."""
    lo = np.ceil(x0 - 0.5)
    hi = np.ceil(x1 - 0.5)
    lo = np.clip(lo, 0, width)
    hi = np.clip(hi, 0, width)
    lo = np.where(np.isfinite(x0), lo, width).astype(np.int64)
    hi = np.where(np.isfinite(x1), hi, width).astype(np.int64)
    return lo, np.maximum(lo, hi)


def rasterize(t: Tetragon, width: int, height: int) -> np.ndarray:
    """Scanline-fill a tetragon into a (height, width) bool array."""
    ring = t.ring()
    out = np.zeros((height, width), dtype=bool)
    ymin, ymax = ring[:, 1].min(), ring[:, 1].max()
    r0 = max(0, int(np.floor(ymin - 0.5)))
    r1 = min(height - 1, int(np.ceil(ymax)))
    if r1 < r0:
        return out
    rows = np.arange(r0, r1 + 1)
    x = _row_crossings(ring, rows + 0.5)
    for pair in (0, 2):
        lo, hi = _interval_cols(x[:, pair], x[:, pair + 1], width)
        for i, r in enumerate(rows):
            out[r, lo[i]:hi[i]] = True
    return out


class _MaskOverlap:
    """Fast rasterized-IoU evaluation of candidate rings against a fixed mask."""

    def __init__(self, bits: np.ndarray):
        self.h, self.w = bits.shape
        self.prefix = np.zeros((self.h, self.w + 1), dtype=np.int64)
        np.cumsum(bits, axis=1, out=self.prefix[:, 1:])
        self.mask_count = int(bits.sum())

    def iou(self, ring: np.ndarray) -> float:
        ymin, ymax = ring[:, 1].min(), ring[:, 1].max()
        r0 = max(0, int(np.floor(ymin - 0.5)))
        r1 = min(self.h - 1, int(np.ceil(ymax)))
        if r1 < r0:
            return 0.0
        rows = np.arange(r0, r1 + 1)
        x = _row_crossings(ring, rows + 0.5)
        t_count = 0
        inter = 0
        for pair in (0, 2):
            lo, hi = _interval_cols(x[:, pair], x[:, pair + 1], self.w)
            t_count += int((hi - lo).sum())
            inter += int((self.prefix[rows, hi] - self.prefix[rows, lo]).sum())
        union = t_count + self.mask_count - inter
        return inter / union if union > 0 else 0.0


def _initial_vertices(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Extreme-direction pixels as starting corners (at pixel centers).

    Falls back to the mask bounding box when the extremes do not form a valid
    tetragon (e.g. diamond-shaped blobs).
    """
    scores = (-xs - ys, xs - ys, -xs + ys, xs + ys)   # tl, tr, bl, br
    verts = np.empty((4, 2), dtype=np.float64)
    for i, s in enumerate(scores):
        j = int(np.argmax(s))
        verts[i] = (xs[j] + 0.5, ys[j] + 0.5)
    if is_valid(*(Point2(*v) for v in verts)):
        return verts
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    return np.array([[x0, y0], [x1 + 1, y0], [x0, y1 + 1], [x1 + 1, y1 + 1]])


def _corner_order_ok(v: np.ndarray) -> bool:
    # v rows are tl, tr, bl, br
    return (v[0, 0] < v[1, 0] and v[2, 0] < v[3, 0]
            and v[0, 1] < v[2, 1] and v[1, 1] < v[3, 1])


def _ring_of(v: np.ndarray) -> np.ndarray:
    return v[[0, 1, 3, 2]]


def fit_tetragon(mask: BinaryMask, max_rounds: int = 6) -> FitResult:
    """Fit a valid tetragon to a binary mask by maximizing rasterized IoU.

    Starts from the four extreme-direction pixels, then runs coordinate
    descent: per round (perturbation radius 8, 4, 2, 1, then 1...) each vertex
    in order tl, tr, br, bl scans integer offsets in [-r, r]^2 row-major and
    takes the first strict IoU improvement that keeps the tetragon valid.
    Stops after a full round without improvement or after max_rounds.
    """
    ys, xs = np.nonzero(mask.bits)
    if xs.size == 0:
        raise EmptyMask("mask has no set pixels")
    v0x, v0y = xs[0], ys[0]
    cross = (xs - v0x) * (ys[-1] - v0y) - (ys - v0y) * (xs[-1] - v0x)
    if np.all(cross == 0):
        # all pixels on the line through the first and last set pixel
        dx, dy = xs[-1] - v0x, ys[-1] - v0y
        if dx == 0 and dy == 0:
            raise DegenerateMask("mask has a single set pixel")
        raise DegenerateMask("all set pixels are collinear")

    verts = _initial_vertices(xs.astype(np.float64), ys.astype(np.float64))
    overlap = _MaskOverlap(mask.bits)
    best = overlap.iou(_ring_of(verts))
    rounds = 0
    for rnd in range(max_rounds):
        radius = PERTURBATION_SCHEDULE[min(rnd, len(PERTURBATION_SCHEDULE) - 1)]
        improved = False
        for vi in (0, 1, 3, 2):   # tl, tr, br, bl
            found = False
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    if dx == 0 and dy == 0:
                        continue
                    cand = verts.copy()
                    cand[vi, 0] += dx
                    cand[vi, 1] += dy
                    if not _corner_order_ok(cand):
                        continue
                    iou = overlap.iou(_ring_of(cand))
                    if iou > best and is_valid(*(Point2(*p) for p in cand)):
                        verts = cand
                        best = iou
                        found = improved = True
                        break
                if found:
                    break
        rounds += 1
        if not improved:
            break
    tet = Tetragon(*(Point2(*p) for p in verts))
    return FitResult(tetragon=tet, iou=best, iterations=rounds)
