"""Tetragon geometry: validity, area, polygon IoU, homographies, rectification.

Coordinate convention (fixed package-wide): image pixels, origin at the
top-left corner, y grows downward, sub-pixel positions allowed. A tetragon
is the simple polygon tl -> tr -> br -> bl.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from shapely.geometry import Polygon

from .errors import DegenerateGeometry

__all__ = [
    "Point2",
    "Tetragon",
    "Homography",
    "is_valid",
    "is_valid_arrays",
    "area",
    "tetragon_iou",
    "homography_from_tetragon",
    "rectify",
]


@dataclass(frozen=True)
class Point2:
    """A 2-D point in image coordinates (finite values expected)."""

    x: float
    y: float


@dataclass(frozen=True)
class Tetragon:
    """Four named vertices tl, tr, bl, br in image coordinates."""

    tl: Point2
    tr: Point2
    bl: Point2
    br: Point2

    def corners(self) -> tuple[Point2, Point2, Point2, Point2]:
        """Vertices in corner-type order (tl, tr, bl, br)."""
        return (self.tl, self.tr, self.bl, self.br)

    def corner_array(self) -> np.ndarray:
        """(4, 2) float array of (x, y) rows in corner-type order tl, tr, bl, br."""
        return np.array(
            [[p.x, p.y] for p in self.corners()], dtype=np.float64
        )

    def ring(self) -> np.ndarray:
        """(4, 2) float array of the polygon ring tl, tr, br, bl."""
        return np.array(
            [
                [self.tl.x, self.tl.y],
                [self.tr.x, self.tr.y],
                [self.br.x, self.br.y],
                [self.bl.x, self.bl.y],
            ],
            dtype=np.float64,
        )

    @staticmethod
    def from_corner_array(pts) -> "Tetragon":
        """Build from a (4, 2) array in corner-type order tl, tr, bl, br."""
        pts = np.asarray(pts, dtype=np.float64)
        return Tetragon(
            Point2(float(pts[0, 0]), float(pts[0, 1])),
            Point2(float(pts[1, 0]), float(pts[1, 1])),
            Point2(float(pts[2, 0]), float(pts[2, 1])),
            Point2(float(pts[3, 0]), float(pts[3, 1])),
        )

    def centroid(self) -> Point2:
        c = self.corner_array().mean(axis=0)
        return Point2(float(c[0]), float(c[1]))

    def bbox(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounds (x0, y0, x1, y1)."""
        pts = self.corner_array()
        return (
            float(pts[:, 0].min()),
            float(pts[:, 1].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].max()),
        )

    def is_valid(self) -> bool:
        return is_valid(self.tl, self.tr, self.bl, self.br)


def _signed_ring_area(ring: np.ndarray) -> np.ndarray:
    """Signed shoelace area of (..., 4, 2) rings; positive for tl,tr,br,bl order."""
    x = ring[..., 0]
    y = ring[..., 1]
    xn = np.roll(x, -1, axis=-1)
    yn = np.roll(y, -1, axis=-1)
    return 0.5 * np.sum(x * yn - xn * y, axis=-1)


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _segments_cross(p1, p2, p3, p4) -> np.ndarray:
    """True where segment p1-p2 intersects or touches segment p3-p4.

    Inputs are (..., 2) arrays. Collinear touching counts as intersection,
    which is what simplicity checking needs for non-adjacent edges.
    """
    d1 = _cross(p4[..., 0] - p3[..., 0], p4[..., 1] - p3[..., 1],
                p1[..., 0] - p3[..., 0], p1[..., 1] - p3[..., 1])
    d2 = _cross(p4[..., 0] - p3[..., 0], p4[..., 1] - p3[..., 1],
                p2[..., 0] - p3[..., 0], p2[..., 1] - p3[..., 1])
    d3 = _cross(p2[..., 0] - p1[..., 0], p2[..., 1] - p1[..., 1],
                p3[..., 0] - p1[..., 0], p3[..., 1] - p1[..., 1])
    d4 = _cross(p2[..., 0] - p1[..., 0], p2[..., 1] - p1[..., 1],
                p4[..., 0] - p1[..., 0], p4[..., 1] - p1[..., 1])
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_segment(a, b, c):
        # c assumed collinear with a-b
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        return np.all((c >= lo) & (c <= hi), axis=-1)

    touch = ((d1 == 0) & on_segment(p3, p4, p1)) | \
            ((d2 == 0) & on_segment(p3, p4, p2)) | \
            ((d3 == 0) & on_segment(p1, p2, p3)) | \
            ((d4 == 0) & on_segment(p1, p2, p4))
    return proper | touch


def is_valid_arrays(tl, tr, bl, br) -> np.ndarray:
    """Vectorized tetragon validity over (..., 2) corner arrays.

    A corner quadruple is valid iff all coordinates are finite, right corners
    are strictly right of left ones, bottom corners strictly below top ones,
    the ring tl->tr->br->bl is simple, and its area is positive.
    """
    tl = np.asarray(tl, dtype=np.float64)
    tr = np.asarray(tr, dtype=np.float64)
    bl = np.asarray(bl, dtype=np.float64)
    br = np.asarray(br, dtype=np.float64)

    finite = (
        np.isfinite(tl).all(axis=-1)
        & np.isfinite(tr).all(axis=-1)
        & np.isfinite(bl).all(axis=-1)
        & np.isfinite(br).all(axis=-1)
    )
    ordered = (
        (tl[..., 0] < tr[..., 0])
        & (bl[..., 0] < br[..., 0])
        & (tl[..., 1] < bl[..., 1])
        & (tr[..., 1] < br[..., 1])
    )
    ring = np.stack([tl, tr, br, bl], axis=-2)
    positive = _signed_ring_area(ring) > 0.0
    # Simplicity: the two pairs of opposite edges must not cross or touch.
    simple = ~_segments_cross(tl, tr, br, bl) & ~_segments_cross(tr, br, bl, tl)
    with np.errstate(invalid="ignore"):
        return finite & ordered & positive & simple


def is_valid(tl: Point2, tr: Point2, bl: Point2, br: Point2) -> bool:
    """Total validity check for four corner points (never raises)."""
    arr = [np.array([p.x, p.y], dtype=np.float64) for p in (tl, tr, bl, br)]
    with np.errstate(invalid="ignore"):
        return bool(is_valid_arrays(*arr))


def area(t: Tetragon) -> float:
    """Polygon area of the ring tl->tr->br->bl (shoelace)."""
    return float(abs(_signed_ring_area(t.ring())))


def tetragon_iou(a: Tetragon, b: Tetragon) -> float:
    """Intersection-over-union of two valid tetragons via exact polygon clipping."""
    pa = Polygon(a.ring())
    pb = Polygon(b.ring())
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    if union <= 0.0:
        return 0.0
    return float(inter / union)


@dataclass(frozen=True)
class Homography:
    """A 3x3 projective map over image coordinates (row-major matrix)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "m", m)
        if abs(np.linalg.det(m)) <= 1e-9:
            raise DegenerateGeometry("homography matrix is singular")

    def apply(self, pts) -> np.ndarray:
        """Map (..., 2) points through the homography."""
        pts = np.asarray(pts, dtype=np.float64)
        ones = np.ones(pts.shape[:-1] + (1,), dtype=np.float64)
        h = np.concatenate([pts, ones], axis=-1) @ self.m.T
        return h[..., :2] / h[..., 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))


def homography_from_tetragon(t: Tetragon, out_w: int, out_h: int) -> Homography:
    """Homography sending tl->(0,0), tr->(out_w,0), bl->(0,out_h), br->(out_w,out_h).

    Solved as the standard 8-DOF linear system. Raises DegenerateGeometry when
    the system is singular (collinear vertices).
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be at least 1x1")
    src = t.corner_array()
    dst = np.array(
        [[0.0, 0.0], [float(out_w), 0.0], [0.0, float(out_h)], [float(out_w), float(out_h)]]
    )
    a = np.zeros((8, 8), dtype=np.float64)
    b = np.zeros(8, dtype=np.float64)
    for i in range(4):
        sx, sy = src[i]
        dx, dy = dst[i]
        a[2 * i] = [sx, sy, 1.0, 0.0, 0.0, 0.0, -dx * sx, -dx * sy]
        b[2 * i] = dx
        a[2 * i + 1] = [0.0, 0.0, 0.0, sx, sy, 1.0, -dy * sx, -dy * sy]
        b[2 * i + 1] = dy
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometry(f"corner layout is projectively degenerate: {exc}") from exc
    m = np.array(
        [
            [sol[0], sol[1], sol[2]],
            [sol[3], sol[4], sol[5]],
            [sol[6], sol[7], 1.0],
        ]
    )
    return Homography(m)


def _bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample a (C, H, W) image at continuous positions; out-of-bounds reads 0.

    Pixel (r, c) has its center at (c + 0.5, r + 0.5).
    """
    c, h, w = image.shape
    u = x - 0.5
    v = y - 0.5
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    wx = u - x0
    wy = v - y0
    acc = np.zeros((c,) + x.shape, dtype=np.float64)
    img = image.astype(np.float64)
    for dy, dx, wgt in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        xi = x0 + dx
        yi = y0 + dy
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = img[:, yi.clip(0, h - 1), xi.clip(0, w - 1)]
        acc += wgt * np.where(inside, vals, 0.0)
    return acc


def rectify(image: np.ndarray, t: Tetragon, out_w: int, out_h: int) -> np.ndarray:
    """Inverse-warp the tetragon region of a (C, H, W) uint8 image to (C, out_h, out_w).

    Bilinear sampling; samples falling outside the source image produce 0.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError("image must be (C, H, W)")
    hom = homography_from_tetragon(t, out_w, out_h)
    inv = hom.inverse()
    xs = np.arange(out_w, dtype=np.float64) + 0.5
    ys = np.arange(out_h, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    src = inv.apply(np.stack([gx, gy], axis=-1))
    out = _bilinear_sample(image, src[..., 0], src[..., 1])
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
