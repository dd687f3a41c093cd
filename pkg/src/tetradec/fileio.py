"""File formats: tensor containers, annotation/detection JSON, PPM/PGM, RLE masks.

Tensor files are one UTF-8 JSON header line {"dtype":"f32","shape":[...],
"order":"row-major"} followed by '\\n' and the raw little-endian float32
payload. All formats round-trip exactly. Malformed inputs raise FormatError
carrying the file path and byte offset.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decoder import Detection
from .errors import FormatError
from .geometry import Point2, Tetragon
from .gt_encoder import Annotation
from .mask_fit import BinaryMask

__all__ = [
    "ImageAnnotations",
    "read_tensor",
    "write_tensor",
    "read_annotations",
    "write_annotations",
    "read_detections",
    "write_detections",
    "read_ppm",
    "write_ppm",
    "read_pgm",
    "write_pgm",
    "read_mask",
    "write_mask_rle",
]

CORNER_KEYS = ("tl", "tr", "bl", "br")


@dataclass
class ImageAnnotations:
    """Annotations of one image from an annotation file."""

    id: str
    width: int
    height: int
    objects: list[Annotation] = field(default_factory=list)


# ---------------------------------------------------------------------------
# tensor container
# ---------------------------------------------------------------------------

def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    header = json.dumps(
        {"dtype": "f32", "shape": list(arr.shape), "order": "row-major"})
    with open(path, "wb") as f:
        f.write(header.encode("utf-8"))
        f.write(b"\n")
        f.write(arr.astype("<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError(path, 0, "missing header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(path, 0, f"bad tensor header: {exc}") from exc
    if not isinstance(header, dict) or header.get("dtype") != "f32" \
            or header.get("order") != "row-major":
        raise FormatError(path, 0, f"unsupported tensor header {header!r}")
    shape = header.get("shape")
    if (not isinstance(shape, list)
            or not all(isinstance(d, int) and d >= 0 for d in shape)):
        raise FormatError(path, 0, f"bad shape {shape!r}")
    payload = data[nl + 1:]
    expected = 4 * math.prod(shape)
    if len(payload) != expected:
        raise FormatError(
            path, nl + 1,
            f"payload is {len(payload)} bytes, shape {shape} needs {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


# ---------------------------------------------------------------------------
# annotation JSON
# ---------------------------------------------------------------------------

def _corners_to_tetragon(obj: dict, where: str, path) -> Tetragon:
    corners = obj.get("corners")
    if not isinstance(corners, dict):
        raise FormatError(path, 0, f"{where}: missing corners object")
    pts = {}
    for key in CORNER_KEYS:
        xy = corners.get(key)
        if (not isinstance(xy, list) or len(xy) != 2
                or not all(isinstance(v, (int, float)) for v in xy)):
            raise FormatError(path, 0, f"{where}: corner {key!r} must be [x, y]")
        pts[key] = Point2(float(xy[0]), float(xy[1]))
    return Tetragon(pts["tl"], pts["tr"], pts["bl"], pts["br"])


def _tetragon_to_corners(t: Tetragon) -> dict:
    return {key: [p.x, p.y] for key, p in zip(CORNER_KEYS, t.corners())}


def _load_json(path):
    raw = Path(path).read_bytes()
    try:
        return json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise FormatError(path, exc.start, f"not valid UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.pos, f"invalid JSON: {exc.msg}") from exc


def read_annotations(path) -> list[ImageAnnotations]:
    doc = _load_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise FormatError(path, 0, 'top level must be {"images": [...]}')
    images = []
    for ii, img in enumerate(doc["images"]):
        where = f"images[{ii}]"
        if not isinstance(img, dict):
            raise FormatError(path, 0, f"{where}: must be an object")
        try:
            iid = str(img["id"])
            width = int(img["width"])
            height = int(img["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, 0, f"{where}: bad id/width/height: {exc}") from exc
        objects = []
        for oi, obj in enumerate(img.get("objects", [])):
            ow = f"{where}.objects[{oi}]"
            if not isinstance(obj, dict) or "class" not in obj:
                raise FormatError(path, 0, f"{ow}: missing class")
            t = _corners_to_tetragon(obj, ow, path)
            if not t.is_valid():
                raise FormatError(path, 0, f"{ow}: corners are not a valid tetragon")
            for p in t.corners():
                if not (0.0 <= p.x < width and 0.0 <= p.y < height):
                    raise FormatError(
                        path, 0,
                        f"{ow}: corner ({p.x}, {p.y}) outside {width}x{height}")
            objects.append(Annotation(int(obj["class"]), t))
        images.append(ImageAnnotations(iid, width, height, objects))
    return images


def write_annotations(path, images: list[ImageAnnotations]) -> None:
    doc = {"images": [
        {
            "id": img.id,
            "width": img.width,
            "height": img.height,
            "objects": [
                {"class": a.class_id, "corners": _tetragon_to_corners(a.tetragon)}
                for a in img.objects
            ],
        }
        for img in images
    ]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# detection JSON
# ---------------------------------------------------------------------------

def write_detections(path, per_image: list[tuple[str, list[Detection]]]) -> None:
    doc = {"images": []}
    for iid, dets in per_image:
        dets = sorted(dets, key=lambda d: -d.score)
        doc["images"].append({
            "id": iid,
            "detections": [
                {
                    "class": d.class_id,
                    "score": d.score,
                    "corners": _tetragon_to_corners(d.tetragon),
                    "mean_embedding": d.mean_embedding,
                }
                for d in dets
            ],
        })
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def read_detections(path) -> list[tuple[str, list[Detection]]]:
    doc = _load_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise FormatError(path, 0, 'top level must be {"images": [...]}')
    out = []
    for ii, img in enumerate(doc["images"]):
        where = f"images[{ii}]"
        if not isinstance(img, dict) or "id" not in img:
            raise FormatError(path, 0, f"{where}: missing id")
        dets = []
        prev = None
        for di, d in enumerate(img.get("detections", [])):
            dw = f"{where}.detections[{di}]"
            if not isinstance(d, dict) or "class" not in d or "score" not in d:
                raise FormatError(path, 0, f"{dw}: missing class/score")
            score = float(d["score"])
            if prev is not None and score > prev:
                raise FormatError(path, 0, f"{dw}: scores not sorted descending")
            prev = score
            dets.append(Detection(
                class_id=int(d["class"]),
                tetragon=_corners_to_tetragon(d, dw, path),
                score=score,
                mean_embedding=float(d.get("mean_embedding", 0.0)),
                corners=None,
            ))
        out.append((str(img["id"]), dets))
    return out


# ---------------------------------------------------------------------------
# PPM (P6) / PGM (P5)
# ---------------------------------------------------------------------------

def _parse_netpbm_header(data: bytes, path, magic: bytes):
    if data[:2] != magic:
        raise FormatError(path, 0, f"expected {magic.decode()} file")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(path, start, "truncated header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError as exc:
            raise FormatError(path, start, f"bad header token: {exc}") from exc
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(path, 0, f"only maxval 255 supported, got {maxval}")
    return width, height, pos


def read_ppm(path) -> np.ndarray:
    """Binary PPM to a (3, H, W) uint8 array."""
    data = Path(path).read_bytes()
    w, h, pos = _parse_netpbm_header(data, path, b"P6")
    need = 3 * w * h
    if len(data) - pos != need:
        raise FormatError(path, pos, f"pixel payload is {len(data) - pos} bytes, need {need}")
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return arr.reshape(h, w, 3).transpose(2, 0, 1).copy()


def write_ppm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError("PPM image must be (3, H, W) uint8")
    _, h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.transpose(1, 2, 0).tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary PGM to a (H, W) uint8 array."""
    data = Path(path).read_bytes()
    w, h, pos = _parse_netpbm_header(data, path, b"P5")
    need = w * h
    if len(data) - pos != need:
        raise FormatError(path, pos, f"pixel payload is {len(data) - pos} bytes, need {need}")
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(h, w).copy()


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("PGM image must be (H, W) uint8")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


# ---------------------------------------------------------------------------
# binary masks (PGM or run-length JSON)
# ---------------------------------------------------------------------------

def _mask_from_rle(doc: dict, path) -> BinaryMask:
    try:
        width = int(doc["width"])
        height = int(doc["height"])
        counts = doc["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, 0, f"RLE mask needs width/height/counts: {exc}") from exc
    if not isinstance(counts, list) or not all(
            isinstance(c, int) and c >= 0 for c in counts):
        raise FormatError(path, 0, "counts must be non-negative integers")
    total = sum(counts)
    if total != width * height:
        raise FormatError(path, 0,
                          f"counts sum to {total}, mask has {width * height} pixels")
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    value = False  # runs alternate starting with zeros
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += c
        value = not value
    return BinaryMask(width=width, height=height, bits=flat.reshape(height, width))


def read_mask(path) -> BinaryMask:
    """Load a binary mask from a P5 PGM (nonzero = set) or an RLE JSON file."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return _mask_from_rle(_load_json(path), path)
    return BinaryMask.from_array(read_pgm(path) > 0)


def write_mask_rle(path, mask: BinaryMask) -> None:
    flat = mask.bits.reshape(-1)
    counts = []
    run_value = False
    run_len = 0
    for v in flat:
        if bool(v) == run_value:
            run_len += 1
        else:
            counts.append(run_len)
            run_value = bool(v)
            run_len = 1
    counts.append(run_len)
    doc = {"width": mask.width, "height": mask.height, "counts": counts}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")
