"""Decode network outputs into scored tetragon detections.

Pipeline: per-(corner type, class) peak extraction with offset refinement,
then exhaustive grouping of corner quadruples pruned by geometric validity
and embedding agreement, scored by mean corner heat minus (or plus, per
config) the mean squared embedding deviation, followed by greedy
corner-exclusive selection with tetragon-IoU suppression.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ShapeMismatch
from .geometry import Point2, Tetragon, is_valid_arrays, tetragon_iou
from .tensor_ops import CornerType, nms_3x3, topk

__all__ = [
    "NetworkOutput",
    "CornerCandidate",
    "Detection",
    "ScoreSign",
    "GroupingMode",
    "DecodeConfig",
    "extract_corners",
    "group_and_score",
    "decode",
]


@dataclass
class NetworkOutput:
    """Predicted maps for one image.

    heat: (4, C, Hf, Wf) in [0, 1]; embed: (4, Hf, Wf); offset: (4, 2, Hf, Wf)
    with channels (dx, dy). All at feature resolution; `stride` recovers image
    pixels.
    """

    heat: np.ndarray
    embed: np.ndarray
    offset: np.ndarray
    stride: int = 4

    def validate(self) -> None:
        if self.heat.ndim != 4 or self.heat.shape[0] != 4:
            raise ShapeMismatch(f"heat must be (4, C, Hf, Wf), got {self.heat.shape}")
        hf, wf = self.heat.shape[2:]
        if self.embed.shape != (4, hf, wf):
            raise ShapeMismatch(
                f"embed must be (4, {hf}, {wf}), got {self.embed.shape}")
        if self.offset.shape != (4, 2, hf, wf):
            raise ShapeMismatch(
                f"offset must be (4, 2, {hf}, {wf}), got {self.offset.shape}")


@dataclass(frozen=True)
class CornerCandidate:
    """One surviving heatmap peak, refined to image coordinates."""

    corner_type: CornerType
    class_id: int
    cell: tuple[int, int]
    heat: float
    embedding: float
    refined: Point2


@dataclass
class Detection:
    """A grouped and scored tetragon detection.

    `corners` holds the four source candidates (tl, tr, bl, br) when the
    detection came from the decoder; detections loaded from files carry None.
    """

    class_id: int
    tetragon: Tetragon
    score: float
    mean_embedding: float
    corners: tuple[CornerCandidate, ...] | None = None


class ScoreSign(Enum):
    SUBTRACT_PULL = "subtract_pull"
    ADD_PULL = "add_pull"


class GroupingMode(Enum):
    EXHAUSTIVE = "exhaustive"
    GREEDY_ANCHOR = "greedy_anchor"


@dataclass
class DecodeConfig:
    k: int = 20
    heat_floor: float = 0.1
    embed_tol: float = 0.5
    det_nms_iou: float = 0.5
    score_sign: ScoreSign = ScoreSign.SUBTRACT_PULL
    grouping: GroupingMode = GroupingMode.EXHAUSTIVE
    nms_window: int = 3


CandidateLists = dict[tuple[CornerType, int], list[CornerCandidate]]


def extract_corners(out: NetworkOutput, cfg: DecodeConfig = DecodeConfig()) -> CandidateLists:
    """Per (corner type, class) candidate lists: NMS, top-k, floor, refine.

    Candidates come back heat-descending; anything below cfg.heat_floor is
    dropped. Refined position is (cell + offset) * stride in image pixels.
    """
    out.validate()
    num_classes = out.heat.shape[1]
    cands: CandidateLists = {}
    for i in range(4):
        ct = CornerType(i)
        for c in range(num_classes):
            peaks = nms_3x3(out.heat[i, c], window=cfg.nms_window)
            kept: list[CornerCandidate] = []
            for row, col, val in topk(peaks, cfg.k):
                if val < cfg.heat_floor:
                    break  # topk is sorted descending
                dx = float(out.offset[i, 0, row, col])
                dy = float(out.offset[i, 1, row, col])
                kept.append(CornerCandidate(
                    corner_type=ct,
                    class_id=c,
                    cell=(row, col),
                    heat=val,
                    embedding=float(out.embed[i, row, col]),
                    refined=Point2((col + dx) * out.stride, (row + dy) * out.stride),
                ))
            cands[(ct, c)] = kept
    return cands


def _quadruple_table(lists: list[list[CornerCandidate]], embed_tol: float,
                     subtract_pull: bool):
    """Vectorized enumeration of all (tl, tr, bl, br) index quadruples.

    Returns (index array [M, 4], scores [M], mean embeddings [M]) for the
    quadruples that pass validity and the embedding-spread gate.
    """
    sizes = [len(l) for l in lists]
    if min(sizes) == 0:
        return np.empty((0, 4), dtype=np.int64), np.empty(0), np.empty(0)
    xy = [np.array([[c.refined.x, c.refined.y] for c in l]) for l in lists]
    emb = [np.array([c.embedding for c in l]) for l in lists]
    heat = [np.array([c.heat for c in l]) for l in lists]

    def bc(a, axis):
        shape = [1, 1, 1, 1]
        shape[axis] = -1
        return a.reshape(shape)

    e = [bc(emb[i], i) for i in range(4)]
    emax = np.maximum(np.maximum(e[0], e[1]), np.maximum(e[2], e[3]))
    emin = np.minimum(np.minimum(e[0], e[1]), np.minimum(e[2], e[3]))
    mask = (emax - emin) <= embed_tol

    # cheap ordering gate before the full validity test
    x = [bc(xy[i][:, 0], i) for i in range(4)]
    y = [bc(xy[i][:, 1], i) for i in range(4)]
    mask = mask & (x[0] < x[1]) & (x[2] < x[3]) & (y[0] < y[2]) & (y[1] < y[3])

    idx = np.argwhere(mask)
    if idx.shape[0] == 0:
        return np.empty((0, 4), dtype=np.int64), np.empty(0), np.empty(0)
    pts = [xy[i][idx[:, i]] for i in range(4)]
    valid = is_valid_arrays(*pts)
    idx = idx[valid]
    if idx.shape[0] == 0:
        return np.empty((0, 4), dtype=np.int64), np.empty(0), np.empty(0)

    ev = np.stack([emb[i][idx[:, i]] for i in range(4)], axis=1)
    hv = np.stack([heat[i][idx[:, i]] for i in range(4)], axis=1)
    mean_emb = ev.mean(axis=1)
    pull = ((ev - mean_emb[:, None]) ** 2).mean(axis=1)
    score = hv.mean(axis=1) - pull if subtract_pull else hv.mean(axis=1) + pull
    return idx, score, mean_emb


def _greedy_anchor_table(lists: list[list[CornerCandidate]], embed_tol: float,
                         subtract_pull: bool):
    """Cheaper grouping: anchor on each tl candidate, greedily take the
    nearest-embedding partner per corner type, keep the quadruple if valid."""
    rows = []
    scores = []
    mean_embs = []
    for a, tl in enumerate(lists[0]):
        pick = [a]
        ok = True
        for i in (1, 2, 3):
            best = None
            best_key = None
            for j, cand in enumerate(lists[i]):
                gap = abs(cand.embedding - tl.embedding)
                if gap > embed_tol:
                    continue
                key = (gap, -cand.heat, cand.cell)
                if best_key is None or key < best_key:
                    best, best_key = j, key
            if best is None:
                ok = False
                break
            pick.append(best)
        if not ok:
            continue
        quad = [lists[i][pick[i]] for i in range(4)]
        pts = [np.array([c.refined.x, c.refined.y]) for c in quad]
        if not bool(is_valid_arrays(*pts)):
            continue
        e = np.array([c.embedding for c in quad])
        h = np.array([c.heat for c in quad])
        pull = float(((e - e.mean()) ** 2).mean())
        score = float(h.mean()) + (-pull if subtract_pull else pull)
        rows.append(pick)
        scores.append(score)
        mean_embs.append(float(e.mean()))
    if not rows:
        return np.empty((0, 4), dtype=np.int64), np.empty(0), np.empty(0)
    return np.array(rows, dtype=np.int64), np.array(scores), np.array(mean_embs)


def group_and_score(cands: CandidateLists,
                    cfg: DecodeConfig = DecodeConfig()) -> list[Detection]:
    """Assemble candidates into detections, score-sorted descending.

    All per-class quadruples that are geometrically valid and whose embedding
    spread stays within cfg.embed_tol are scored; selection is greedy by score
    with each corner candidate used at most once and tetragon-IoU suppression
    at cfg.det_nms_iou against already-accepted detections. Ties break on the
    row-major cell indices of tl, tr, bl, br, then on class id.
    """
    classes = sorted({c for (_, c) in cands.keys()})
    subtract = cfg.score_sign is ScoreSign.SUBTRACT_PULL
    pool: list[tuple] = []   # (score, cell keys..., class, quadruple)
    for c in classes:
        lists = [cands.get((CornerType(i), c), []) for i in range(4)]
        if cfg.grouping is GroupingMode.GREEDY_ANCHOR:
            idx, scores, mean_embs = _greedy_anchor_table(lists, cfg.embed_tol, subtract)
        else:
            idx, scores, mean_embs = _quadruple_table(lists, cfg.embed_tol, subtract)
        wf = 1 << 20   # cell key = row * wf + col; wf exceeds any map width
        for r in range(idx.shape[0]):
            quad = tuple(lists[i][idx[r, i]] for i in range(4))
            keys = tuple(q.cell[0] * wf + q.cell[1] for q in quad)
            pool.append((float(scores[r]), keys, c, quad, float(mean_embs[r])))

    pool.sort(key=lambda e: (-e[0], e[1], e[2]))

    used: set[tuple[int, CornerType, tuple[int, int]]] = set()
    accepted: list[Detection] = []
    for score, _, c, quad, mean_emb in pool:
        idents = [(c, q.corner_type, q.cell) for q in quad]
        if any(ident in used for ident in idents):
            continue
        tet = Tetragon(quad[0].refined, quad[1].refined,
                       quad[2].refined, quad[3].refined)
        if any(tetragon_iou(tet, d.tetragon) > cfg.det_nms_iou for d in accepted):
            continue
        used.update(idents)
        accepted.append(Detection(
            class_id=c, tetragon=tet, score=score,
            mean_embedding=mean_emb, corners=quad,
        ))
    return accepted


def decode(out: NetworkOutput, cfg: DecodeConfig = DecodeConfig()) -> list[Detection]:
    """Full decode: extract corner candidates, group, score, suppress."""
    return group_and_score(extract_corners(out, cfg), cfg)
