"""Loss functions for four-corner detection, with analytic gradients.

The total loss is  L = L_det + w_off * L_off + w_pull * L_pull + w_push * L_push
with penalty-reduced focal detection loss, smooth-L1 offsets at peak cells,
and the pull/push pair over per-object corner embeddings. Every component has
a matching analytic-gradient function so the whole family can be verified
against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ShapeMismatch
from .gt_encoder import ObjectCorners, TargetMaps, encode_targets
from .geometry import Point2, Tetragon
from .gt_encoder import Annotation

if TYPE_CHECKING:  # pragma: no cover
    from .decoder import NetworkOutput

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "PRED_EPS",
    "detection_loss",
    "detection_loss_grad",
    "offset_loss",
    "offset_loss_grad",
    "pull_loss",
    "pull_loss_grad",
    "push_loss",
    "push_loss_grad",
    "total_loss",
    "gradient_check",
]

PRED_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Component weights and focal exponents."""

    w_off: float = 1.0
    w_pull: float = 0.1
    w_push: float = 0.1
    alpha: float = 2.0
    beta: float = 4.0


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    det: float
    off: float
    pull: float
    push: float


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what}: {a.shape} vs {b.shape}")


def detection_loss(pred_heat: np.ndarray, gt: TargetMaps,
                   alpha: float = 2.0, beta: float = 4.0) -> float:
    """Penalty-reduced focal loss over all heat cells, normalized by object count.

    Cells where the target is exactly 1 are positives; everywhere else the
    penalty is reduced by (1 - y)^beta. Predictions are clamped to
    [PRED_EPS, 1 - PRED_EPS] before the logs.
    """
    pred_heat = np.asarray(pred_heat, dtype=np.float64)
    y = np.asarray(gt.heat, dtype=np.float64)
    _check_same_shape(pred_heat, y, "pred heat vs gt heat")
    p = np.clip(pred_heat, PRED_EPS, 1.0 - PRED_EPS)
    pos = y == 1.0
    n = max(1, len(gt.objects))
    pos_sum = ((1.0 - p) ** alpha * np.log(p))[pos].sum()
    neg_sum = ((1.0 - y) ** beta * p ** alpha * np.log1p(-p))[~pos].sum()
    return float(-(pos_sum + neg_sum) / n)


def detection_loss_grad(pred_heat: np.ndarray, gt: TargetMaps,
                        alpha: float = 2.0, beta: float = 4.0) -> np.ndarray:
    """d detection_loss / d pred_heat (zero where the clamp is active)."""
    pred_heat = np.asarray(pred_heat, dtype=np.float64)
    y = np.asarray(gt.heat, dtype=np.float64)
    _check_same_shape(pred_heat, y, "pred heat vs gt heat")
    p = np.clip(pred_heat, PRED_EPS, 1.0 - PRED_EPS)
    pos = y == 1.0
    n = max(1, len(gt.objects))
    grad = np.empty_like(p)
    gp = -alpha * (1.0 - p) ** (alpha - 1.0) * np.log(p) + (1.0 - p) ** alpha / p
    gn = (1.0 - y) ** beta * (
        alpha * p ** (alpha - 1.0) * np.log1p(-p) - p ** alpha / (1.0 - p)
    )
    grad[pos] = gp[pos]
    grad[~pos] = gn[~pos]
    grad *= -1.0 / n
    grad[(pred_heat < PRED_EPS) | (pred_heat > 1.0 - PRED_EPS)] = 0.0
    return grad


def _smooth_l1(d: np.ndarray) -> np.ndarray:
    ad = np.abs(d)
    return np.where(ad < 1.0, 0.5 * d * d, ad - 0.5)


def _smooth_l1_grad(d: np.ndarray) -> np.ndarray:
    return np.where(np.abs(d) < 1.0, d, np.sign(d))


def offset_loss(pred_offset: np.ndarray, gt: TargetMaps) -> float:
    """Smooth-L1 between predicted and true sub-cell offsets at the peak cells.

    Summed over both offset components, averaged over the 4N corner cells.
    """
    pred_offset = np.asarray(pred_offset, dtype=np.float64)
    _check_same_shape(pred_offset, gt.offset, "pred offset vs gt offset")
    total = 0.0
    count = 0
    for obj in gt.objects:
        for i in range(4):
            row, col = obj.cells[i]
            d = pred_offset[i, :, row, col] - obj.subpixel[i]
            total += float(_smooth_l1(d).sum())
            count += 1
    return total / count if count else 0.0


def offset_loss_grad(pred_offset: np.ndarray, gt: TargetMaps) -> np.ndarray:
    pred_offset = np.asarray(pred_offset, dtype=np.float64)
    _check_same_shape(pred_offset, gt.offset, "pred offset vs gt offset")
    grad = np.zeros_like(pred_offset)
    count = 4 * len(gt.objects)
    if count == 0:
        return grad
    for obj in gt.objects:
        for i in range(4):
            row, col = obj.cells[i]
            d = pred_offset[i, :, row, col] - obj.subpixel[i]
            grad[i, :, row, col] += _smooth_l1_grad(d) / count
    return grad


def _object_embeddings(embed: np.ndarray, obj: ObjectCorners) -> np.ndarray:
    """The four corner embeddings e_i(k_i) of one object."""
    return embed[np.arange(4), obj.cells[:, 0], obj.cells[:, 1]].astype(np.float64)


def pull_loss(embed: np.ndarray, objects: Sequence[ObjectCorners]) -> float:
    """Mean squared deviation of each corner embedding from its object mean."""
    if not objects:
        return 0.0
    embed = np.asarray(embed)
    total = 0.0
    for obj in objects:
        e = _object_embeddings(embed, obj)
        total += float(((e - e.mean()) ** 2).sum())
    return total / len(objects)


def pull_loss_grad(embed: np.ndarray, objects: Sequence[ObjectCorners]) -> np.ndarray:
    embed = np.asarray(embed, dtype=np.float64)
    grad = np.zeros_like(embed)
    if not objects:
        return grad
    n = len(objects)
    for obj in objects:
        e = _object_embeddings(embed, obj)
        g = 2.0 * (e - e.mean()) / n
        for i in range(4):
            grad[i, obj.cells[i, 0], obj.cells[i, 1]] += g[i]
    return grad


def push_loss(embed: np.ndarray, objects: Sequence[ObjectCorners]) -> float:
    """Hinge penalty pushing object mean embeddings at least 1 apart.

    Averaged over the N(N-1) ordered pairs; 0 for fewer than two objects.
    """
    n = len(objects)
    if n <= 1:
        return 0.0
    embed = np.asarray(embed)
    means = np.array([_object_embeddings(embed, o).mean() for o in objects])
    total = 0.0
    for k in range(n):
        for j in range(k + 1, n):
            total += 2.0 * max(0.0, 1.0 - abs(means[k] - means[j]))
    return total / (n * (n - 1))


def push_loss_grad(embed: np.ndarray, objects: Sequence[ObjectCorners]) -> np.ndarray:
    embed = np.asarray(embed, dtype=np.float64)
    grad = np.zeros_like(embed)
    n = len(objects)
    if n <= 1:
        return grad
    means = np.array([_object_embeddings(embed, o).mean() for o in objects])
    dmean = np.zeros(n)
    for k in range(n):
        for j in range(k + 1, n):
            gap = means[k] - means[j]
            if abs(gap) < 1.0:
                s = np.sign(gap) if gap != 0.0 else 0.0
                dmean[k] += -2.0 * s / (n * (n - 1))
                dmean[j] += 2.0 * s / (n * (n - 1))
    for k, obj in enumerate(objects):
        for i in range(4):
            # each corner contributes 1/4 to its object mean
            grad[i, obj.cells[i, 0], obj.cells[i, 1]] += dmean[k] / 4.0
    return grad


def total_loss(pred: "NetworkOutput", gt: TargetMaps,
               w: LossWeights = LossWeights()) -> LossBreakdown:
    """Weighted combination of all components."""
    det = detection_loss(pred.heat, gt, alpha=w.alpha, beta=w.beta)
    off = offset_loss(pred.offset, gt)
    pull = pull_loss(pred.embed, gt.objects)
    push = push_loss(pred.embed, gt.objects)
    total = det + w.w_off * off + w.w_pull * pull + w.w_push * push
    return LossBreakdown(total=total, det=det, off=off, pull=pull, push=push)


# ---------------------------------------------------------------------------
# Finite-difference verification harness
# ---------------------------------------------------------------------------

_COMPONENTS = ("detection", "offset", "pull", "push")


def _fixture(seed: int, feat: int = 8):
    """Small random scene: a TargetMaps on a feat x feat map plus predictions
    sitting away from the clamp and kink boundaries."""
    rng = np.random.default_rng(seed)
    stride = 4
    img = feat * stride
    anns = []
    for k in range(2):
        x0 = 1.0 + 16.0 * k + rng.uniform(0, 2)
        y0 = 1.0 + rng.uniform(0, 2)
        x1 = x0 + 9.0 + rng.uniform(0, 1)
        y1 = y0 + 24.0 + rng.uniform(0, 1)
        anns.append(Annotation(0, Tetragon(
            Point2(x0, y0),
            Point2(x1, y0 + rng.uniform(0, 1)),
            Point2(x0 + rng.uniform(0, 1), y1),
            Point2(x1 + rng.uniform(0.5, 1.5), y1 + rng.uniform(0.5, 1.5)),
        )))
    gt = encode_targets(anns, num_classes=1, img_w=img, img_h=img, stride=stride)
    pred_heat = rng.uniform(0.1, 0.9, size=gt.heat.shape)
    pred_offset = rng.uniform(0.05, 0.85, size=gt.offset.shape)
    embed = rng.uniform(0.0, 0.4, size=(4,) + gt.feat_shape)
    # keep object means well inside the hinge and apart from each other
    for k, obj in enumerate(gt.objects):
        for i in range(4):
            embed[i, obj.cells[i, 0], obj.cells[i, 1]] = 0.3 * k + rng.uniform(0, 0.05)
    return gt, pred_heat, pred_offset, embed


def gradient_check(component: str, seed: int = 0, h: float = 1e-3,
                   n_coords: int = 32) -> float:
    """Max relative error between the analytic gradient and central differences.

    Relative error is |analytic - numeric| / max(1e-8, |numeric|), maximized
    over sampled coordinates (always including every object peak cell).
    """
    if component not in _COMPONENTS:
        raise ValueError(f"unknown loss component {component!r}")
    gt, pred_heat, pred_offset, embed = _fixture(seed)
    if component == "detection":
        x = pred_heat
        f = lambda v: detection_loss(v, gt)
        g = detection_loss_grad(x, gt)
    elif component == "offset":
        x = pred_offset
        f = lambda v: offset_loss(v, gt)
        g = offset_loss_grad(x, gt)
    elif component == "pull":
        x = embed
        f = lambda v: pull_loss(v, gt.objects)
        g = pull_loss_grad(x, gt.objects)
    else:
        x = embed
        f = lambda v: push_loss(v, gt.objects)
        g = push_loss_grad(x, gt.objects)

    rng = np.random.default_rng(seed + 101)
    flat_coords = set(rng.integers(0, x.size, size=n_coords).tolist())
    for obj in gt.objects:   # peak cells carry the structured gradients
        for i in range(4):
            row, col = obj.cells[i]
            if component == "detection":
                flat_coords.add(int(np.ravel_multi_index((i, obj.class_id, row, col), x.shape)))
            elif component == "offset":
                flat_coords.add(int(np.ravel_multi_index((i, 0, row, col), x.shape)))
                flat_coords.add(int(np.ravel_multi_index((i, 1, row, col), x.shape)))
            else:
                flat_coords.add(int(np.ravel_multi_index((i, row, col), x.shape)))

    worst = 0.0
    xb = x.copy()
    flat = xb.ravel()
    for idx in sorted(flat_coords):
        orig = flat[idx]
        flat[idx] = orig + h
        fp = f(xb)
        flat[idx] = orig - h
        fm = f(xb)
        flat[idx] = orig
        numeric = (fp - fm) / (2.0 * h)
        analytic = g.ravel()[idx]
        err = abs(analytic - numeric) / max(1e-8, abs(numeric))
        worst = max(worst, err)
    return worst
