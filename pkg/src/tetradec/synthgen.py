"""Deterministic synthetic scenes and simulated network outputs.

Scenes are axis-aligned rectangles whose corners are displaced by bounded
random amounts (any such displacement is realizable by a homography), then
rejection-sampled for validity, bounds, area, and mutual separation so that a
zero-noise simulate -> decode round trip is exact. All randomness comes from
numpy's PCG64 generator seeded from the config, so outputs are reproducible
bit-for-bit for a fixed numpy version; scene k of a benchmark conventionally
uses seed = base_seed + k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import NetworkOutput
from .errors import ConfigInfeasible
from .geometry import Tetragon, area, is_valid, tetragon_iou
from .gt_encoder import Annotation, encode_targets, splat_gaussian

__all__ = ["SceneConfig", "NoiseConfig", "generate_scene", "simulate_output",
           "EMBED_SPACING", "BACKGROUND_EMBED_RANGE"]

# Object k gets embedding k * EMBED_SPACING: above the unit push margin, so
# noise-free scenes group perfectly.
EMBED_SPACING = 1.5
BACKGROUND_EMBED_RANGE = 10.0
MAX_REJECTIONS = 1000
DISTRACTOR_RADIUS = 3


@dataclass
class SceneConfig:
    img_w: int = 512
    img_h: int = 512
    n_objects: tuple[int, int] = (1, 4)
    warp_strength: float = 0.15
    min_area: float = 400.0
    seed: int = 0
    num_classes: int = 1
    # separation keeps decoding of noise-free scenes unambiguous
    max_pair_iou: float = 0.3
    min_corner_sep: float = 12.0
    margin: float = 4.0


@dataclass
class NoiseConfig:
    heat_sigma: float = 0.0
    embed_sigma: float = 0.0
    offset_sigma: float = 0.0
    n_distractor_peaks: int = 0
    seed: int = 0


def _sample_tetragon(rng: np.random.Generator, cfg: SceneConfig) -> Tetragon:
    side_min = max(8.0, np.sqrt(cfg.min_area))
    wmax = max(side_min + 1.0, 0.45 * cfg.img_w)
    hmax = max(side_min + 1.0, 0.45 * cfg.img_h)
    w = rng.uniform(side_min, wmax)
    h = rng.uniform(side_min, hmax)
    pad = cfg.margin + cfg.warp_strength * max(w, h)
    if cfg.img_w - w - 2 * pad <= 0 or cfg.img_h - h - 2 * pad <= 0:
        # rectangle plus warp headroom does not fit; let rejection handle it
        x0 = y0 = pad
    else:
        x0 = rng.uniform(pad, cfg.img_w - w - pad)
        y0 = rng.uniform(pad, cfg.img_h - h - pad)
    base = np.array([[x0, y0], [x0 + w, y0], [x0, y0 + h], [x0 + w, y0 + h]])
    jitter = np.stack([
        rng.uniform(-cfg.warp_strength * w, cfg.warp_strength * w, size=4),
        rng.uniform(-cfg.warp_strength * h, cfg.warp_strength * h, size=4),
    ], axis=1) if cfg.warp_strength > 0 else np.zeros((4, 2))
    return Tetragon.from_corner_array(base + jitter)


def _separated(t: Tetragon, placed: list[Tetragon], cfg: SceneConfig) -> bool:
    ca = t.corner_array()
    for other in placed:
        if tetragon_iou(t, other) > cfg.max_pair_iou:
            return False
        gaps = np.linalg.norm(ca - other.corner_array(), axis=1)
        if gaps.min() < cfg.min_corner_sep:
            return False
    return True


def generate_scene(cfg: SceneConfig) -> list[Annotation]:
    """Random valid tetragon scene; deterministic for a given config."""
    lo, hi = cfg.n_objects
    if lo < 0 or hi < lo:
        raise ValueError(f"bad n_objects range {cfg.n_objects}")
    rng = np.random.default_rng(cfg.seed)
    n = int(rng.integers(lo, hi + 1))
    anns: list[Annotation] = []
    placed: list[Tetragon] = []
    rejections = 0
    while len(anns) < n:
        t = _sample_tetragon(rng, cfg)
        ok = (
            is_valid(*t.corners())
            and all(0.0 <= p.x < cfg.img_w and 0.0 <= p.y < cfg.img_h
                    for p in t.corners())
            and area(t) >= cfg.min_area
            and _separated(t, placed, cfg)
        )
        if not ok:
            rejections += 1
            if rejections >= MAX_REJECTIONS:
                raise ConfigInfeasible(
                    f"gave up after {rejections} rejected samples for {cfg}")
            continue
        class_id = int(rng.integers(0, cfg.num_classes))
        anns.append(Annotation(class_id, t))
        placed.append(t)
    return anns


def simulate_output(anns: list[Annotation], noise: NoiseConfig,
                    num_classes: int, img_w: int, img_h: int,
                    stride: int = 4) -> NetworkOutput:
    """Simulated network output for a scene.

    With all sigmas zero and no distractors the heat and offset maps equal the
    encoded targets exactly. Object k's four corner cells carry embedding
    k * 1.5; background embedding cells are uniform in [-10, 10]. Distractor
    peaks are Gaussian bumps (peak height uniform in [0.2, 0.6]) at random
    cells of random type/class maps.
    """
    tm = encode_targets(anns, num_classes, img_w, img_h, stride)
    rng = np.random.default_rng(noise.seed)
    hf, wf = tm.feat_shape

    heat = tm.heat.copy()
    if noise.heat_sigma > 0:
        heat = heat + rng.normal(0.0, noise.heat_sigma, size=heat.shape)
    heat = np.clip(heat, 0.0, 1.0).astype(np.float32)
    for _ in range(noise.n_distractor_peaks):
        i = int(rng.integers(0, 4))
        c = int(rng.integers(0, num_classes))
        row = int(rng.integers(0, hf))
        col = int(rng.integers(0, wf))
        peak = float(rng.uniform(0.2, 0.6))
        splat_gaussian(heat[i, c], row, col, DISTRACTOR_RADIUS, peak=peak)

    embed = rng.uniform(-BACKGROUND_EMBED_RANGE, BACKGROUND_EMBED_RANGE,
                        size=(4, hf, wf))
    for k, obj in enumerate(tm.objects):
        for i in range(4):
            value = k * EMBED_SPACING
            if noise.embed_sigma > 0:
                value += rng.normal(0.0, noise.embed_sigma)
            embed[i, obj.cells[i, 0], obj.cells[i, 1]] = value

    offset = tm.offset.copy()
    if noise.offset_sigma > 0:
        offset = (offset + rng.normal(0.0, noise.offset_sigma,
                                      size=offset.shape)).astype(np.float32)

    return NetworkOutput(heat=heat, embed=embed.astype(np.float32),
                         offset=offset, stride=stride)
