"""Heat/embedding overlay rendering.

Cells with heat below the threshold render black; everywhere else the color
encodes the embedding value, min-max normalized over the whole map and passed
through a rainbow colormap (blue = low, red = high).
"""

from __future__ import annotations

import numpy as np

__all__ = ["rainbow", "render_heat_embedding"]

HEAT_THRESHOLD = 0.1


def rainbow(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB uint8 via an HSV hue sweep (blue to red)."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    hue = (1.0 - v) * (2.0 / 3.0)   # 2/3 (blue) down to 0 (red)
    h6 = hue * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    # s = v = 1: rgb channels are piecewise in f
    one = np.ones_like(f)
    q = 1.0 - f
    lut_r = np.stack([one, q, 0 * f, 0 * f, f, one])
    lut_g = np.stack([f, one, one, q, 0 * f, 0 * f])
    lut_b = np.stack([0 * f, 0 * f, f, one, one, q])
    take = lambda lut: np.take_along_axis(lut, i[None], axis=0)[0]
    rgb = np.stack([take(lut_r), take(lut_g), take(lut_b)])
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def render_heat_embedding(heat: np.ndarray, embed: np.ndarray,
                          threshold: float = HEAT_THRESHOLD,
                          scale: int = 1) -> np.ndarray:
    """Render one (Hf, Wf) heat map and its embedding map to (3, H, W) uint8."""
    heat = np.asarray(heat, dtype=np.float64)
    embed = np.asarray(embed, dtype=np.float64)
    if heat.shape != embed.shape:
        raise ValueError(f"heat {heat.shape} vs embed {embed.shape}")
    lo, hi = embed.min(), embed.max()
    norm = (embed - lo) / (hi - lo) if hi > lo else np.full_like(embed, 0.5)
    rgb = rainbow(norm)
    rgb = np.where(heat[None] < threshold, 0, rgb).astype(np.uint8)
    if scale > 1:
        rgb = np.repeat(np.repeat(rgb, scale, axis=1), scale, axis=2)
    return rgb
