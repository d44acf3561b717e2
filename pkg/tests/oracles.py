"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import bisect
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

F32 = np.float32


@lru_cache(maxsize=1)
def _half_lattice():
    """Every finite non-negative binary16 value paired with its bit pattern, ascending."""
    vals = []
    for e in range(31):
        for m in range(1024):
            bits = (e << 10) | m
            v = Fraction(m, 1 << 24) if e == 0 else Fraction(1024 + m, 1024) * Fraction(2) ** (e - 15)
            vals.append((v, bits))
    return [v for v, _ in vals], [b for _, b in vals]


def lattice_round_to_half(x: float) -> int:
    """Round-to-nearest-even onto the binary16 lattice by direct search."""
    x32 = F32(x)
    if math.isnan(x32):
        return 0x7E00
    sign = 0x8000 if math.copysign(1.0, float(x32)) < 0 else 0
    if math.isinf(x32):
        return sign | 0x7C00
    ax = abs(Fraction(float(x32)))
    values, bits = _half_lattice()
    # beyond the largest finite value the next lattice point would be 2**16
    top = values[-1]
    if ax >= top + (Fraction(2**16) - top) / 2:
        return sign | 0x7C00
    i = bisect.bisect_left(values, ax)
    if i < len(values) and values[i] == ax:
        return sign | bits[i]
    lo, hi = i - 1, i
    if hi >= len(values):
        return sign | bits[lo]
    dlo, dhi = ax - values[lo], values[hi] - ax
    if dlo < dhi or (dlo == dhi and bits[lo] % 2 == 0):
        return sign | bits[lo]
    return sign | bits[hi]


def reference_render(projected, width, height, alpha_skip=1 / 255, alpha_clamp=0.99, t_term=1e-4, tile=16):
    """Per-pixel renderer with no lists, bins or sorting keys.

    Every pixel walks all splats in (depth, index) order. A splat is considered
    for a pixel when its [mean - radius, mean + radius] box reaches the 16x16
    screen cell containing the pixel; that is the footprint the baseline assigns.
    """
    order = sorted(range(len(projected)), key=lambda i: (float(projected.depth[i]), i))
    out = np.zeros((height, width, 3), F32)
    half = F32(0.5)
    for y in range(height):
        cy0 = (y // tile) * tile
        for x in range(width):
            cx0 = (x // tile) * tile
            T = F32(1.0)
            acc = [F32(0.0)] * 3
            for i in order:
                mx, my = (float(v) for v in projected.mean2d[i])
                r = float(projected.radius[i])
                if not (mx - r < cx0 + tile and mx + r >= cx0 and my - r < cy0 + tile and my + r >= cy0):
                    continue
                a, b, c = (F32(v) for v in projected.conic[i])
                dx = F32(x) - F32(mx)
                dy = F32(y) - F32(my)
                power = ((-(half * a)) * (dx * dx) + (-b) * (dx * dy)) + (-(half * c)) * (dy * dy)
                if power > 0:
                    power = F32(0.0)
                alpha = min(F32(alpha_clamp), F32(projected.opacity[i]) * np.exp(F32(power)))
                if not alpha >= F32(alpha_skip):
                    continue
                w = T * alpha
                acc = [acc[ch] + w * F32(projected.color[i][ch]) for ch in range(3)]
                T = T * (F32(1.0) - alpha)
                if T < F32(t_term):
                    break
            out[y, x] = acc
    return np.clip(out, 0, 1)


def mask_bits_brute(projected, i, group_id, cfg):
    """Mask of group ``group_id`` for splat ``i`` from per-tile rectangle tests."""
    gy, gx = divmod(group_id, cfg.groups_x)
    mx, my = (float(v) for v in projected.mean2d[i])
    r = float(projected.radius[i])
    mask = 0
    for row in range(cfg.group_h):
        for col in range(cfg.group_w):
            tx, ty = gx * cfg.group_w + col, gy * cfg.group_h + row
            if tx >= cfg.tiles_x or ty >= cfg.tiles_y:
                continue
            x0, y0 = tx * cfg.tile_size, ty * cfg.tile_size
            if mx - r < x0 + cfg.tile_size and mx + r >= x0 and my - r < y0 + cfg.tile_size and my + r >= y0:
                mask |= 1 << (row * cfg.group_w + col)
    return mask
