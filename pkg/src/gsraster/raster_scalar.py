"""Baseline tile rasterizer: every pixel of a tile walks the tile's depth-sorted list."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .binning import GroupConfig, SortedGroupLists
from .errors import ConfigError
from .kernel import (
    DEFAULT_CONSTANTS,
    F32,
    PixelState,
    PrecisionMode,
    RasterConstants,
    alpha_of,
    alpha_values,
    basis_terms,
    blend,
    blend_step,
    paste_tile,
    power_from_basis,
    power_scalar,
    stage_operands,
    tile_pixels,
)
from .metrics import OpReport
from .projection import ProjectedGaussians
from .scene import Camera, ImageBuffer

__all__ = [
    "PixelState",
    "RasterConstants",
    "alpha_of",
    "blend",
    "power_scalar",
    "rasterize_tiles_scalar",
]


def _render_tile(tile_id, lists, ops, cfg, k):
    ty, tx = divmod(tile_id, cfg.tiles_x)
    px, py, inside = tile_pixels(tx, ty, cfg.width, cfg.height)
    T = np.ones(len(px), F32)
    accum = np.zeros((len(px), 3), F32)
    done = ~inside
    rows = lists.group(tile_id).gaussian_index.astype(np.int64)
    loads = 0
    for g in rows:
        if done.all():
            break
        loads += 1
        xx, xy, yy = basis_terms(px, py, ops.mean[g : g + 1], ops.mode)
        power = power_from_basis(ops.coeffs[g : g + 1], xx, xy, yy)[0]
        alpha, keep = alpha_values(power, ops.opacity[g], k)
        T, accum, done = blend_step(T, accum, done, alpha, keep, ops.color[g], k)
    return tx, ty, accum, loads


def rasterize_tiles_scalar(
    lists: SortedGroupLists,
    projected: ProjectedGaussians,
    cam: Camera,
    k: RasterConstants = DEFAULT_CONSTANTS,
    mode: PrecisionMode = PrecisionMode.FP32,
    workers: int = 1,
    report: OpReport | None = None,
) -> ImageBuffer:
    cfg = GroupConfig(cam.width, cam.height, 1, 1)
    if lists.n_groups != cfg.n_groups or np.any(lists.entries.mask != 1):
        raise ConfigError("the scalar rasterizer needs per-tile (1x1 group) lists")
    ops = stage_operands(projected, PrecisionMode(mode))
    image = ImageBuffer(cam.width, cam.height)

    def work(tile_id):
        return _render_tile(tile_id, lists, ops, cfg, k)

    tiles = range(cfg.n_groups)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, tiles))
    else:
        results = [work(t) for t in tiles]

    loads = 0
    for tx, ty, accum, n in results:
        paste_tile(image.rgb, tx, ty, accum)
        loads += n
    if report is not None:
        report.entry_loads += loads
    return image
